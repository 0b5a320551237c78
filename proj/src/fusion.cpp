#include "cytofuse/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "cytofuse/error.hpp"

namespace cytofuse {

namespace {

double half_squared_gap(double p) {
  const double gap = p - 1.0;
  return gap * gap * 0.5;
}

// Applies `combine` to the N values of each (pixel, class) cell, gathered in
// model order, and returns the resulting score map.
template <typename Combine>
FusedScoreMap reduce_over_models(const ModelStack& stack, Decision decision, Combine combine) {
  const std::size_t n = stack.size();
  const std::size_t c = stack.num_classes();
  const std::size_t pixels = stack.pixel_count();
  std::vector<const float*> bases(n);
  for (std::size_t j = 0; j < n; ++j) bases[j] = stack[j].data().data();

  std::vector<double> scores(pixels * c);
  std::vector<double> column(n);
  for (std::size_t cell = 0; cell < pixels * c; ++cell) {
    for (std::size_t j = 0; j < n; ++j) column[j] = bases[j][cell];
    scores[cell] = combine(std::span<double>(column));
  }
  return FusedScoreMap(stack.height(), stack.width(), c, std::move(scores), decision);
}

FusionResult decided(FusedScoreMap scores) {
  LabelMask labels = argmax_decide(scores);
  return FusionResult{std::move(scores), std::move(labels)};
}

}  // namespace

double fuzzy_tanh_membership(double p) { return 1.0 - std::tanh(half_squared_gap(p)); }

double fuzzy_exp_membership(double p) { return -std::expm1(-half_squared_gap(p)); }

double fuzzy_rank_score(double p) {
  // With e = exp(-x): 1 - tanh(x) = 2e^2 / (1 + e^2) and 1 - exp(-x) = -expm1(-x),
  // so one transcendental call yields both memberships.
  const double em1 = std::expm1(-half_squared_gap(p));
  const double e = 1.0 + em1;
  const double e2 = e * e;
  return (2.0 * e2 / (1.0 + e2)) * -em1;
}

double fuzzy_rank_score_max() { return fuzzy_tanh_membership(0.0) * fuzzy_exp_membership(0.0); }

FuzzyRankScores compute_fuzzy_ranks(const ProbMap& map) {
  FuzzyRankScores out;
  out.height = map.height();
  out.width = map.width();
  out.num_classes = map.num_classes();
  const auto data = map.data();
  out.tanh_rank.resize(data.size());
  out.exp_rank.resize(data.size());
  out.rank_score.resize(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    out.tanh_rank[i] = fuzzy_tanh_membership(data[i]);
    out.exp_rank[i] = fuzzy_exp_membership(data[i]);
    out.rank_score[i] = fuzzy_rank_score(data[i]);
  }
  return out;
}

std::string_view rule_name(FusionRule rule) {
  switch (rule) {
    case FusionRule::kFuzzyRank: return "fuzzy";
    case FusionRule::kAverage: return "avg";
    case FusionRule::kGeometric: return "geo";
    case FusionRule::kMedian: return "median";
    case FusionRule::kMax: return "max";
    case FusionRule::kMin: return "min";
    case FusionRule::kBorda: return "borda";
    case FusionRule::kMajority: return "majority";
  }
  return "?";
}

std::optional<FusionRule> parse_rule(std::string_view name) {
  for (FusionRule rule : kAllFusionRules) {
    if (rule_name(rule) == name) return rule;
  }
  return std::nullopt;
}

std::string_view rule_title(FusionRule rule) {
  switch (rule) {
    case FusionRule::kFuzzyRank: return "Fuzzy Rank based Voting";
    case FusionRule::kAverage: return "Average Probability";
    case FusionRule::kGeometric: return "Geometric Mean";
    case FusionRule::kMedian: return "Median";
    case FusionRule::kMax: return "Maxrule";
    case FusionRule::kMin: return "Minrule";
    case FusionRule::kBorda: return "BC-Rule";
    case FusionRule::kMajority: return "Majority Voting";
  }
  return "?";
}

FusionResult fuse_fuzzy_rank(const ModelStack& stack) {
  const std::size_t n = stack.size();
  const std::size_t cells = stack.pixel_count() * stack.num_classes();
  std::vector<double> scores(cells, 0.0);
  // Model-major accumulation keeps the summation order per cell equal to
  // manifest order while streaming each map once.
  for (std::size_t j = 0; j < n; ++j) {
    const float* probs = stack[j].data().data();
    for (std::size_t cell = 0; cell < cells; ++cell) scores[cell] += fuzzy_rank_score(probs[cell]);
  }
  return decided(FusedScoreMap(stack.height(), stack.width(), stack.num_classes(),
                               std::move(scores), Decision::kMinimize));
}

FusionResult fuse_average(const ModelStack& stack) {
  const double n = static_cast<double>(stack.size());
  return decided(reduce_over_models(stack, Decision::kMaximize, [n](std::span<double> v) {
    double sum = 0.0;
    for (double x : v) sum += x;
    return sum / n;
  }));
}

FusionResult fuse_geometric(const ModelStack& stack) {
  return decided(reduce_over_models(stack, Decision::kMaximize, [](std::span<double> v) {
    double product = 1.0;
    for (double x : v) product *= x;
    return product;
  }));
}

FusionResult fuse_median(const ModelStack& stack) {
  return decided(reduce_over_models(stack, Decision::kMaximize, [](std::span<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t mid = v.size() / 2;
    return v.size() % 2 == 1 ? v[mid] : (v[mid - 1] + v[mid]) / 2.0;
  }));
}

FusionResult fuse_max(const ModelStack& stack) {
  return decided(reduce_over_models(stack, Decision::kMaximize, [](std::span<double> v) {
    return *std::max_element(v.begin(), v.end());
  }));
}

FusionResult fuse_min(const ModelStack& stack) {
  return decided(reduce_over_models(stack, Decision::kMaximize, [](std::span<double> v) {
    return *std::min_element(v.begin(), v.end());
  }));
}

FusionResult fuse_borda(const ModelStack& stack) {
  const std::size_t n = stack.size();
  const std::size_t c = stack.num_classes();
  const std::size_t pixels = stack.pixel_count();
  std::vector<double> votes(pixels * c, 0.0);
  for (std::size_t i = 0; i < pixels; ++i) {
    double* v = votes.data() + i * c;
    for (std::size_t j = 0; j < n; ++j) {
      const auto px = stack[j].pixel(i);
      for (std::size_t k = 0; k < c; ++k) {
        // 1-based rank: classes strictly more probable, plus equally probable
        // classes with a lower index, come first.
        std::size_t rank = 1;
        for (std::size_t other = 0; other < c; ++other) {
          if (px[other] > px[k] || (px[other] == px[k] && other < k)) ++rank;
        }
        v[k] += static_cast<double>(c - rank);
      }
    }
  }
  return decided(FusedScoreMap(stack.height(), stack.width(), c, std::move(votes),
                               Decision::kMaximize));
}

FusedScoreMap majority_votes(const ModelStack& stack) {
  const std::size_t c = stack.num_classes();
  const std::size_t pixels = stack.pixel_count();
  std::vector<double> votes(pixels * c, 0.0);
  for (std::size_t j = 0; j < stack.size(); ++j) {
    const LabelMask choice = argmax_labels(stack[j]);
    const auto labels = choice.labels();
    for (std::size_t i = 0; i < pixels; ++i) votes[i * c + labels[i]] += 1.0;
  }
  return FusedScoreMap(stack.height(), stack.width(), c, std::move(votes), Decision::kMaximize);
}

LabelMask fuse_majority(const ModelStack& stack) { return argmax_decide(majority_votes(stack)); }

FusionResult fuse_with_scores(FusionRule rule, const ModelStack& stack) {
  switch (rule) {
    case FusionRule::kFuzzyRank: return fuse_fuzzy_rank(stack);
    case FusionRule::kAverage: return fuse_average(stack);
    case FusionRule::kGeometric: return fuse_geometric(stack);
    case FusionRule::kMedian: return fuse_median(stack);
    case FusionRule::kMax: return fuse_max(stack);
    case FusionRule::kMin: return fuse_min(stack);
    case FusionRule::kBorda: return fuse_borda(stack);
    case FusionRule::kMajority: return decided(majority_votes(stack));
  }
  throw ValidationError("unknown fusion rule");
}

LabelMask fuse(FusionRule rule, const ModelStack& stack) {
  if (rule == FusionRule::kMajority) return fuse_majority(stack);
  return std::move(fuse_with_scores(rule, stack).labels);
}

}  // namespace cytofuse
