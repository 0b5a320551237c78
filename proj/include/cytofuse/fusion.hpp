#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cytofuse/probmap.hpp"

namespace cytofuse {

// Fuzzy membership functions of a class probability p in [0, 1].
//
//   tanh membership:        1 - tanh((p - 1)^2 / 2)        in [1 - tanh(0.5), 1]
//   exponential membership: 1 - exp(-(p - 1)^2 / 2)        in [0, 1 - e^-0.5]
//   rank score:             product of the two             in [0, fuzzy_rank_score_max()]
//
// The rank score is strictly decreasing in p, zero exactly at p = 1 and
// largest at p = 0, so a confident class gets a small score.
double fuzzy_tanh_membership(double p);
double fuzzy_exp_membership(double p);
double fuzzy_rank_score(double p);

// Rank score at p = 0: (1 - tanh 0.5) * (1 - e^-0.5).
double fuzzy_rank_score_max();

// Per-model membership tensors (each H x W x C, class axis fastest).
struct FuzzyRankScores {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t num_classes = 0;
  std::vector<double> tanh_rank;  // r1
  std::vector<double> exp_rank;   // r2
  std::vector<double> rank_score; // r1 * r2
};

FuzzyRankScores compute_fuzzy_ranks(const ProbMap& map);

enum class FusionRule { kFuzzyRank, kAverage, kGeometric, kMedian, kMax, kMin, kBorda, kMajority };

inline constexpr std::array<FusionRule, 8> kAllFusionRules = {
    FusionRule::kFuzzyRank, FusionRule::kAverage, FusionRule::kGeometric, FusionRule::kMedian,
    FusionRule::kMax,       FusionRule::kMin,     FusionRule::kBorda,     FusionRule::kMajority};

// Column order of comparison tables: the six classical rules followed by
// fuzzy rank voting. Majority voting is available but opt-in.
inline constexpr std::array<FusionRule, 7> kComparisonRules = {
    FusionRule::kAverage, FusionRule::kGeometric, FusionRule::kMedian, FusionRule::kMax,
    FusionRule::kMin,     FusionRule::kBorda,     FusionRule::kFuzzyRank};

// CLI names: fuzzy, avg, geo, median, max, min, borda, majority.
std::string_view rule_name(FusionRule rule);
std::optional<FusionRule> parse_rule(std::string_view name);
// Table column header, e.g. "Fuzzy Rank based Voting".
std::string_view rule_title(FusionRule rule);

struct FusionResult {
  FusedScoreMap scores;
  LabelMask labels;
};

// fs_k = sum_j fuzzy_rank_score(P_k^j); label = argmin_k fs_k.
FusionResult fuse_fuzzy_rank(const ModelStack& stack);
// Mean of class probabilities; label = argmax.
FusionResult fuse_average(const ModelStack& stack);
// Product of class probabilities (no 1/N factor; it cannot move the argmax).
FusionResult fuse_geometric(const ModelStack& stack);
// Median over models; even N takes the mean of the two middle values.
FusionResult fuse_median(const ModelStack& stack);
FusionResult fuse_max(const ModelStack& stack);
FusionResult fuse_min(const ModelStack& stack);
// v_k = sum_j (C - rank_k^j), ranks 1-based by descending probability, equal
// probabilities ranked in ascending class order.
FusionResult fuse_borda(const ModelStack& stack);

// Per-class counts of models whose argmax is that class.
FusedScoreMap majority_votes(const ModelStack& stack);
// Modal per-model argmax label; vote ties go to the lowest class index.
LabelMask fuse_majority(const ModelStack& stack);

// Score map behind any rule (vote counts for majority).
FusionResult fuse_with_scores(FusionRule rule, const ModelStack& stack);
LabelMask fuse(FusionRule rule, const ModelStack& stack);

}  // namespace cytofuse
