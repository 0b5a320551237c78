#include "cytofuse/probmap.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <utility>

#include <fmt/core.h>

#include "cytofuse/error.hpp"

namespace cytofuse {

ClassSet::ClassSet(std::vector<std::string> names, std::optional<std::vector<Rgb>> palette)
    : names_(std::move(names)), palette_(std::move(palette)) {
  const std::size_t c = names_.size();
  if (c < 2 || c > kMaxClasses) {
    throw ValidationError(fmt::format("class count must be in [2, {}], got {}", kMaxClasses, c));
  }
  std::set<std::string> seen;
  for (const auto& name : names_) {
    if (name.empty()) throw ValidationError("class names must be non-empty");
    if (!seen.insert(name).second) {
      throw ValidationError(fmt::format("duplicate class name '{}'", name));
    }
  }
  if (palette_) {
    if (palette_->size() != c) {
      throw ValidationError(
          fmt::format("palette has {} colors for {} classes", palette_->size(), c));
    }
    for (std::size_t i = 0; i < c; ++i) {
      for (std::size_t j = i + 1; j < c; ++j) {
        if ((*palette_)[i] == (*palette_)[j]) {
          throw ValidationError(fmt::format("palette colors of classes {} and {} coincide", i, j));
        }
      }
    }
  }
}

ClassSet ClassSet::numbered(std::size_t num_classes) {
  std::vector<std::string> names;
  names.reserve(num_classes);
  for (std::size_t k = 0; k < num_classes; ++k) names.push_back(fmt::format("class_{}", k));
  return ClassSet(std::move(names));
}

std::string ValidationReport::summary(std::size_t max_listed) const {
  if (violations.empty()) return "ok";
  std::string out = fmt::format("{} pixel(s) violate the probability simplex:", violations.size());
  const std::size_t shown = std::min(max_listed, violations.size());
  for (std::size_t i = 0; i < shown; ++i) {
    const auto& v = violations[i];
    out += fmt::format(" ({}, {}) deviation {:.6g};", v.pixel.row, v.pixel.col, v.deviation);
  }
  if (shown < violations.size()) out += fmt::format(" ... {} more", violations.size() - shown);
  return out;
}

ValidationReport validate_probmap(std::size_t height, std::size_t width,
                                  std::size_t num_classes, std::span<const float> data) {
  ValidationReport report;
  if (num_classes == 0 || data.size() != height * width * num_classes) {
    // Nothing sensible to report per pixel; flag the origin.
    report.violations.push_back({{0, 0}, std::numeric_limits<double>::infinity()});
    return report;
  }
  for (std::size_t i = 0; i < height * width; ++i) {
    const auto px = data.subspan(i * num_classes, num_classes);
    double sum = 0.0;
    double worst_range = 0.0;
    bool finite = true;
    for (float value : px) {
      const double p = value;
      if (!std::isfinite(p)) {
        finite = false;
        break;
      }
      sum += p;
      if (p < 0.0) worst_range = std::max(worst_range, -p);
      if (p > 1.0) worst_range = std::max(worst_range, p - 1.0);
    }
    double deviation = 0.0;
    bool bad = false;
    if (!finite) {
      deviation = std::numeric_limits<double>::infinity();
      bad = true;
    } else {
      const double sum_dev = std::abs(sum - 1.0);
      deviation = std::max(sum_dev, worst_range);
      bad = sum_dev > kSimplexTol || worst_range > kSimplexTol;
    }
    if (bad) report.violations.push_back({{i / width, i % width}, deviation});
  }
  return report;
}

ValidationReport validate_probmap(const ProbMap& map) {
  return validate_probmap(map.height(), map.width(), map.num_classes(), map.data());
}

ProbMap::ProbMap(std::size_t height, std::size_t width, std::size_t num_classes,
                 std::vector<float> data)
    : height_(height), width_(width), num_classes_(num_classes), data_(std::move(data)) {
  if (num_classes_ < 2 || num_classes_ > kMaxClasses) {
    throw ValidationError(
        fmt::format("class count must be in [2, {}], got {}", kMaxClasses, num_classes_));
  }
  if (height_ == 0 || width_ == 0) {
    throw ValidationError(fmt::format("probability map has zero area ({}x{})", height_, width_));
  }
  if (data_.size() != height_ * width_ * num_classes_) {
    throw ValidationError(fmt::format("probability map of shape ({}, {}, {}) needs {} values, got {}",
                                      height_, width_, num_classes_,
                                      height_ * width_ * num_classes_, data_.size()));
  }
  const auto report = validate_probmap(height_, width_, num_classes_, data_);
  if (!report.ok()) throw ValidationError(report.summary(10));
  for (float& v : data_) v = std::clamp(v, 0.0f, 1.0f);
}

LabelMask::LabelMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> labels)
    : height_(height), width_(width), labels_(std::move(labels)) {
  if (labels_.size() != height_ * width_) {
    throw ValidationError(fmt::format("mask of {}x{} needs {} labels, got {}", height_, width_,
                                      height_ * width_, labels_.size()));
  }
}

LabelMask::LabelMask(std::size_t height, std::size_t width)
    : height_(height), width_(width), labels_(height * width, 0) {}

std::optional<std::uint8_t> LabelMask::max_label() const {
  if (labels_.empty()) return std::nullopt;
  return *std::max_element(labels_.begin(), labels_.end());
}

FusedScoreMap::FusedScoreMap(std::size_t height, std::size_t width, std::size_t num_classes,
                             std::vector<double> scores, Decision decision)
    : height_(height),
      width_(width),
      num_classes_(num_classes),
      scores_(std::move(scores)),
      decision_(decision) {
  if (scores_.size() != height_ * width_ * num_classes_) {
    throw ValidationError(fmt::format("score map of shape ({}, {}, {}) needs {} values, got {}",
                                      height_, width_, num_classes_,
                                      height_ * width_ * num_classes_, scores_.size()));
  }
  for (std::size_t i = 0; i < scores_.size(); ++i) {
    if (!std::isfinite(scores_[i])) {
      throw ValidationError(fmt::format("non-finite fused score at flat index {}", i));
    }
  }
}

std::vector<double> softmax(std::span<const double> logits) {
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!std::isfinite(logits[i])) {
      throw ValidationError(fmt::format("softmax input {} is not finite", i));
    }
  }
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - peak);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

std::size_t decide(std::span<const double> scores, Decision decision) {
  std::size_t best = 0;
  if (decision == Decision::kMaximize) {
    for (std::size_t k = 1; k < scores.size(); ++k) {
      if (scores[k] > scores[best]) best = k;
    }
  } else {
    for (std::size_t k = 1; k < scores.size(); ++k) {
      if (scores[k] < scores[best]) best = k;
    }
  }
  return best;
}

LabelMask argmax_decide(const FusedScoreMap& scores) {
  std::vector<std::uint8_t> labels(scores.pixel_count());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    labels[i] = static_cast<std::uint8_t>(decide(scores.pixel(i), scores.decision()));
  }
  return LabelMask(scores.height(), scores.width(), std::move(labels));
}

LabelMask argmax_labels(const ProbMap& map) {
  std::vector<std::uint8_t> labels(map.pixel_count());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto px = map.pixel(i);
    std::size_t best = 0;
    for (std::size_t k = 1; k < px.size(); ++k) {
      if (px[k] > px[best]) best = k;
    }
    labels[i] = static_cast<std::uint8_t>(best);
  }
  return LabelMask(map.height(), map.width(), std::move(labels));
}

ModelStack ModelStack::select(std::span<const std::size_t> indices) const {
  std::vector<NamedProbMap> picked;
  picked.reserve(indices.size());
  for (std::size_t j : indices) {
    if (j >= models_.size()) {
      throw ValidationError(fmt::format("model index {} out of range ({} models)", j, models_.size()));
    }
    picked.push_back(models_[j]);
  }
  return stack_models(std::move(picked));
}

ModelStack stack_models(std::vector<NamedProbMap> maps) {
  if (maps.empty()) throw ValidationError("model stack needs at least one probability map");
  for (const auto& m : maps) {
    if (!m.map) throw ValidationError(fmt::format("model '{}' has no probability map", m.name));
  }
  const ProbMap& first = *maps.front().map;
  for (std::size_t j = 1; j < maps.size(); ++j) {
    const ProbMap& other = *maps[j].map;
    if (other.height() != first.height() || other.width() != first.width() ||
        other.num_classes() != first.num_classes()) {
      throw ValidationError(fmt::format(
          "shape mismatch: model '{}' is ({}, {}, {}) but model '{}' is ({}, {}, {})",
          maps.front().name, first.height(), first.width(), first.num_classes(), maps[j].name,
          other.height(), other.width(), other.num_classes()));
    }
  }
  ModelStack stack;
  stack.models_ = std::move(maps);
  return stack;
}

}  // namespace cytofuse
