#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cytofuse {

// Allowed deviation of a pixel's class sum from 1, and of any single
// probability from [0, 1]. Float32 exports round-trip with small error.
inline constexpr double kSimplexTol = 1e-4;

// Masks store one byte per pixel.
inline constexpr std::size_t kMaxClasses = 256;

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

class ClassSet {
 public:
  // Throws ValidationError unless 2 <= C <= 256, names are distinct, and the
  // palette (when given) has C distinct colors.
  explicit ClassSet(std::vector<std::string> names,
                    std::optional<std::vector<Rgb>> palette = std::nullopt);

  // "class_0", "class_1", ... without a palette.
  static ClassSet numbered(std::size_t num_classes);

  std::size_t num_classes() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::optional<std::vector<Rgb>>& palette() const { return palette_; }

  friend bool operator==(const ClassSet&, const ClassSet&) = default;

 private:
  std::vector<std::string> names_;
  std::optional<std::vector<Rgb>> palette_;
};

struct PixelIndex {
  std::size_t row = 0;
  std::size_t col = 0;
  friend bool operator==(const PixelIndex&, const PixelIndex&) = default;
};

struct SimplexViolation {
  PixelIndex pixel;
  // |sum - 1| for sum violations; distance outside [0, 1] for range
  // violations; +inf for non-finite values. The larger one is reported.
  double deviation = 0.0;
};

struct ValidationReport {
  std::vector<SimplexViolation> violations;

  bool ok() const { return violations.empty(); }
  // Human-readable list of at most `max_listed` violations.
  std::string summary(std::size_t max_listed = 10) const;
};

// Report-only check of a raw H x W x C buffer (class axis fastest).
ValidationReport validate_probmap(std::size_t height, std::size_t width,
                                  std::size_t num_classes,
                                  std::span<const float> data);

// Per-pixel class probabilities, H x W x C, row-major with the class axis
// varying fastest. Immutable; every instance satisfies the simplex invariant
// and holds values clamped to [0, 1].
class ProbMap {
 public:
  // Validates (throws ValidationError listing the first 10 offending pixels)
  // and clamps to [0, 1].
  ProbMap(std::size_t height, std::size_t width, std::size_t num_classes,
          std::vector<float> data);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t num_classes() const { return num_classes_; }
  std::size_t pixel_count() const { return height_ * width_; }

  std::span<const float> data() const { return data_; }
  std::span<const float> pixel(std::size_t index) const {
    return std::span<const float>(data_).subspan(index * num_classes_, num_classes_);
  }
  std::span<const float> pixel(std::size_t row, std::size_t col) const {
    return pixel(row * width_ + col);
  }
  float at(std::size_t row, std::size_t col, std::size_t k) const {
    return data_[(row * width_ + col) * num_classes_ + k];
  }

 private:
  std::size_t height_;
  std::size_t width_;
  std::size_t num_classes_;
  std::vector<float> data_;
};

ValidationReport validate_probmap(const ProbMap& map);

// H x W class indices. Range against a class count is checked by consumers
// (accumulate, read_mask), since a mask alone does not know C.
class LabelMask {
 public:
  LabelMask() = default;
  LabelMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> labels);
  // All-zero (background) mask.
  LabelMask(std::size_t height, std::size_t width);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t pixel_count() const { return labels_.size(); }
  std::span<const std::uint8_t> labels() const { return labels_; }
  std::uint8_t at(std::size_t row, std::size_t col) const { return labels_[row * width_ + col]; }

  // Largest label present, or nullopt for an empty mask.
  std::optional<std::uint8_t> max_label() const;

  friend bool operator==(const LabelMask&, const LabelMask&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<std::uint8_t> labels_;
};

// Which direction selects the winning class. Only the fuzzy rank rule
// minimizes.
enum class Decision { kMinimize, kMaximize };

class FusedScoreMap {
 public:
  // Throws ValidationError on size mismatch or any non-finite score.
  FusedScoreMap(std::size_t height, std::size_t width, std::size_t num_classes,
                std::vector<double> scores, Decision decision);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t num_classes() const { return num_classes_; }
  std::size_t pixel_count() const { return height_ * width_; }
  Decision decision() const { return decision_; }

  std::span<const double> scores() const { return scores_; }
  std::span<const double> pixel(std::size_t index) const {
    return std::span<const double>(scores_).subspan(index * num_classes_, num_classes_);
  }
  std::span<const double> pixel(std::size_t row, std::size_t col) const {
    return pixel(row * width_ + col);
  }

 private:
  std::size_t height_;
  std::size_t width_;
  std::size_t num_classes_;
  std::vector<double> scores_;
  Decision decision_;
};

// Numerically stable softmax (max subtracted before exponentiation).
// Throws ValidationError naming the first non-finite index.
std::vector<double> softmax(std::span<const double> logits);

// Winning class of one pixel; ties go to the lowest class index.
std::size_t decide(std::span<const double> scores, Decision decision);

LabelMask argmax_decide(const FusedScoreMap& scores);

// Per-pixel argmax of a probability map (ties to lowest index).
LabelMask argmax_labels(const ProbMap& map);

struct NamedProbMap {
  std::string name;
  std::shared_ptr<const ProbMap> map;
};

// N aligned probability maps for one image, in manifest order.
class ModelStack {
 public:
  std::size_t size() const { return models_.size(); }
  const std::string& name(std::size_t j) const { return models_[j].name; }
  const ProbMap& operator[](std::size_t j) const { return *models_[j].map; }
  const NamedProbMap& entry(std::size_t j) const { return models_[j]; }

  std::size_t height() const { return models_.front().map->height(); }
  std::size_t width() const { return models_.front().map->width(); }
  std::size_t num_classes() const { return models_.front().map->num_classes(); }
  std::size_t pixel_count() const { return models_.front().map->pixel_count(); }

  // Stack of the selected models, in the order given.
  ModelStack select(std::span<const std::size_t> indices) const;

 private:
  friend ModelStack stack_models(std::vector<NamedProbMap> maps);
  std::vector<NamedProbMap> models_;
};

// Throws ValidationError for an empty list, a null map, or a shape mismatch
// (naming both models and their (H, W, C)).
ModelStack stack_models(std::vector<NamedProbMap> maps);

}  // namespace cytofuse
