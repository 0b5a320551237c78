#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cytofuse/probmap.hpp"

namespace cytofuse {

// counts[g][p] = pixels with ground truth g predicted as p. Matrices built by
// separate workers are combined with merge(); accumulation is additive, so
// the order of images never matters.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes);

  std::size_t num_classes() const { return num_classes_; }
  std::uint64_t count(std::size_t truth, std::size_t predicted) const {
    return counts_[truth * num_classes_ + predicted];
  }
  std::uint64_t total() const;
  std::uint64_t trace() const;

  // Adds every (gt, pred) pixel pair. Throws ValidationError naming
  // `image_id` on shape mismatch or a label >= C; the matrix is left
  // untouched in that case.
  void accumulate(const LabelMask& pred, const LabelMask& gt, std::string_view image_id = "");

  // Throws ValidationError if class counts differ.
  void merge(const ConfusionMatrix& other);

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t num_classes_;
  std::vector<std::uint64_t> counts_;
};

ConfusionMatrix accumulate(ConfusionMatrix cm, const LabelMask& pred, const LabelMask& gt,
                           std::string_view image_id = "");

// IoU_k = TP / (TP + FP + FN); nullopt when that union is empty.
std::vector<std::optional<double>> iou_per_class(const ConfusionMatrix& cm);

// Unweighted mean over classes with a non-empty union. Throws
// ValidationError("empty evaluation") when there are none.
double mean_iou(const ConfusionMatrix& cm);

// trace / total. Throws ValidationError on an empty matrix.
double pixel_accuracy(const ConfusionMatrix& cm);

struct EvalReport {
  std::size_t num_classes = 0;
  std::vector<std::optional<double>> per_class_iou;
  double mean_iou = 0.0;
  double pixel_accuracy = 0.0;
  std::size_t evaluated_classes = 0;
};

EvalReport evaluate(const ConfusionMatrix& cm);

// Two decimals, rounding half to even on the binary value (0.125 -> "0.12").
std::string format_two_decimals(double value);
// Fraction as a percentage with two decimals: 0.58333 -> "58.33".
std::string format_percent(double fraction);

// Keys in fixed order: num_classes, per_class_iou, mean_iou, pixel_accuracy,
// evaluated_classes. IoU values are fractions; absent classes are null.
std::string report_to_json(const EvalReport& report);

// Aligned text table in percent. `class_names` may be empty.
std::string report_to_table(const EvalReport& report,
                            const std::vector<std::string>& class_names = {});

}  // namespace cytofuse
