#include "cytofuse/metrics.hpp"

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <numeric>

#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include "cytofuse/error.hpp"

namespace cytofuse {

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes)
    : num_classes_(num_classes), counts_(num_classes * num_classes, 0) {
  if (num_classes < 2 || num_classes > kMaxClasses) {
    throw ValidationError(
        fmt::format("class count must be in [2, {}], got {}", kMaxClasses, num_classes));
  }
}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t sum = 0;
  for (std::size_t k = 0; k < num_classes_; ++k) sum += count(k, k);
  return sum;
}

void ConfusionMatrix::accumulate(const LabelMask& pred, const LabelMask& gt,
                                 std::string_view image_id) {
  if (pred.height() != gt.height() || pred.width() != gt.width()) {
    throw ValidationError(fmt::format("image '{}': prediction is {}x{} but ground truth is {}x{}",
                                      image_id, pred.width(), pred.height(), gt.width(),
                                      gt.height()));
  }
  const auto p = pred.labels();
  const auto g = gt.labels();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] >= num_classes_ || g[i] >= num_classes_) {
      const bool in_pred = p[i] >= num_classes_;
      throw ValidationError(fmt::format("image '{}': {} label {} at pixel ({}, {}) is >= {} classes",
                                        image_id, in_pred ? "predicted" : "ground-truth",
                                        in_pred ? p[i] : g[i], i / gt.width(), i % gt.width(),
                                        num_classes_));
    }
  }
  for (std::size_t i = 0; i < p.size(); ++i) ++counts_[g[i] * num_classes_ + p[i]];
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.num_classes_ != num_classes_) {
    throw ValidationError(fmt::format("cannot merge confusion matrices of {} and {} classes",
                                      num_classes_, other.num_classes_));
  }
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

ConfusionMatrix accumulate(ConfusionMatrix cm, const LabelMask& pred, const LabelMask& gt,
                           std::string_view image_id) {
  cm.accumulate(pred, gt, image_id);
  return cm;
}

std::vector<std::optional<double>> iou_per_class(const ConfusionMatrix& cm) {
  const std::size_t c = cm.num_classes();
  std::vector<std::optional<double>> ious(c);
  for (std::size_t k = 0; k < c; ++k) {
    const std::uint64_t tp = cm.count(k, k);
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;
    for (std::size_t other = 0; other < c; ++other) {
      if (other == k) continue;
      fp += cm.count(other, k);
      fn += cm.count(k, other);
    }
    const std::uint64_t uni = tp + fp + fn;
    if (uni > 0) ious[k] = static_cast<double>(tp) / static_cast<double>(uni);
  }
  return ious;
}

double mean_iou(const ConfusionMatrix& cm) {
  double sum = 0.0;
  std::size_t present = 0;
  for (const auto& iou : iou_per_class(cm)) {
    if (!iou) continue;
    sum += *iou;
    ++present;
  }
  if (present == 0) throw ValidationError("empty evaluation");
  return sum / static_cast<double>(present);
}

double pixel_accuracy(const ConfusionMatrix& cm) {
  const std::uint64_t total = cm.total();
  if (total == 0) throw ValidationError("empty evaluation");
  return static_cast<double>(cm.trace()) / static_cast<double>(total);
}

EvalReport evaluate(const ConfusionMatrix& cm) {
  EvalReport report;
  report.num_classes = cm.num_classes();
  report.per_class_iou = iou_per_class(cm);
  report.evaluated_classes = static_cast<std::size_t>(
      std::count_if(report.per_class_iou.begin(), report.per_class_iou.end(),
                    [](const auto& v) { return v.has_value(); }));
  report.mean_iou = mean_iou(cm);
  report.pixel_accuracy = pixel_accuracy(cm);
  return report;
}

std::string format_two_decimals(double value) {
  // nearbyint honours the current rounding mode; force round-half-even.
  const int saved = std::fegetround();
  std::fesetround(FE_TONEAREST);
  const double hundredths = std::nearbyint(value * 100.0);
  std::fesetround(saved);
  return fmt::format("{:.2f}", hundredths / 100.0);
}

std::string format_percent(double fraction) { return format_two_decimals(fraction * 100.0); }

std::string report_to_json(const EvalReport& report) {
  nlohmann::ordered_json doc;
  doc["num_classes"] = report.num_classes;
  auto per_class = nlohmann::ordered_json::array();
  for (const auto& iou : report.per_class_iou) {
    per_class.push_back(iou ? nlohmann::ordered_json(*iou) : nlohmann::ordered_json(nullptr));
  }
  doc["per_class_iou"] = std::move(per_class);
  doc["mean_iou"] = report.mean_iou;
  doc["pixel_accuracy"] = report.pixel_accuracy;
  doc["evaluated_classes"] = report.evaluated_classes;
  return doc.dump(2) + "\n";
}

std::string report_to_table(const EvalReport& report,
                            const std::vector<std::string>& class_names) {
  std::vector<std::string> labels;
  for (std::size_t k = 0; k < report.num_classes; ++k) {
    labels.push_back(k < class_names.size() ? class_names[k] : fmt::format("class_{}", k));
  }
  std::size_t width = std::string_view("pixel accuracy").size();
  for (const auto& l : labels) width = std::max(width, l.size());

  std::string out = "# pooled over all evaluated pixels (single confusion matrix)\n";
  out += fmt::format("{:<{}}  {:>8}\n", "class", width, "IoU (%)");
  for (std::size_t k = 0; k < report.num_classes; ++k) {
    const auto& iou = report.per_class_iou[k];
    out += fmt::format("{:<{}}  {:>8}\n", labels[k], width, iou ? format_percent(*iou) : "-");
  }
  out += fmt::format("{:<{}}  {:>8}\n", "mean IoU", width, format_percent(report.mean_iou));
  out += fmt::format("{:<{}}  {:>8}\n", "pixel accuracy", width,
                     format_percent(report.pixel_accuracy));
  out += fmt::format("{:<{}}  {:>8}\n", "classes", width, report.evaluated_classes);
  return out;
}

}  // namespace cytofuse
