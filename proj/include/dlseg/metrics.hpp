#pragma once

// Confusion-matrix accumulation, per-class IoU and benchmark reports.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dlseg/raster.hpp"

namespace dlseg::metrics {

/// C x C counts, rows = ground truth, columns = prediction. Ignore pixels are never counted.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int classes = 0);

  int classes() const { return classes_; }
  std::uint64_t at(int gt, int pred) const { return counts_[static_cast<std::size_t>(gt) * classes_ + pred]; }
  std::uint64_t& at(int gt, int pred) { return counts_[static_cast<std::size_t>(gt) * classes_ + pred]; }
  std::uint64_t total() const;

  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  bool operator==(const ConfusionMatrix&) const = default;

 private:
  int classes_;
  std::vector<std::uint64_t> counts_;
};

/// cm + per-pixel counts of (gt, pred). Ignore gt pixels are skipped; a prediction
/// outside [0, C) or a gt id outside [0, C) is a ValidationError.
ConfusionMatrix accumulate(ConfusionMatrix cm, const LabelMask& pred, const LabelMask& gt);

struct IouResult {
  std::vector<double> per_class;  // NaN where a class never occurs in gt or prediction
  double mean = 0.0;              // NaN-excluded mean
  bool undefined = false;         // true when no class is defined (mean is NaN)
};

IouResult miou(const ConfusionMatrix& cm);

/// Mean of the given entries of `per_class`, skipping NaN. NaN if none remain.
double subset_mean(const std::vector<double>& per_class, const std::vector<int>& ids);

struct MethodResult {
  std::string method;
  IouResult iou;
};

struct ReportInput {
  std::vector<std::string> class_names;
  std::vector<int> hard_classes;
  std::vector<MethodResult> methods;
  /// Free-form provenance lines (seed, config hash, ...) copied into the summary.
  std::vector<std::pair<std::string, std::string>> provenance;
};

/// Writes `<stem>.tsv` (one row per method, stable class-id column order) and
/// `<stem>.json` (structured summary) and returns the human-readable table.
std::string report(const ReportInput& in, const std::filesystem::path& stem);

/// The text table alone.
std::string format_table(const ReportInput& in);

}  // namespace dlseg::metrics
