#pragma once

// Hard-class selection from held-out IoU, connected-component instance mining and
// construction of the zoomed regional training set.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dlseg/raster.hpp"
#include "dlseg/scene_data.hpp"

namespace dlseg::hardmine {

inline constexpr double kDefaultHardThreshold = 0.5;

/// IoU_c = TP/(TP+FP+FN) summed over all masks, ignore pixels excluded.
/// Classes absent from every prediction and ground truth are NaN.
std::vector<double> per_class_iou(const std::vector<LabelMask>& preds, const std::vector<LabelMask>& gts, int class_count);

/// Partition of the class ids; hard = { c : IoU_c < threshold }, NaN classes are easy.
struct ClassSplit {
  std::vector<int> hard;  // ascending
  std::vector<int> easy;  // ascending
  double threshold = kDefaultHardThreshold;
  std::vector<double> iou;

  int class_count() const { return static_cast<int>(hard.size() + easy.size()); }
  bool is_hard(int c) const;

  /// Region-model label of a full-space class: hard[k] -> k + 1, anything else -> 0 ("other").
  std::uint8_t region_label(int c) const;
  /// Inverse of region_label for 1..K; 0 maps to -1.
  int full_label(int region_label) const;
  int region_class_count() const { return static_cast<int>(hard.size()) + 1; }

  void save(const std::filesystem::path& path) const;
  static ClassSplit load(const std::filesystem::path& path);
};

ClassSplit split_classes(const std::vector<double>& iou, double threshold = kDefaultHardThreshold);

/// Split from an explicit hard set (used by tests and ablations).
ClassSplit split_from_hard(const std::vector<int>& hard, int class_count);

enum class Connectivity { Four = 4, Eight = 8 };

struct Instance {
  int class_id = 0;
  Box box;
  long area = 0;

  bool operator==(const Instance&) const = default;
};

/// One entry per connected component of every class in `classes` with area >= min_area.
/// Ordered by class id, then by the raster position of the component's first pixel.
std::vector<Instance> extract_instances(const LabelMask& mask, const std::vector<int>& classes,
                                        Connectivity connectivity = Connectivity::Eight, long min_area = 4);

struct RegionConfig {
  double context_expand = 0.5;  // fraction of the box extent added on every side
  int zoom_height = 64;
  int zoom_width = 64;
  Connectivity connectivity = Connectivity::Eight;
  long min_area = 4;
};

struct RegionSample {
  std::string stem;
  std::string source_stem;
  Image image;              // zoomed night crop
  LabelMask labels;         // zoomed, remapped onto {0 = other, 1..K = hard classes}
  std::optional<Image> day; // zoomed paired day crop when the source has one
  Box source_box;
  int source_class = 0;
};

/// Relabel a full-space mask onto the region class space; ignore stays ignore.
LabelMask remap_to_region(const LabelMask& mask, const ClassSplit& split);

/// Context-expanded crop box for an instance.
Box context_box(const Box& instance_box, double context_expand, int img_h, int img_w);

/// Crop `box` from the image and resize it to the zoom size.
Image zoom_crop(const Image& img, const Box& box, int zoom_h, int zoom_w);
LabelMask zoom_crop(const LabelMask& mask, const Box& box, int zoom_h, int zoom_w);

std::vector<RegionSample> build_region_dataset(const std::vector<scene::Sample>& samples, const ClassSplit& split,
                                               const RegionConfig& cfg);

/// Region samples in the scene dataset layout plus `index.tsv`
/// (stem, source, x, y, w, h, class_id) mapping each crop to its origin.
void save_region_dataset(const std::vector<RegionSample>& regions, const std::filesystem::path& root);
std::vector<RegionSample> load_region_dataset(const std::filesystem::path& root, int region_class_count);

}  // namespace dlseg::hardmine
