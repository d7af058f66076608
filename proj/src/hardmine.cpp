#include "dlseg/hardmine.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include <json.hpp>

#include "dlseg/errors.hpp"
#include "dlseg/png_io.hpp"

namespace dlseg::hardmine {

namespace fs = std::filesystem;

std::vector<double> per_class_iou(const std::vector<LabelMask>& preds, const std::vector<LabelMask>& gts, int class_count) {
  if (preds.size() != gts.size()) throw ValidationError("per_class_iou: prediction and ground-truth counts differ");
  std::vector<long> tp(static_cast<std::size_t>(class_count), 0);
  std::vector<long> fp(tp.size(), 0);
  std::vector<long> fn(tp.size(), 0);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const LabelMask& p = preds[i];
    const LabelMask& g = gts[i];
    if (!p.same_shape(g)) throw ValidationError("per_class_iou: mask " + std::to_string(i) + " shape mismatch");
    for (std::size_t k = 0; k < g.data.size(); ++k) {
      const int gv = g.data[k];
      if (gv == kIgnoreLabel) continue;
      const int pv = p.data[k];
      if (gv == pv) {
        if (gv < class_count) ++tp[static_cast<std::size_t>(gv)];
        continue;
      }
      if (gv < class_count) ++fn[static_cast<std::size_t>(gv)];
      if (pv < class_count) ++fp[static_cast<std::size_t>(pv)];
    }
  }
  std::vector<double> iou(tp.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t c = 0; c < tp.size(); ++c) {
    const long denom = tp[c] + fp[c] + fn[c];
    if (denom > 0) iou[c] = static_cast<double>(tp[c]) / static_cast<double>(denom);
  }
  return iou;
}

bool ClassSplit::is_hard(int c) const { return std::binary_search(hard.begin(), hard.end(), c); }

std::uint8_t ClassSplit::region_label(int c) const {
  if (c == kIgnoreLabel) return kIgnoreLabel;
  auto it = std::lower_bound(hard.begin(), hard.end(), c);
  if (it == hard.end() || *it != c) return 0;
  return static_cast<std::uint8_t>(it - hard.begin() + 1);
}

int ClassSplit::full_label(int region_label) const {
  if (region_label <= 0 || region_label > static_cast<int>(hard.size())) return -1;
  return hard[static_cast<std::size_t>(region_label - 1)];
}

void ClassSplit::save(const fs::path& path) const {
  nlohmann::ordered_json j;
  j["format"] = 1;
  j["threshold"] = threshold;
  j["hard"] = hard;
  j["easy"] = easy;
  auto arr = nlohmann::ordered_json::array();
  for (double v : iou) arr.push_back(std::isnan(v) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(v));
  j["iou"] = arr;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write class split " + path.string());
  out << j.dump(2) << "\n";
}

ClassSplit ClassSplit::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read class split " + path.string());
  try {
    auto j = nlohmann::json::parse(in);
    ClassSplit s;
    s.threshold = j.at("threshold").get<double>();
    s.hard = j.at("hard").get<std::vector<int>>();
    s.easy = j.at("easy").get<std::vector<int>>();
    for (const auto& v : j.at("iou")) s.iou.push_back(v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>());
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed class split " + path.string() + ": " + e.what());
  }
}

ClassSplit split_classes(const std::vector<double>& iou, double threshold) {
  ClassSplit s;
  s.threshold = threshold;
  s.iou = iou;
  for (std::size_t c = 0; c < iou.size(); ++c) {
    // NaN compares false, so undefined classes land in the easy set.
    if (iou[c] < threshold)
      s.hard.push_back(static_cast<int>(c));
    else
      s.easy.push_back(static_cast<int>(c));
  }
  return s;
}

ClassSplit split_from_hard(const std::vector<int>& hard, int class_count) {
  ClassSplit s;
  s.iou.assign(static_cast<std::size_t>(class_count), std::numeric_limits<double>::quiet_NaN());
  for (int c = 0; c < class_count; ++c) {
    if (std::find(hard.begin(), hard.end(), c) != hard.end())
      s.hard.push_back(c);
    else
      s.easy.push_back(c);
  }
  return s;
}

std::vector<Instance> extract_instances(const LabelMask& mask, const std::vector<int>& classes, Connectivity connectivity,
                                        long min_area) {
  std::vector<int> wanted(classes);
  std::sort(wanted.begin(), wanted.end());
  wanted.erase(std::unique(wanted.begin(), wanted.end()), wanted.end());

  const int H = mask.height;
  const int W = mask.width;
  std::vector<std::uint8_t> visited(mask.data.size(), 0);
  std::vector<std::pair<int, int>> stack;
  std::vector<Instance> out;

  static constexpr int kDx[] = {1, -1, 0, 0, 1, 1, -1, -1};
  static constexpr int kDy[] = {0, 0, 1, -1, 1, -1, 1, -1};
  const int neighbours = connectivity == Connectivity::Eight ? 8 : 4;

  for (int cls : wanted) {
    for (int y0 = 0; y0 < H; ++y0) {
      for (int x0 = 0; x0 < W; ++x0) {
        const std::size_t idx0 = static_cast<std::size_t>(y0) * W + x0;
        if (visited[idx0] || mask.data[idx0] != cls) continue;
        int x_min = x0, x_max = x0, y_min = y0, y_max = y0;
        long area = 0;
        visited[idx0] = 1;
        stack.assign(1, {x0, y0});
        while (!stack.empty()) {
          auto [x, y] = stack.back();
          stack.pop_back();
          ++area;
          x_min = std::min(x_min, x);
          x_max = std::max(x_max, x);
          y_min = std::min(y_min, y);
          y_max = std::max(y_max, y);
          for (int k = 0; k < neighbours; ++k) {
            const int nx = x + kDx[k];
            const int ny = y + kDy[k];
            if (nx < 0 || ny < 0 || nx >= W || ny >= H) continue;
            const std::size_t n = static_cast<std::size_t>(ny) * W + nx;
            if (visited[n] || mask.data[n] != cls) continue;
            visited[n] = 1;
            stack.emplace_back(nx, ny);
          }
        }
        if (area >= min_area) out.push_back({cls, {x_min, y_min, x_max - x_min + 1, y_max - y_min + 1}, area});
      }
    }
  }
  return out;
}

LabelMask remap_to_region(const LabelMask& mask, const ClassSplit& split) {
  LabelMask out(mask.height, mask.width);
  for (std::size_t i = 0; i < mask.data.size(); ++i) out.data[i] = split.region_label(mask.data[i]);
  return out;
}

Box context_box(const Box& instance_box, double context_expand, int img_h, int img_w) {
  return expand_box(instance_box, context_expand, img_h, img_w);
}

Image zoom_crop(const Image& img, const Box& box, int zoom_h, int zoom_w) {
  return resize_bilinear(crop(img, box), zoom_h, zoom_w);
}

LabelMask zoom_crop(const LabelMask& mask, const Box& box, int zoom_h, int zoom_w) {
  return resize_nearest(crop(mask, box), zoom_h, zoom_w);
}

std::vector<RegionSample> build_region_dataset(const std::vector<scene::Sample>& samples, const ClassSplit& split,
                                               const RegionConfig& cfg) {
  if (split.hard.empty())
    throw ConfigError("hard class set is empty; lower the hard-class threshold to select at least one class");
  if (cfg.zoom_height <= 0 || cfg.zoom_width <= 0) throw ConfigError("zoom size must be positive");
  if (cfg.context_expand < 0.0) throw ConfigError("context expand must be non-negative");

  std::vector<RegionSample> out;
  for (const auto& s : samples) {
    const auto instances = extract_instances(s.labels, split.hard, cfg.connectivity, cfg.min_area);
    int k = 0;
    for (const auto& inst : instances) {
      const Box box = context_box(inst.box, cfg.context_expand, s.image.height, s.image.width);
      RegionSample r;
      r.stem = s.stem + "_" + std::to_string(k++);
      r.source_stem = s.stem;
      r.source_box = box;
      r.source_class = inst.class_id;
      r.image = zoom_crop(s.image, box, cfg.zoom_height, cfg.zoom_width);
      r.labels = remap_to_region(zoom_crop(s.labels, box, cfg.zoom_height, cfg.zoom_width), split);
      if (s.day) r.day = zoom_crop(*s.day, box, cfg.zoom_height, cfg.zoom_width);
      out.push_back(std::move(r));
    }
  }
  return out;
}

void save_region_dataset(const std::vector<RegionSample>& regions, const fs::path& root) {
  std::vector<scene::Sample> as_samples;
  as_samples.reserve(regions.size());
  std::string index = "stem\tsource\tx\ty\tw\th\tclass_id\n";
  for (const auto& r : regions) {
    as_samples.push_back({r.stem, r.image, r.labels, r.day});
    std::ostringstream line;
    line << r.stem << '\t' << r.source_stem << '\t' << r.source_box.x << '\t' << r.source_box.y << '\t' << r.source_box.w
         << '\t' << r.source_box.h << '\t' << r.source_class << '\n';
    index += line.str();
  }
  scene::save_dataset(as_samples, root);
  std::ofstream out(root / "index.tsv", std::ios::binary);
  if (!out) throw IoError("cannot write region index in " + root.string());
  out << index;
}

std::vector<RegionSample> load_region_dataset(const fs::path& root, int region_class_count) {
  auto samples = scene::load_dataset(root, region_class_count);
  std::map<std::string, RegionSample> by_stem;
  std::ifstream in(root / "index.tsv");
  if (!in) {
    if (samples.empty()) return {};
    throw IoError("region dataset " + root.string() + " has no index.tsv");
  }
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    RegionSample r;
    if (!(ss >> r.stem >> r.source_stem >> r.source_box.x >> r.source_box.y >> r.source_box.w >> r.source_box.h >>
          r.source_class))
      throw IoError("malformed region index line: " + line);
    by_stem[r.stem] = std::move(r);
  }
  std::vector<RegionSample> out;
  for (auto& s : samples) {
    auto it = by_stem.find(s.stem);
    if (it == by_stem.end()) throw IoError("region crop '" + s.stem + "' missing from index.tsv");
    RegionSample r = std::move(it->second);
    r.image = std::move(s.image);
    r.labels = std::move(s.labels);
    r.day = std::move(s.day);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace dlseg::hardmine
