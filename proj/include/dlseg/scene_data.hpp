#pragma once

// Seeded procedural day/night street scenes and the on-disk dataset format.
//
// Dataset directory layout:
//   <root>/images/<stem>.png   8-bit RGB (night image)
//   <root>/labels/<stem>.png   8-bit single channel, class ids, 255 = ignore
//   <root>/day/<stem>.png      optional paired day image

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dlseg/kvconfig.hpp"
#include "dlseg/raster.hpp"

namespace dlseg::scene {

/// How a class is painted into a scene.
enum class Shape {
  Fill,        // covers the whole canvas (first class only)
  TopBand,     // rows [0, h) where h is drawn from the height range
  HorizonBand, // band just below the horizon
  Block,       // rectangles standing on the horizon
  Blob,        // ellipses straddling the horizon
  Vehicle,     // rectangles on the ground plane
  Bar,         // thin vertical bars on the ground plane
  Spot,        // small ellipses on the ground plane
};

struct ClassStyle {
  std::string name;
  Shape shape = Shape::Spot;
  float color[3] = {0.5f, 0.5f, 0.5f};
  double night_multiplier = 0.5;
  int min_w = 4, max_w = 8;
  int min_h = 4, max_h = 8;
  int min_count = 1, max_count = 1;
};

struct SceneSpec {
  int height = 64;
  int width = 128;
  std::vector<ClassStyle> classes;
  std::vector<int> hard_classes;
  double noise_sigma = 0.02;
  double gamma_lo = 0.7;
  double gamma_hi = 1.3;
  std::uint64_t seed = 0;

  int class_count() const { return static_cast<int>(classes.size()); }
  bool is_hard(int c) const;

  /// Throws ConfigError on any violated invariant.
  void validate() const;

  /// Eight street-scene classes; classes 6 ("pole") and 7 ("bicycle") are the planted hard ones.
  static SceneSpec defaults(std::uint64_t seed = 0);

  /// Keys under `prefix` (e.g. "scene.") override the defaults.
  static SceneSpec from_config(const KvConfig& cfg, const std::string& prefix = "scene.");
  void to_config(KvConfig& cfg, const std::string& prefix = "scene.") const;
};

/// Standalone spec file: `format = 1` header followed by the scene keys.
void save_scene_spec(const SceneSpec& spec, const std::filesystem::path& path);
SceneSpec load_scene_spec(const std::filesystem::path& path);

struct SceneSample {
  Image day;
  Image night;
  LabelMask labels;
};

/// Pure function of (spec, index). Images are quantised to 8 bits so PNG round-trips are exact.
SceneSample generate_scene(const SceneSpec& spec, int index);

struct Sample {
  std::string stem;
  Image image;
  LabelMask labels;
  std::optional<Image> day;
};

/// Generate `count` scenes with indices [first, first + count); stems are zero-padded indices.
std::vector<Sample> generate_samples(const SceneSpec& spec, int first, int count);

/// Samples sorted by stem. A missing directory or an empty one yields an empty list.
std::vector<Sample> load_dataset(const std::filesystem::path& root, int class_count);
void save_dataset(const std::vector<Sample>& samples, const std::filesystem::path& root);

/// Throws ValidationError unless every label is < class_count or kIgnoreLabel.
void validate_labels(const LabelMask& mask, int class_count, const std::string& what);

std::string shape_name(Shape s);
Shape parse_shape(const std::string& s);

}  // namespace dlseg::scene
