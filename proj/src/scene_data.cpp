#include "dlseg/scene_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "dlseg/errors.hpp"
#include "dlseg/png_io.hpp"
#include "dlseg/rng.hpp"

namespace dlseg::scene {
namespace {

namespace fs = std::filesystem;

struct ShapeName {
  Shape shape;
  const char* name;
};

constexpr ShapeName kShapeNames[] = {
    {Shape::Fill, "fill"},   {Shape::TopBand, "top_band"}, {Shape::HorizonBand, "horizon_band"},
    {Shape::Block, "block"}, {Shape::Blob, "blob"},        {Shape::Vehicle, "vehicle"},
    {Shape::Bar, "bar"},     {Shape::Spot, "spot"},
};

// Shortest text that reads back as the same float.
std::string format_color(const float (&rgb)[3]) {
  std::string out;
  for (int c = 0; c < 3; ++c) {
    char buf[32];
    for (int prec = 1; prec <= 9; ++prec) {
      std::snprintf(buf, sizeof buf, "%.*g", prec, static_cast<double>(rgb[c]));
      if (std::stof(buf) == rgb[c]) break;
    }
    if (c) out += ",";
    out += buf;
  }
  return out;
}

ClassStyle style(std::string name, Shape shape, float r, float g, float b, double night, int min_w, int max_w,
                 int min_h, int max_h, int min_count, int max_count) {
  ClassStyle s;
  s.name = std::move(name);
  s.shape = shape;
  s.color[0] = r;
  s.color[1] = g;
  s.color[2] = b;
  s.night_multiplier = night;
  s.min_w = min_w;
  s.max_w = max_w;
  s.min_h = min_h;
  s.max_h = max_h;
  s.min_count = min_count;
  s.max_count = max_count;
  return s;
}

// Canvas being painted: labels plus per-pixel day colour before texture noise.
struct Canvas {
  LabelMask labels;
  Image day;
  std::vector<std::uint8_t> reserved;  // dilated footprint of hard-class instances

  Canvas(int h, int w) : labels(h, w), day(h, w), reserved(static_cast<std::size_t>(h) * w, 0) {}

  void paint(int x, int y, int cls, const float* rgb) {
    labels.at(y, x) = static_cast<std::uint8_t>(cls);
    for (int c = 0; c < 3; ++c) day.at(y, x, c) = rgb[c];
  }
};

template <typename Inside>
void paint_shape(Canvas& cv, const Box& b, int cls, const float* rgb, Inside inside) {
  const Box clipped = clamp_box(b, cv.labels.height, cv.labels.width);
  for (int y = clipped.y; y < clipped.bottom(); ++y)
    for (int x = clipped.x; x < clipped.right(); ++x)
      if (inside(x - b.x, y - b.y)) cv.paint(x, y, cls, rgb);
}

bool ellipse_inside(int dx, int dy, int w, int h) {
  const double u = (dx + 0.5) / w * 2.0 - 1.0;
  const double v = (dy + 0.5) / h * 2.0 - 1.0;
  return u * u + v * v <= 1.0;
}

bool footprint_free(const Canvas& cv, const Box& b) {
  for (int y = b.y; y < b.bottom(); ++y)
    for (int x = b.x; x < b.right(); ++x)
      if (cv.reserved[static_cast<std::size_t>(y) * cv.labels.width + x]) return false;
  return true;
}

void reserve_footprint(Canvas& cv, const Box& b) {
  const Box grown = clamp_box({b.x - 1, b.y - 1, b.w + 2, b.h + 2}, cv.labels.height, cv.labels.width);
  for (int y = grown.y; y < grown.bottom(); ++y)
    for (int x = grown.x; x < grown.right(); ++x) cv.reserved[static_cast<std::size_t>(y) * cv.labels.width + x] = 1;
}

void paint_class(Canvas& cv, const SceneSpec& spec, int cls, int horizon, Rng& rng) {
  const ClassStyle& st = spec.classes[static_cast<std::size_t>(cls)];
  const int H = spec.height;
  const int W = spec.width;
  const bool hard = spec.is_hard(cls);

  auto jittered = [&](float out[3]) {
    const double k = rng.uniform(0.85, 1.15);
    for (int c = 0; c < 3; ++c) out[c] = static_cast<float>(std::clamp(st.color[c] * k, 0.0, 1.0));
  };
  float rgb[3];

  switch (st.shape) {
    case Shape::Fill: {
      jittered(rgb);
      paint_shape(cv, {0, 0, W, H}, cls, rgb, [](int, int) { return true; });
      return;
    }
    case Shape::TopBand: {
      jittered(rgb);
      paint_shape(cv, {0, 0, W, horizon}, cls, rgb, [](int, int) { return true; });
      return;
    }
    case Shape::HorizonBand: {
      jittered(rgb);
      const int h = rng.randint(st.min_h, st.max_h);
      paint_shape(cv, {0, horizon, W, h}, cls, rgb, [](int, int) { return true; });
      return;
    }
    default:
      break;
  }

  const int count = rng.randint(st.min_count, st.max_count);
  for (int i = 0; i < count; ++i) {
    const int w = rng.randint(st.min_w, st.max_w);
    const int h = rng.randint(st.min_h, st.max_h);
    jittered(rgb);
    Box b{};
    switch (st.shape) {
      case Shape::Block:
        b = {rng.randint(-w / 2, W - w / 2), horizon + rng.randint(1, 4) - h, w, h};
        paint_shape(cv, b, cls, rgb, [](int, int) { return true; });
        break;
      case Shape::Blob:
        b = {rng.randint(-w / 2, W - w / 2), horizon - h / 2 - rng.randint(0, h / 2), w, h};
        paint_shape(cv, b, cls, rgb, [&](int dx, int dy) { return ellipse_inside(dx, dy, w, h); });
        break;
      case Shape::Vehicle:
      case Shape::Bar:
      case Shape::Spot: {
        // Ground plane objects stand somewhere between the horizon and the bottom edge.
        const int lo_bottom = std::min(H, horizon + std::max(4, h / 2));
        bool placed = false;
        for (int attempt = 0; attempt < 32 && !placed; ++attempt) {
          const int bottom = rng.randint(lo_bottom, H);
          b = {rng.randint(0, W - w), bottom - h, w, h};
          b = clamp_box(b, H, W);
          if (b.w <= 0 || b.h <= 0) continue;
          placed = !hard || footprint_free(cv, b);
        }
        if (!placed) break;
        if (hard) reserve_footprint(cv, b);
        if (st.shape == Shape::Spot)
          paint_shape(cv, b, cls, rgb, [&](int dx, int dy) { return ellipse_inside(dx, dy, b.w, b.h); });
        else
          paint_shape(cv, b, cls, rgb, [](int, int) { return true; });
        break;
      }
      default:
        break;
    }
  }
}

}  // namespace

bool SceneSpec::is_hard(int c) const { return std::find(hard_classes.begin(), hard_classes.end(), c) != hard_classes.end(); }

void SceneSpec::validate() const {
  if (height < 32 || width < 32) throw ConfigError("scene size must be at least 32x32");
  if (classes.size() < 2 || classes.size() > 254) throw ConfigError("scene class count must be in [2, 254]");
  if (classes.front().shape != Shape::Fill) throw ConfigError("scene class 0 must use the 'fill' shape");
  if (!(noise_sigma >= 0.0)) throw ConfigError("scene noise sigma must be non-negative");
  if (!(gamma_lo > 0.0 && gamma_lo <= gamma_hi)) throw ConfigError("scene gamma range must satisfy 0 < lo <= hi");
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const ClassStyle& s = classes[i];
    const std::string id = "scene class " + std::to_string(i);
    if (!(s.night_multiplier > 0.0 && s.night_multiplier <= 1.0)) throw ConfigError(id + ": night multiplier must be in (0,1]");
    if (s.min_w <= 0 || s.min_h <= 0 || s.min_w > s.max_w || s.min_h > s.max_h)
      throw ConfigError(id + ": size range must be positive with min <= max");
    if (s.min_count < 0 || s.min_count > s.max_count) throw ConfigError(id + ": count range must satisfy 0 <= min <= max");
    for (float c : s.color)
      if (!(c >= 0.0f && c <= 1.0f)) throw ConfigError(id + ": colour channels must be in [0,1]");
  }
  std::set<int> seen;
  for (int c : hard_classes) {
    if (c <= 0 || c >= class_count()) throw ConfigError("planted hard class " + std::to_string(c) + " out of range");
    if (!seen.insert(c).second) throw ConfigError("planted hard class " + std::to_string(c) + " listed twice");
    const ClassStyle& s = classes[static_cast<std::size_t>(c)];
    const std::string id = "planted hard class " + std::to_string(c);
    if (s.shape != Shape::Bar && s.shape != Shape::Spot && s.shape != Shape::Vehicle)
      throw ConfigError(id + ": must be a ground-plane object shape");
    if (std::max(s.max_w, s.max_h) > width / 8) throw ConfigError(id + ": max dimension exceeds width/8");
    if (static_cast<long>(s.max_w) * s.max_h > static_cast<long>(width / 8) * (height / 8))
      throw ConfigError(id + ": max area exceeds (W/8)*(H/8)");
    if (s.night_multiplier > 0.4) throw ConfigError(id + ": night multiplier must be <= 0.4");
  }
}

SceneSpec SceneSpec::defaults(std::uint64_t seed) {
  SceneSpec s;
  s.seed = seed;
  s.classes = {
      style("road", Shape::Fill, 0.45f, 0.42f, 0.45f, 0.55, 1, 1, 1, 1, 1, 1),
      style("sky", Shape::TopBand, 0.55f, 0.75f, 0.95f, 0.45, 1, 1, 1, 1, 1, 1),
      style("building", Shape::Block, 0.70f, 0.50f, 0.40f, 0.60, 14, 36, 12, 24, 3, 6),
      style("vegetation", Shape::Blob, 0.25f, 0.60f, 0.20f, 0.50, 12, 28, 8, 16, 1, 3),
      style("sidewalk", Shape::HorizonBand, 0.80f, 0.75f, 0.60f, 0.60, 1, 1, 4, 8, 1, 1),
      style("car", Shape::Vehicle, 0.30f, 0.45f, 0.85f, 0.60, 18, 30, 8, 14, 1, 3),
      style("pole", Shape::Bar, 0.90f, 0.90f, 0.20f, 0.20, 2, 3, 8, 14, 1, 3),
      style("bicycle", Shape::Spot, 0.60f, 0.30f, 0.45f, 0.20, 4, 8, 3, 6, 1, 3),
  };
  s.hard_classes = {6, 7};
  return s;
}

SceneSpec SceneSpec::from_config(const KvConfig& cfg, const std::string& prefix) {
  SceneSpec s = defaults();
  s.height = static_cast<int>(cfg.get_int(prefix + "height", s.height));
  s.width = static_cast<int>(cfg.get_int(prefix + "width", s.width));
  s.noise_sigma = cfg.get_double(prefix + "noise_sigma", s.noise_sigma);
  auto gamma = cfg.get_doubles(prefix + "gamma", {s.gamma_lo, s.gamma_hi});
  if (gamma.size() != 2) throw ConfigError(prefix + "gamma expects lo,hi");
  s.gamma_lo = gamma[0];
  s.gamma_hi = gamma[1];
  s.seed = cfg.get_uint64(prefix + "seed", s.seed);
  s.hard_classes = cfg.get_ints(prefix + "hard", s.hard_classes);

  const long n = cfg.get_int(prefix + "classes", static_cast<long>(s.classes.size()));
  if (n < 2 || n > 254) throw ConfigError(prefix + "classes must be in [2, 254]");
  const std::size_t defaults_n = s.classes.size();
  s.classes.resize(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < s.classes.size(); ++i) {
    const std::string key = prefix + "class." + std::to_string(i) + ".";
    const bool has_default = i < defaults_n;
    ClassStyle& st = s.classes[i];
    auto text = [&](const std::string& k, const std::string& fb) {
      return has_default ? cfg.get_string(key + k, fb) : cfg.require_string(key + k);
    };
    st.name = text("name", st.name);
    st.shape = parse_shape(text("shape", shape_name(st.shape)));
    auto color = parse_doubles(key + "color", text("color", format_color(st.color)));
    if (color.size() != 3) throw ConfigError(key + "color expects r,g,b");
    for (int c = 0; c < 3; ++c) st.color[c] = static_cast<float>(color[static_cast<std::size_t>(c)]);
    st.night_multiplier = has_default ? cfg.get_double(key + "night", st.night_multiplier) : cfg.require_double(key + "night");
    auto size = parse_ints(key + "size", text("size", format_doubles({double(st.min_w), double(st.max_w),
                                                                       double(st.min_h), double(st.max_h)})));
    if (size.size() != 4) throw ConfigError(key + "size expects min_w,max_w,min_h,max_h");
    st.min_w = size[0];
    st.max_w = size[1];
    st.min_h = size[2];
    st.max_h = size[3];
    auto count = parse_ints(key + "count", text("count", format_doubles({double(st.min_count), double(st.max_count)})));
    if (count.size() != 2) throw ConfigError(key + "count expects min,max");
    st.min_count = count[0];
    st.max_count = count[1];
  }
  s.validate();
  return s;
}

void SceneSpec::to_config(KvConfig& cfg, const std::string& prefix) const {
  cfg.set(prefix + "height", std::to_string(height));
  cfg.set(prefix + "width", std::to_string(width));
  cfg.set(prefix + "noise_sigma", format_double(noise_sigma));
  cfg.set(prefix + "gamma", format_doubles({gamma_lo, gamma_hi}));
  cfg.set(prefix + "seed", std::to_string(seed));
  std::vector<double> hard(hard_classes.begin(), hard_classes.end());
  cfg.set(prefix + "hard", format_doubles(hard));
  cfg.set(prefix + "classes", std::to_string(classes.size()));
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const ClassStyle& st = classes[i];
    const std::string key = prefix + "class." + std::to_string(i) + ".";
    cfg.set(key + "name", st.name);
    cfg.set(key + "shape", shape_name(st.shape));
    cfg.set(key + "color", format_color(st.color));
    cfg.set(key + "night", format_double(st.night_multiplier));
    cfg.set(key + "size", format_doubles({double(st.min_w), double(st.max_w), double(st.min_h), double(st.max_h)}));
    cfg.set(key + "count", format_doubles({double(st.min_count), double(st.max_count)}));
  }
}

void save_scene_spec(const SceneSpec& spec, const fs::path& path) {
  KvConfig cfg;
  spec.to_config(cfg, "");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write scene spec " + path.string());
  out << "format = 1\n" << cfg.serialize();
}

SceneSpec load_scene_spec(const fs::path& path) {
  KvConfig cfg = KvConfig::load(path);
  if (cfg.get_string("format", "") != "1") throw ConfigError("scene spec " + path.string() + ": expected format = 1");
  return SceneSpec::from_config(cfg, "");
}

SceneSample generate_scene(const SceneSpec& spec, int index) {
  spec.validate();
  if (index < 0) throw ConfigError("scene index must be non-negative");
  Rng rng(derive_seed(spec.seed, "scene", static_cast<std::uint64_t>(index)));

  const int H = spec.height;
  const int W = spec.width;
  Canvas cv(H, W);

  // Horizon row: the top band (if any) ends here, blocks and blobs stand on it.
  int horizon = static_cast<int>(std::lround(H * rng.uniform(0.34, 0.46)));

  std::vector<int> order;
  for (int c = 0; c < spec.class_count(); ++c)
    if (!spec.is_hard(c)) order.push_back(c);
  for (int c : spec.hard_classes) order.push_back(c);
  for (int c : order) paint_class(cv, spec, c, horizon, rng);

  SceneSample out;
  out.labels = cv.labels;
  out.day = cv.day;

  // Texture: mild vertical shading plus per-pixel noise.
  for (int y = 0; y < H; ++y) {
    const double shade = 1.0 + 0.08 * (static_cast<double>(y) / H - 0.5);
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c) {
        float& v = out.day.at(y, x, c);
        v = static_cast<float>(std::clamp(v * shade + rng.normal(0.0, 0.03), 0.0, 1.0));
      }
  }
  quantize_8bit(out.day);

  const double gamma = rng.uniform(spec.gamma_lo, spec.gamma_hi);
  out.night = Image(H, W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const double m = spec.classes[out.labels.at(y, x)].night_multiplier;
      for (int c = 0; c < 3; ++c) {
        const double lit = std::pow(std::clamp(out.day.at(y, x, c) * m, 0.0, 1.0), gamma);
        out.night.at(y, x, c) = static_cast<float>(std::clamp(lit + rng.normal(0.0, spec.noise_sigma), 0.0, 1.0));
      }
    }
  quantize_8bit(out.night);
  return out;
}

std::vector<Sample> generate_samples(const SceneSpec& spec, int first, int count) {
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int i = first; i < first + count; ++i) {
    SceneSample s = generate_scene(spec, i);
    char stem[32];
    std::snprintf(stem, sizeof stem, "%06d", i);
    out.push_back({stem, std::move(s.night), std::move(s.labels), std::move(s.day)});
  }
  return out;
}

void validate_labels(const LabelMask& mask, int class_count, const std::string& what) {
  for (std::uint8_t v : mask.data) {
    if (v != kIgnoreLabel && v >= class_count)
      throw ValidationError(what + ": label value " + std::to_string(v) + " outside [0," + std::to_string(class_count) +
                            ") and not ignore (255)");
  }
}

std::vector<Sample> load_dataset(const fs::path& root, int class_count) {
  std::vector<Sample> out;
  const fs::path images = root / "images";
  const fs::path labels = root / "labels";
  const fs::path day = root / "day";
  std::set<std::string> image_stems;
  std::set<std::string> label_stems;
  auto collect = [](const fs::path& dir, std::set<std::string>& stems) {
    if (!fs::is_directory(dir)) return;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file() && e.path().extension() == ".png") stems.insert(e.path().stem().string());
  };
  collect(images, image_stems);
  collect(labels, label_stems);
  for (const auto& s : image_stems)
    if (!label_stems.count(s)) throw IoError("dataset " + root.string() + ": image '" + s + "' has no label");
  for (const auto& s : label_stems)
    if (!image_stems.count(s)) throw IoError("dataset " + root.string() + ": label '" + s + "' has no image");

  for (const auto& stem : image_stems) {
    Sample s;
    s.stem = stem;
    s.image = read_png_rgb(images / (stem + ".png"));
    s.labels = read_png_gray(labels / (stem + ".png"));
    if (s.labels.height != s.image.height || s.labels.width != s.image.width)
      throw ValidationError("dataset " + root.string() + ": '" + stem + "' image and label shapes differ");
    validate_labels(s.labels, class_count, "label '" + stem + "'");
    if (fs::exists(day / (stem + ".png"))) s.day = read_png_rgb(day / (stem + ".png"));
    out.push_back(std::move(s));
  }
  return out;
}

void save_dataset(const std::vector<Sample>& samples, const fs::path& root) {
  fs::create_directories(root / "images");
  fs::create_directories(root / "labels");
  for (const auto& s : samples) {
    write_png_rgb(root / "images" / (s.stem + ".png"), s.image);
    write_png_gray(root / "labels" / (s.stem + ".png"), s.labels);
    if (s.day) {
      fs::create_directories(root / "day");
      write_png_rgb(root / "day" / (s.stem + ".png"), *s.day);
    }
  }
}

std::string shape_name(Shape s) {
  for (const auto& e : kShapeNames)
    if (e.shape == s) return e.name;
  return "unknown";
}

Shape parse_shape(const std::string& s) {
  for (const auto& e : kShapeNames)
    if (s == e.name) return e.shape;
  throw ConfigError("unknown scene shape '" + s + "'");
}

}  // namespace dlseg::scene
