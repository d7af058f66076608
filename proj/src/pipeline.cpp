#include "dlseg/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>

#include <json.hpp>

#include "dlseg/boxes.hpp"
#include "dlseg/detector.hpp"
#include "dlseg/dual.hpp"
#include "dlseg/errors.hpp"
#include "dlseg/hardmine.hpp"
#include "dlseg/hashing.hpp"
#include "dlseg/hdm.hpp"
#include "dlseg/metrics.hpp"
#include "dlseg/png_io.hpp"
#include "dlseg/relam.hpp"
#include "dlseg/rng.hpp"
#include "dlseg/scene_data.hpp"
#include "dlseg/segcore.hpp"

namespace dlseg::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr int kManifestFormat = 1;

// Command that produces each stage directory, for error messages.
const std::map<std::string, std::string>& producers() {
  static const std::map<std::string, std::string> m = {
      {"data", "synth"},
      {"relam_image", "train-relam image"},
      {"seg_image", "train-seg image"},
      {"mine_hard", "mine-hard"},
      {"relam_region", "train-relam region"},
      {"seg_region", "train-seg region"},
      {"labels_rdn", "label-proposals rdn"},
      {"detector_rdn", "train-detector rdn"},
      {"labels_hdm", "label-proposals hdm"},
      {"detector_hdm", "train-detector hdm"},
  };
  return m;
}

std::string producer_of(const std::string& dir) {
  auto it = producers().find(dir);
  if (it != producers().end()) return it->second;
  if (dir.rfind("infer_", 0) == 0) return "infer";
  return dir;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot read " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("malformed JSON in " + p.string() + ": " + e.what());
  }
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write " + p.string());
  out << text;
}

std::vector<std::pair<std::string, std::string>> hash_tree(const fs::path& root) {
  std::vector<std::pair<std::string, std::string>> out;
  if (!fs::exists(root)) return out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), root).generic_string();
    if (rel == "manifest.json") continue;
    out.emplace_back(rel, sha256_file(e.path()));
  }
  std::sort(out.begin(), out.end());
  return out;
}

void log_stage(const std::string& msg) { std::cerr << "[dlseg] " << msg << std::endl; }

/// One pipeline stage: validates upstream manifests on construction, clears its own
/// directory, and writes its manifest on finish().
class Stage {
 public:
  Stage(const Run& run, std::string command, std::string dir, const std::vector<std::string>& deps)
      : run_(run), command_(std::move(command)), dir_(std::move(dir)) {
    for (const auto& d : deps) inputs_.emplace_back(d, verify_upstream(d));
    fs::remove_all(path());
    fs::create_directories(path());
    log_stage(command_ + " -> " + path().string());
  }

  fs::path path() const { return run_.dir / dir_; }
  fs::path path(const std::string& rel) const { return path() / rel; }

  void finish(json extra = json::object()) {
    json m;
    m["format"] = kManifestFormat;
    m["stage"] = command_;
    m["seed"] = run_.seed;
    m["config_hash"] = run_.config_hash;
    json in = json::object();
    for (const auto& [d, h] : inputs_) in[d] = h;
    m["inputs"] = in;
    json out = json::object();
    for (const auto& [rel, h] : hash_tree(path())) out[rel] = h;
    m["outputs"] = out;
    m["details"] = std::move(extra);
    m["config"] = run_.config.serialize();
    write_text(path("manifest.json"), m.dump(2) + "\n");
  }

 private:
  std::string verify_upstream(const std::string& dep) const {
    const auto manifest = run_.dir / dep / "manifest.json";
    if (!fs::exists(manifest))
      throw PreconditionError("'" + command_ + "' needs " + manifest.string() + "; run `" + producer_of(dep) + "` first");
    const auto m = read_json(manifest);
    if (m.value("config_hash", std::string()) != run_.config_hash)
      throw StalenessError(dep + " was produced with a different configuration or seed; rerun `" + producer_of(dep) + "`");
    const auto current = hash_tree(run_.dir / dep);
    json recorded = m.value("outputs", json::object());
    if (recorded.size() != current.size())
      throw StalenessError(dep + " no longer matches its manifest; rerun `" + producer_of(dep) + "`");
    for (const auto& [rel, h] : current)
      if (!recorded.contains(rel) || recorded[rel].get<std::string>() != h)
        throw StalenessError(dep + "/" + rel + " changed after it was produced; rerun `" + producer_of(dep) + "`");
    return sha256_file(manifest);
  }

  const Run& run_;
  std::string command_;
  std::string dir_;
  std::vector<std::pair<std::string, std::string>> inputs_;
};

// ---- typed views of the configuration ------------------------------------------------

scene::SceneSpec scene_spec(const Run& run) { return scene::load_scene_spec(run.dir / "data" / "scene.cfg"); }

std::vector<scene::Sample> load_split(const Run& run, const std::string& which) {
  return scene::load_dataset(run.dir / "data" / which, scene_spec(run).class_count());
}

hardmine::RegionConfig region_config(const Run& run) {
  hardmine::RegionConfig rc;
  rc.context_expand = run.config.get_double("region.context_expand", rc.context_expand);
  auto zoom = run.config.get_ints("region.zoom", {rc.zoom_height, rc.zoom_width});
  if (zoom.size() != 2 || zoom[0] < 8 || zoom[1] < 8) throw ConfigError("region.zoom needs height,width >= 8");
  rc.zoom_height = zoom[0];
  rc.zoom_width = zoom[1];
  const long conn = run.config.get_int("region.connectivity", 8);
  if (conn != 4 && conn != 8) throw ConfigError("region.connectivity must be 4 or 8");
  rc.connectivity = conn == 4 ? hardmine::Connectivity::Four : hardmine::Connectivity::Eight;
  rc.min_area = run.config.get_int("region.min_area", rc.min_area);
  if (rc.context_expand < 0) throw ConfigError("region.context_expand must be >= 0");
  return rc;
}

std::string level_name(Level l) { return l == Level::Image ? "image" : "region"; }

std::optional<relam::RelamNets> load_relam(const Run& run, Level level) {
  const auto p = run.dir / ("relam_" + level_name(level)) / "model.ckpt";
  if (!fs::exists(p)) return std::nullopt;
  return relam::RelamNets::load(p);
}

hardmine::ClassSplit load_class_split(const Run& run) { return hardmine::ClassSplit::load(run.dir / "mine_hard" / "class_split.json"); }

std::vector<std::string> image_deps() { return {"data", "relam_image", "seg_image"}; }

/// Frozen models of the image branch plus the storage they live in.
struct ImageModels {
  std::optional<relam::RelamNets> relam;
  seg::SegModel seg;
  std::vector<double> ratios;

  explicit ImageModels(const Run& run)
      : relam(load_relam(run, Level::Image)),
        seg(seg::SegModel::load(run.dir / "seg_image" / "model.ckpt")),
        ratios(run.config.get_doubles("infer.ratios", seg::kDefaultRatios)) {}

  fuse::ImageBranch branch() { return {relam ? &*relam : nullptr, &seg, ratios}; }
};

struct RegionModels {
  std::optional<relam::RelamNets> relam;
  seg::SegModel seg;
  hardmine::RegionConfig rc;
  std::vector<double> ratios;

  explicit RegionModels(const Run& run)
      : relam(load_relam(run, Level::Region)),
        seg(seg::SegModel::load(run.dir / "seg_region" / "model.ckpt")),
        rc(region_config(run)),
        ratios(run.config.get_doubles("region.ratios", {1.0})) {}

  fuse::RegionBranch branch() { return {relam ? &*relam : nullptr, &seg, rc.zoom_height, rc.zoom_width, ratios}; }
};

std::vector<hardmine::Instance> pseudo_boxes(const LabelMask& gt, const hardmine::ClassSplit& split,
                                             const hardmine::RegionConfig& rc) {
  auto inst = hardmine::extract_instances(gt, split.hard, rc.connectivity, rc.min_area);
  for (auto& i : inst) i.box = hardmine::context_box(i.box, rc.context_expand, gt.height, gt.width);
  return inst;
}

bool derived_seed_key(const std::string& k) {
  for (const auto* d : {"relam.image.seed", "relam.region.seed", "seg.image.seed", "seg.region.seed", "detector.seed"})
    if (k == d) return true;
  return false;
}

std::string detector_dir(DetectorKind k) { return "detector_" + detector_name(k); }

json to_json_double(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

// ---- configuration ------------------------------------------------------------------

KvConfig default_config() {
  KvConfig c;
  c.set("format", "1");
  c.set("seed", "0");
  scene::SceneSpec::defaults(0).to_config(c, "scene.");
  c.set("data.train_count", "48");
  c.set("data.test_count", "24");
  c.set("data.train_dir", "");
  c.set("data.test_dir", "");
  c.set("data.val_fraction", "0.25");

  relam::RelamConfig rel;
  rel.write(c, "relam.image.");
  rel.write(c, "relam.region.");
  c.set("relam.image.enabled", "true");
  c.set("relam.region.enabled", "true");

  seg::SegTrainConfig si;
  si.steps = 1500;
  si.augment.crop_height = 64;
  si.augment.crop_width = 128;
  si.write(c, "seg.image.");
  seg::SegTrainConfig sr;
  sr.steps = 1500;
  sr.augment.crop_height = 64;
  sr.augment.crop_width = 64;
  sr.write(c, "seg.region.");

  c.set("hard.threshold", "0.5");
  c.set("region.context_expand", "0.5");
  c.set("region.zoom", "64,64");
  c.set("region.connectivity", "8");
  c.set("region.min_area", "4");
  c.set("region.ratios", "1");
  c.set("rdn.box_threshold", "0.5");

  proposals::DetectorConfig det;
  det.write(c, "detector.");
  c.set("hdm.rule", "region_better");
  c.set("infer.ratios", format_doubles(seg::kDefaultRatios));
  c.set("merge.policy", "gated");
  // Stage seeds come from the run seed; per-module seed keys are not part of the run config.
  KvConfig out;
  for (const auto& [k, v] : c.values())
    if (!derived_seed_key(k)) out.set(k, v);
  return out;
}

std::uint64_t Run::stage_seed(const std::string& tag) const { return derive_seed(seed, tag); }

Run open_run(const fs::path& dir, const std::optional<fs::path>& config_file, std::optional<std::uint64_t> seed,
             const std::vector<std::string>& overrides) {
  Run run;
  run.dir = dir;
  const KvConfig defaults = default_config();
  KvConfig cfg = defaults;
  KvConfig user;
  if (config_file) user.merge(KvConfig::load(*config_file));
  for (const auto& o : overrides) user.apply_override(o);
  for (const auto& [k, v] : user.values()) {
    if (derived_seed_key(k)) throw ConfigError("'" + k + "' is derived from the run seed and cannot be set");
    if (!defaults.has(k)) throw ConfigError("unknown configuration key '" + k + "'");
  }
  cfg.merge(user);
  if (cfg.get_string("format", "1") != "1") throw ConfigError("unsupported config format '" + cfg.get_string("format", "") + "'");
  if (seed) cfg.set("seed", std::to_string(*seed));
  run.seed = cfg.get_uint64("seed", 0);
  cfg.set("scene.seed", std::to_string(run.seed));
  run.config = cfg;
  run.config_hash = sha256_hex(cfg.serialize());

  // Fail fast on malformed values, before any stage runs.
  scene::SceneSpec::from_config(cfg, "scene.").validate();
  fuse::parse_merge_policy(cfg.get_string("merge.policy", "gated"));
  proposals::parse_hdm_rule(cfg.get_string("hdm.rule", "region_better"));
  region_config(run);
  const double tau = cfg.get_double("hard.threshold", 0.5);
  if (!(tau > 0 && tau <= 1)) throw ConfigError("hard.threshold must lie in (0, 1]");
  const double vf = cfg.get_double("data.val_fraction", 0.25);
  if (!(vf > 0 && vf < 1)) throw ConfigError("data.val_fraction must lie in (0, 1)");
  if (cfg.get_int("data.train_count", 1) < 2 || cfg.get_int("data.test_count", 1) < 1)
    throw ConfigError("data.train_count must be >= 2 and data.test_count >= 1");
  return run;
}

Level parse_level(const std::string& s) {
  if (s == "image") return Level::Image;
  if (s == "region") return Level::Region;
  throw ConfigError("level must be 'image' or 'region', got '" + s + "'");
}

DetectorKind parse_detector(const std::string& s) {
  if (s == "none") return DetectorKind::None;
  if (s == "rdn") return DetectorKind::Rdn;
  if (s == "hdm") return DetectorKind::Hdm;
  throw ConfigError("detector must be none, rdn or hdm, got '" + s + "'");
}

std::string detector_name(DetectorKind k) {
  switch (k) {
    case DetectorKind::None: return "none";
    case DetectorKind::Rdn: return "rdn";
    case DetectorKind::Hdm: return "hdm";
  }
  return "none";
}

// ---- stages -------------------------------------------------------------------------

void run_synth(const Run& run) {
  Stage stage(run, "synth", "data", {});
  auto spec = scene::SceneSpec::from_config(run.config, "scene.");
  scene::save_scene_spec(spec, stage.path("scene.cfg"));
  const auto train_dir = run.config.get_string("data.train_dir", "");
  const auto test_dir = run.config.get_string("data.test_dir", "");
  std::vector<scene::Sample> train, test;
  if (!train_dir.empty() || !test_dir.empty()) {
    if (train_dir.empty() || test_dir.empty()) throw ConfigError("data.train_dir and data.test_dir must be set together");
    train = scene::load_dataset(train_dir, spec.class_count());
    test = scene::load_dataset(test_dir, spec.class_count());
    if (train.size() < 2 || test.empty()) throw ConfigError("imported datasets need >= 2 training and >= 1 test images");
  } else {
    const int n_train = static_cast<int>(run.config.get_int("data.train_count", 48));
    const int n_test = static_cast<int>(run.config.get_int("data.test_count", 24));
    train = scene::generate_samples(spec, 0, n_train);
    test = scene::generate_samples(spec, n_train, n_test);
  }
  scene::save_dataset(train, stage.path("train"));
  scene::save_dataset(test, stage.path("test"));
  stage.finish({{"train", train.size()}, {"test", test.size()}, {"imported", !train_dir.empty()}});
}

void run_train_relam(const Run& run, Level level) {
  const std::string name = level_name(level);
  const std::vector<std::string> deps = level == Level::Image ? std::vector<std::string>{"data"} : std::vector<std::string>{"mine_hard"};
  Stage stage(run, "train-relam " + name, "relam_" + name, deps);
  if (!run.config.get_bool("relam." + name + ".enabled", true)) {
    stage.finish({{"enabled", false}});
    return;
  }
  auto cfg = relam::RelamConfig::from_config(run.config, "relam." + name + ".");
  cfg.seed = run.stage_seed("relam-" + name);
  std::vector<Image> day, night;
  if (level == Level::Image) {
    for (auto& s : load_split(run, "train")) {
      if (!s.day) throw PreconditionError("light adaptation needs paired day images in data/train/day");
      day.push_back(std::move(*s.day));
      night.push_back(std::move(s.image));
    }
  } else {
    const auto split = load_class_split(run);
    for (auto& r : hardmine::load_region_dataset(run.dir / "mine_hard" / "regions", split.region_class_count())) {
      if (r.day) day.push_back(std::move(*r.day));
      night.push_back(std::move(r.image));
    }
  }
  std::vector<relam::RelamLogEntry> log;
  auto nets = relam::train_relam(day, night, cfg, stage.path("log.jsonl"), &log);
  nets.save(stage.path("model.ckpt"));
  stage.finish({{"enabled", true}, {"steps", cfg.steps}, {"day_images", day.size()}, {"night_images", night.size()},
                {"final_L_S", log.empty() ? json(nullptr) : json(log.back().l_s)}});
}

void run_train_seg(const Run& run, Level level) {
  const std::string name = level_name(level);
  std::vector<std::string> deps =
      level == Level::Image ? std::vector<std::string>{"data", "relam_image"} : std::vector<std::string>{"mine_hard", "relam_region"};
  Stage stage(run, "train-seg " + name, "seg_" + name, deps);
  auto cfg = seg::SegTrainConfig::from_config(run.config, "seg." + name + ".");
  cfg.seed = run.stage_seed("seg-" + name);
  auto relam_nets = load_relam(run, level);

  std::vector<seg::LabeledImage> data;
  int classes = 0;
  json details;
  if (level == Level::Image) {
    auto train = load_split(run, "train");
    classes = scene_spec(run).class_count();
    // 3:1 fit/val split; the val part later measures per-class IoU for hard-class selection.
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(run.stage_seed("val-split"));
    std::shuffle(order.begin(), order.end(), rng.engine());
    const double vf = run.config.get_double("data.val_fraction", 0.25);
    const auto n_val = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(vf * train.size())), 1, train.size() - 1);
    std::vector<std::string> fit, val;
    for (std::size_t i = 0; i < order.size(); ++i) {
      const auto& s = train[order[i]];
      if (i < n_val) {
        val.push_back(s.stem);
      } else {
        fit.push_back(s.stem);
        data.push_back({s.image, s.labels});
      }
    }
    std::sort(fit.begin(), fit.end());
    std::sort(val.begin(), val.end());
    write_text(stage.path("split.json"), json{{"fit", fit}, {"val", val}}.dump(2) + "\n");
    details["fit"] = fit.size();
    details["val"] = val.size();
  } else {
    const auto split = load_class_split(run);
    classes = split.region_class_count();
    for (auto& r : hardmine::load_region_dataset(run.dir / "mine_hard" / "regions", classes))
      data.push_back({std::move(r.image), std::move(r.labels)});
    details["regions"] = data.size();
  }
  seg::SegTrainOptions opts;
  opts.out_dir = stage.path();
  opts.relam = relam_nets ? &*relam_nets : nullptr;
  auto result = seg::train_segmenter(data, classes, cfg, opts);
  result.model.save(stage.path("model.ckpt"));
  details["steps"] = cfg.steps;
  details["light_adaptation"] = relam_nets.has_value();
  if (!result.losses.empty()) details["final_loss"] = result.losses.back();
  stage.finish(details);
}

void run_mine_hard(const Run& run) {
  Stage stage(run, "mine-hard", "mine_hard", image_deps());
  auto train = load_split(run, "train");
  const auto split_info = read_json(run.dir / "seg_image" / "split.json");
  const auto val_stems = split_info.at("val").get<std::vector<std::string>>();
  ImageModels models(run);
  auto branch = models.branch();
  std::vector<LabelMask> preds, gts;
  for (const auto& s : train)
    if (std::binary_search(val_stems.begin(), val_stems.end(), s.stem)) {
      preds.push_back(branch.predict(s.image).argmax());
      gts.push_back(s.labels);
    }
  const auto spec = scene_spec(run);
  const auto iou = hardmine::per_class_iou(preds, gts, spec.class_count());
  const auto split = hardmine::split_classes(iou, run.config.get_double("hard.threshold", 0.5));
  split.save(stage.path("class_split.json"));
  if (split.hard.empty())
    throw ConfigError("no class has held-out IoU below hard.threshold; lower the hard-class threshold");
  const auto regions = hardmine::build_region_dataset(train, split, region_config(run));
  hardmine::save_region_dataset(regions, stage.path("regions"));
  json val_iou = json::array();
  for (double v : iou) val_iou.push_back(to_json_double(v));
  stage.finish({{"hard", split.hard}, {"val_iou", val_iou}, {"regions", regions.size()}});
}

void run_label_proposals(const Run& run, DetectorKind kind) {
  if (kind == DetectorKind::None) throw ConfigError("label-proposals needs rdn or hdm");
  auto deps = image_deps();
  deps.push_back("mine_hard");
  if (kind == DetectorKind::Hdm)
    for (const auto* d : {"relam_region", "seg_region", "detector_rdn"}) deps.emplace_back(d);
  Stage stage(run, "label-proposals " + detector_name(kind), "labels_" + detector_name(kind), deps);

  auto train = load_split(run, "train");
  const auto split = load_class_split(run);
  const auto rc = region_config(run);
  ImageModels image(run);
  auto image_branch = image.branch();
  std::optional<RegionModels> region;
  std::optional<proposals::Detector> rdn;
  if (kind == DetectorKind::Hdm) {
    region.emplace(run);
    rdn.emplace(proposals::Detector::load(run.dir / "detector_rdn" / "model.ckpt"));
  }
  const double box_threshold = run.config.get_double("rdn.box_threshold", 0.5);
  const auto rule = proposals::parse_hdm_rule(run.config.get_string("hdm.rule", "region_better"));

  proposals::ProposalTable table;
  long positives = 0, total = 0;
  double region_iou_sum = 0, image_iou_sum = 0;
  for (const auto& s : train) {
    const auto p_img = image_branch.predict(s.image);
    const auto boxes = pseudo_boxes(s.labels, split, rc);
    std::vector<proposals::Proposal> labelled;
    if (kind == DetectorKind::Rdn) {
      labelled = proposals::make_rdn_labels(boxes, p_img, s.labels, box_threshold);
    } else {
      auto candidates = proposals::propose(*rdn, s.image);
      for (const auto& b : boxes) candidates.push_back({proposals::to_boxf(b.box), 1.0, proposals::Label::Unlabeled});
      std::vector<proposals::HdmScore> scores;
      labelled = proposals::relabel_hdm(candidates, region->branch(), p_img, s.image, s.labels, split, rule, &scores);
      for (const auto& sc : scores) {
        region_iou_sum += sc.region_iou;
        image_iou_sum += sc.image_iou;
      }
    }
    for (const auto& p : labelled) positives += p.label == proposals::Label::Positive;
    total += static_cast<long>(labelled.size());
    table[s.stem] = std::move(labelled);
  }
  proposals::save_proposals(table, stage.path("proposals.tsv"));
  json details{{"proposals", total}, {"positive", positives}};
  if (kind == DetectorKind::Hdm && total > 0) {
    details["mean_region_iou"] = region_iou_sum / static_cast<double>(total);
    details["mean_image_iou"] = image_iou_sum / static_cast<double>(total);
  }
  stage.finish(details);
}

void run_train_detector(const Run& run, DetectorKind kind) {
  if (kind == DetectorKind::None) throw ConfigError("train-detector needs rdn or hdm");
  const std::string labels_dir = "labels_" + detector_name(kind);
  Stage stage(run, "train-detector " + detector_name(kind), detector_dir(kind), {"data", labels_dir});
  auto cfg = proposals::DetectorConfig::from_config(run.config, "detector.");
  cfg.seed = run.stage_seed("detector-" + detector_name(kind));
  auto table = proposals::load_proposals(run.dir / labels_dir / "proposals.tsv");
  std::vector<proposals::DetectorSample> data;
  std::vector<std::vector<proposals::BoxF>> targets;
  for (auto& s : load_split(run, "train")) {
    proposals::DetectorSample d{std::move(s.image), table.count(s.stem) ? table.at(s.stem) : std::vector<proposals::Proposal>{}};
    std::vector<proposals::BoxF> pos;
    for (const auto& p : d.boxes)
      if (p.label == proposals::Label::Positive) pos.push_back(p.box);
    targets.push_back(std::move(pos));
    data.push_back(std::move(d));
  }
  auto det = proposals::train_detector(data, cfg, stage.path("loss.jsonl"));
  det.save(stage.path("model.ckpt"));
  std::vector<std::vector<proposals::Proposal>> props;
  for (const auto& d : data) props.push_back(proposals::propose(det, d.image));
  stage.finish({{"steps", cfg.steps}, {"train_recall", to_json_double(proposals::recall(props, targets))}});
}

void run_infer(const Run& run, DetectorKind kind, const std::string& name, bool parallel) {
  auto deps = image_deps();
  deps.push_back("mine_hard");
  if (kind != DetectorKind::None)
    for (const auto& d : {std::string("relam_region"), std::string("seg_region"), detector_dir(kind)}) deps.push_back(d);
  const std::string out_name = name.empty() ? detector_name(kind) : name;
  Stage stage(run, "infer --detector " + detector_name(kind), "infer_" + out_name, deps);

  ImageModels image(run);
  std::optional<RegionModels> region;
  std::optional<proposals::Detector> det;
  fuse::PipelineBundle bundle;
  bundle.image = image.branch();
  bundle.split = load_class_split(run);
  bundle.policy = fuse::parse_merge_policy(run.config.get_string("merge.policy", "gated"));
  bundle.keep = static_cast<int>(run.config.get_int("detector.keep", 10));
  if (kind != DetectorKind::None) {
    region.emplace(run);
    det.emplace(proposals::Detector::load(run.dir / detector_dir(kind) / "model.ckpt"));
    bundle.region = region->branch();
    bundle.detector = &*det;
  }
  fs::create_directories(stage.path("masks"));
  fs::create_directories(stage.path("overlays"));
  std::ofstream diag(stage.path("diagnostics.jsonl"));
  proposals::ProposalTable table;
  long overwritten = 0;
  for (const auto& s : load_split(run, "test")) {
    auto r = fuse::infer_dual(bundle, s.image, parallel);
    write_png_gray(stage.path("masks/" + s.stem + ".png"), r.final_mask);
    auto ov = fuse::overlay(s.image, r.final_mask);
    quantize_8bit(ov);
    write_png_rgb(stage.path("overlays/" + s.stem + ".png"), ov);
    json boxes = json::array();
    auto& props = table[s.stem];
    for (const auto& b : r.boxes) {
      boxes.push_back({{"x", b.box.x}, {"y", b.box.y}, {"w", b.box.w}, {"h", b.box.h}, {"score", b.score},
                       {"overwritten", b.overwritten}, {"histogram", b.histogram}});
      props.push_back({proposals::to_boxf(b.box), b.score, proposals::Label::Unlabeled});
      overwritten += b.overwritten;
    }
    diag << json{{"image", s.stem}, {"boxes", boxes}}.dump() << '\n';
  }
  diag.close();
  proposals::save_proposals(table, stage.path("proposals.tsv"));
  stage.finish({{"detector", detector_name(kind)}, {"overwritten_pixels", overwritten}});
}

std::string run_eval(const Run& run, const std::vector<std::string>& methods_in) {
  std::vector<std::string> methods = methods_in;
  if (methods.empty()) {
    if (fs::exists(run.dir))
      for (const auto& e : fs::directory_iterator(run.dir)) {
        const auto n = e.path().filename().string();
        if (e.is_directory() && n.rfind("infer_", 0) == 0) methods.push_back(n.substr(6));
      }
    std::sort(methods.begin(), methods.end());
    if (methods.empty()) throw PreconditionError("'eval' found no infer_* outputs; run `infer` first");
  }
  std::vector<std::string> deps{"data", "mine_hard"};
  for (const auto& m : methods) deps.push_back("infer_" + m);
  Stage stage(run, "eval", "eval", deps);

  const auto spec = scene_spec(run);
  const auto split = load_class_split(run);
  const auto test = load_split(run, "test");
  metrics::ReportInput in;
  for (const auto& c : spec.classes) in.class_names.push_back(c.name);
  in.hard_classes = split.hard;
  in.provenance = {{"seed", std::to_string(run.seed)}, {"config_hash", run.config_hash}};
  json summary;
  summary["seed"] = run.seed;
  summary["config_hash"] = run.config_hash;
  summary["discovered_hard"] = split.hard;
  summary["planted_hard"] = spec.hard_classes;
  json per_method = json::object();
  for (const auto& m : methods) {
    metrics::ConfusionMatrix cm(spec.class_count());
    for (const auto& s : test) {
      const auto p = run.dir / ("infer_" + m) / "masks" / (s.stem + ".png");
      if (!fs::exists(p)) throw PreconditionError("infer_" + m + " has no mask for " + s.stem);
      cm = metrics::accumulate(cm, read_png_gray(p), s.labels);
    }
    const auto r = metrics::miou(cm);
    in.methods.push_back({m, r});
    in.provenance.emplace_back("infer_" + m, sha256_file(run.dir / ("infer_" + m) / "manifest.json"));
    per_method[m] = {{"miou", to_json_double(r.mean)},
                     {"hard_miou", to_json_double(metrics::subset_mean(r.per_class, split.hard))},
                     {"planted_hard_miou", to_json_double(metrics::subset_mean(r.per_class, spec.hard_classes))}};
  }
  summary["methods"] = per_method;
  const auto table = metrics::report(in, stage.path("report"));
  write_text(stage.path("summary.json"), summary.dump(2) + "\n");
  stage.finish({{"methods", methods}});
  return table;
}

void run_all(const Run& run) {
  run_synth(run);
  run_train_relam(run, Level::Image);
  run_train_seg(run, Level::Image);
  run_mine_hard(run);
  run_train_relam(run, Level::Region);
  run_train_seg(run, Level::Region);
  run_label_proposals(run, DetectorKind::Rdn);
  run_train_detector(run, DetectorKind::Rdn);
  run_label_proposals(run, DetectorKind::Hdm);
  run_train_detector(run, DetectorKind::Hdm);
  run_infer(run, DetectorKind::None);
  run_infer(run, DetectorKind::Rdn);
  run_infer(run, DetectorKind::Hdm);
  std::cerr << run_eval(run);
}

std::vector<std::pair<std::string, std::string>> stage_outputs(const Run& run, const std::string& stage_dir) {
  const auto manifest = run.dir / stage_dir / "manifest.json";
  std::vector<std::pair<std::string, std::string>> out;
  if (!fs::exists(manifest)) return out;
  const auto m = read_json(manifest);
  for (const auto& [k, v] : m.at("outputs").items()) out.emplace_back(k, v.get<std::string>());
  return out;
}

}  // namespace dlseg::pipeline
