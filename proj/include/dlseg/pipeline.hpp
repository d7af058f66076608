#pragma once

// Staged training and inference over a run directory. Every stage writes its own
// subdirectory with a manifest.json recording the config hash, the seed, the hashes
// of the upstream manifests it consumed and the sha256 of every file it produced.
//
//   data/          synth              scene spec, train and test sets
//   relam_image/   train-relam image
//   seg_image/     train-seg image    trained on the 3:1 fit split
//   mine_hard/     mine-hard          class split, regional dataset
//   relam_region/  train-relam region
//   seg_region/    train-seg region
//   labels_rdn/    label-proposals rdn
//   detector_rdn/  train-detector rdn
//   labels_hdm/    label-proposals hdm
//   detector_hdm/  train-detector hdm
//   infer_<name>/  infer              masks, overlays, diagnostics
//   eval/          eval               report over every infer_<name>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dlseg/kvconfig.hpp"

namespace dlseg::pipeline {

/// Built-in defaults; configs/default.cfg mirrors them.
KvConfig default_config();

struct Run {
  std::filesystem::path dir;
  KvConfig config;  // defaults <- file <- --seed <- overrides
  std::uint64_t seed = 0;
  std::string config_hash;

  /// Stage seed derived from the run seed and a stage tag.
  std::uint64_t stage_seed(const std::string& tag) const;
};

Run open_run(const std::filesystem::path& dir, const std::optional<std::filesystem::path>& config_file,
             std::optional<std::uint64_t> seed, const std::vector<std::string>& overrides);

enum class Level { Image, Region };
Level parse_level(const std::string& s);

enum class DetectorKind { None, Rdn, Hdm };
DetectorKind parse_detector(const std::string& s);
std::string detector_name(DetectorKind k);

void run_synth(const Run& run);
void run_train_relam(const Run& run, Level level);
void run_train_seg(const Run& run, Level level);
void run_mine_hard(const Run& run);
void run_label_proposals(const Run& run, DetectorKind kind);
void run_train_detector(const Run& run, DetectorKind kind);
/// Output goes to infer_<name>; name defaults to the detector name.
void run_infer(const Run& run, DetectorKind kind, const std::string& name = {}, bool parallel = false);
/// Report over the given infer names, or over every infer_* directory when empty.
/// Returns the formatted table.
std::string run_eval(const Run& run, const std::vector<std::string>& methods = {});

/// Every training stage in dependency order, then inference for none/rdn/hdm and eval.
void run_all(const Run& run);

/// sha256 of every file a stage recorded, keyed by relative path; empty if absent.
std::vector<std::pair<std::string, std::string>> stage_outputs(const Run& run, const std::string& stage_dir);

}  // namespace dlseg::pipeline
