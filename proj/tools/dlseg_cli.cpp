// dlseg: staged training and inference over a run directory.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dlseg/errors.hpp"
#include "dlseg/pipeline.hpp"
#include "dlseg/tensor.hpp"

namespace pl = dlseg::pipeline;

int main(int argc, char** argv) {
  CLI::App app{"Night-time segmentation pipeline: light adaptation, hard-class mining, dual-level inference"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::string run_dir = "run";
  std::vector<std::string> overrides;
  app.add_option("--config", config_file, "key=value config file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "run seed (overrides the config)");
  app.add_option("--run-dir", run_dir, "run directory")->capture_default_str();
  app.add_option("--stage-override", overrides, "key=value override, repeatable");

  std::string level, kind, name, detector = "none";
  bool parallel = false;
  std::vector<std::string> methods;

  auto* synth = app.add_subcommand("synth", "generate (or import) the train and test sets");
  auto* relam = app.add_subcommand("train-relam", "train the light adaptation model");
  relam->add_option("level", level, "image or region")->required()->check(CLI::IsMember({"image", "region"}));
  auto* seg = app.add_subcommand("train-seg", "train a segmentation model");
  seg->add_option("level", level, "image or region")->required()->check(CLI::IsMember({"image", "region"}));
  auto* mine = app.add_subcommand("mine-hard", "select hard classes and build the regional dataset");
  auto* label = app.add_subcommand("label-proposals", "label pseudo boxes for detector training");
  label->add_option("kind", kind, "rdn or hdm")->required()->check(CLI::IsMember({"rdn", "hdm"}));
  auto* det = app.add_subcommand("train-detector", "train the hard-region detector");
  det->add_option("kind", kind, "rdn or hdm")->required()->check(CLI::IsMember({"rdn", "hdm"}));
  auto* infer = app.add_subcommand("infer", "segment the test set");
  infer->add_option("--detector", detector, "none, rdn or hdm")->check(CLI::IsMember({"none", "rdn", "hdm"}))->capture_default_str();
  infer->add_option("--name", name, "output name (default: detector name)");
  infer->add_flag("--parallel", parallel, "run the image and region branches concurrently");
  auto* eval = app.add_subcommand("eval", "score infer outputs against the test labels");
  eval->add_option("methods", methods, "infer names to compare (default: all)");
  auto* all = app.add_subcommand("all", "run every stage in order");
  auto* show = app.add_subcommand("config", "print the resolved configuration");
  for (auto* sub : {synth, relam, seg, mine, label, det, infer, eval, all, show}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    dlseg::configure_torch_runtime();
    std::optional<std::filesystem::path> cfg;
    if (!config_file.empty()) cfg = config_file;
    const auto run = pl::open_run(run_dir, cfg, seed, overrides);
    if (*synth) pl::run_synth(run);
    else if (*relam) pl::run_train_relam(run, pl::parse_level(level));
    else if (*seg) pl::run_train_seg(run, pl::parse_level(level));
    else if (*mine) pl::run_mine_hard(run);
    else if (*label) pl::run_label_proposals(run, pl::parse_detector(kind));
    else if (*det) pl::run_train_detector(run, pl::parse_detector(kind));
    else if (*infer) pl::run_infer(run, pl::parse_detector(detector), name, parallel);
    else if (*eval) std::cout << pl::run_eval(run, methods);
    else if (*all) pl::run_all(run);
    else if (*show) std::cout << "# config hash " << run.config_hash << '\n' << run.config.serialize();
    return 0;
  } catch (const dlseg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const dlseg::StalenessError& e) {
    std::cerr << "stale input: " << e.what() << '\n';
    return 3;
  } catch (const dlseg::PreconditionError& e) {
    std::cerr << "missing input: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
