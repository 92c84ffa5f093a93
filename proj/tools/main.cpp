// Command-line front end over the C API in qus/qus.h. Exit codes mirror
// qus_status: 0 ok, 1 usage, 2 data, 3 numeric/training.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "qus/qus.h"

namespace {

bool load_config_text(const std::string& path, std::string& out) {
  out.clear();
  if (path.empty()) return true;
  std::ifstream is(path, std::ios::binary);
  if (!is) return false;
  std::ostringstream ss;
  ss << is.rdbuf();
  out = ss.str();
  return true;
}

int report(int status) {
  if (status != QUS_OK) std::fprintf(stderr, "error: %s\n", qus_last_error());
  return status;
}

const char* opt(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"speckle statistics classification toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version,-V", std::string(qus_version()));

  std::string config_path;
  std::string out_dir;
  std::string dataset_dir;
  std::string split;
  std::string model_id;
  std::string checkpoint;
  std::string frames_file;
  std::string eval_dataset_dir;
  std::string branch_cnn;
  std::string branch_mlp;
  std::uint64_t seed = 42;
  std::uint32_t frame_index = 0;
  double overlap = 0.5;

  auto* sim = app.add_subcommand("simulate", "simulate phantoms and write a dataset");
  sim->add_option("--config", config_path, "JSON configuration file");
  sim->add_option("--seed", seed, "master seed")->capture_default_str();
  sim->add_option("--out", out_dir, "output dataset directory")->required();

  auto* feat = app.add_subcommand("featurize", "write per-patch statistics as CSV");
  feat->add_option("--dataset", dataset_dir, "dataset directory")->required();
  feat->add_option("--split", split, "split name")->default_val("train");
  feat->add_option("--config", config_path, "JSON configuration file");
  feat->add_option("--out", out_dir, "output directory")->required();

  auto* tr = app.add_subcommand("train", "train a classifier on a dataset");
  tr->add_option("--model", model_id, "model id (mlp, svm, rf, cnn1..cnn6)")
      ->required();
  tr->add_option("--dataset", dataset_dir, "dataset directory")->required();
  tr->add_option("--config", config_path, "JSON configuration file");
  tr->add_option("--seed", seed, "training seed")->capture_default_str();
  tr->add_option("--out", out_dir, "output directory")->required();
  tr->add_option("--branch-cnn", branch_cnn,
                 "cnn checkpoint reused as a frozen fusion branch");
  tr->add_option("--branch-mlp", branch_mlp,
                 "mlp checkpoint reused as a frozen fusion branch");

  auto* ev = app.add_subcommand("eval", "score a split and report ROC metrics");
  ev->add_option("--checkpoint", checkpoint, "model checkpoint (.qusm)")->required();
  ev->add_option("--dataset", dataset_dir, "dataset directory")->required();
  ev->add_option("--split", split, "split name")->default_val("test");
  ev->add_option("--config", config_path, "JSON configuration file");
  ev->add_option("--seed", seed, "bootstrap seed")->capture_default_str();
  ev->add_option("--out", out_dir, "output directory")->required();

  auto* mp = app.add_subcommand("map", "sliding-window probability map of a frame");
  mp->add_option("--checkpoint", checkpoint, "model checkpoint (.qusm)")->required();
  mp->add_option("--frames", frames_file, "frames container (.qusf)")->required();
  mp->add_option("--frame", frame_index, "frame index")->capture_default_str();
  mp->add_option("--overlap", overlap, "fractional window overlap in [0,1)")
      ->capture_default_str();
  mp->add_option("--out", out_dir, "output directory")->required();

  auto* ft = app.add_subcommand("finetune", "adapt a neural checkpoint to a dataset");
  ft->add_option("--checkpoint", checkpoint, "model checkpoint (.qusm)")->required();
  ft->add_option("--dataset", dataset_dir, "adaptation dataset directory")->required();
  ft->add_option("--eval-dataset", eval_dataset_dir,
                 "held-out dataset whose test split must stay disjoint");
  ft->add_option("--config", config_path, "JSON configuration file");
  ft->add_option("--seed", seed, "training seed")->capture_default_str();
  ft->add_option("--out", out_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return QUS_ERR_USAGE;
  }

  std::string config_text;
  if (!load_config_text(config_path, config_text)) {
    std::fprintf(stderr, "error: cannot read config file %s\n", config_path.c_str());
    return QUS_ERR_USAGE;
  }

  if (*sim)
    return report(qus_simulate(opt(config_text), seed, out_dir.c_str()));
  if (*feat)
    return report(qus_featurize(dataset_dir.c_str(), split.c_str(),
                                opt(config_text), out_dir.c_str()));
  if (*tr)
    return report(qus_train(model_id.c_str(), dataset_dir.c_str(), opt(config_text),
                            seed, out_dir.c_str(), opt(branch_cnn), opt(branch_mlp)));
  if (*ev)
    return report(qus_eval(checkpoint.c_str(), dataset_dir.c_str(), split.c_str(),
                           opt(config_text), seed, out_dir.c_str()));
  if (*mp)
    return report(qus_map(checkpoint.c_str(), frames_file.c_str(), frame_index,
                          overlap, out_dir.c_str()));
  if (*ft)
    return report(qus_finetune(checkpoint.c_str(), dataset_dir.c_str(),
                               opt(eval_dataset_dir), opt(config_text), seed,
                               out_dir.c_str()));
  return QUS_ERR_USAGE;
}
