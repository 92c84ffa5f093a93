#include "qus/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "qus/nn/checkpoint.hpp"

namespace qus::pipeline {

namespace fs = std::filesystem;

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!os) throw IoError("failed while writing " + path.string());
}

void write_json_file(const fs::path& path, const json& j) {
  write_text(path, j.dump(2) + "\n");
}

std::string fmt(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void check_keys(const json& j, const std::vector<std::string>& allowed,
                const std::string& ctx) {
  if (!j.is_object()) throw InvalidArgument(ctx + ": expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      throw InvalidArgument(ctx + ": unknown key \"" + it.key() + "\"");
  }
}

std::vector<std::string> keys_of(const json& j) {
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  return keys;
}

json feature_config_to_json(const stats::FeatureConfig& f) {
  json j;
  j["v"] = f.v;
  j["entropy_bins"] = f.entropy_bins;
  return j;
}

stats::FeatureConfig feature_config_from_json(const json& j) {
  stats::FeatureConfig f;
  if (j.contains("v")) f.v = j.at("v").get<double>();
  if (j.contains("entropy_bins")) f.entropy_bins = j.at("entropy_bins").get<int>();
  return f;
}

json normalizer_to_json(const stats::FeatureNormalizer& n) {
  json j;
  j["lo"] = n.lo;
  j["hi"] = n.hi;
  return j;
}

stats::FeatureNormalizer normalizer_from_json(const json& j) {
  stats::FeatureNormalizer n;
  const auto lo = j.at("lo").get<std::vector<double>>();
  const auto hi = j.at("hi").get<std::vector<double>>();
  if (lo.size() != 4 || hi.size() != 4)
    throw IoError("checkpoint normalizer must have 4 lo/hi entries");
  std::copy(lo.begin(), lo.end(), n.lo.begin());
  std::copy(hi.begin(), hi.end(), n.hi.begin());
  return n;
}

json history_json(const train::TrainHistory& h) {
  json j;
  j["best_epoch"] = h.best_epoch;
  j["best_val_auc"] = h.best_val_auc;
  j["stopped_epoch"] = h.stopped_epoch;
  json arr = json::array();
  for (const auto& e : h.epochs) {
    json r;
    r["epoch"] = e.epoch;
    r["train_loss"] = e.train_loss;
    r["val_auc"] = e.val_auc;
    r["lr_first"] = e.lr_first;
    arr.push_back(r);
  }
  j["epochs"] = arr;
  return j;
}

const json& req(const json& h, const char* key) {
  if (!h.contains(key))
    throw IoError(std::string("checkpoint header missing \"") + key + "\"");
  return h.at(key);
}

const char* family_name(ModelKind::Family f) {
  switch (f) {
    case ModelKind::Family::MLP: return "mlp";
    case ModelKind::Family::SVM: return "svm";
    case ModelKind::Family::RF: return "rf";
    case ModelKind::Family::CNN: return "cnn";
    case ModelKind::Family::Fusion: return "fusion";
  }
  throw InvalidArgument("unknown model family");
}

json run_stub(const char* command, std::uint64_t seed) {
  json run;
  run["command"] = command;
  run["tool_version"] = kVersion;
  run["seed"] = seed;
  return run;
}

double squash(double d) {
  return d >= 0 ? 1.0 / (1.0 + std::exp(-d)) : std::exp(d) / (1.0 + std::exp(d));
}

std::vector<int> int_labels(std::span<const EnvelopePatch> patches) {
  std::vector<int> y(patches.size());
  for (std::size_t i = 0; i < patches.size(); ++i)
    y[i] = patches[i].label == Label::FDS ? 1 : 0;
  return y;
}

// ---------------------------------------------------------------------------
// Checkpoint headers
// ---------------------------------------------------------------------------

json base_header(const ModelKind& mk, std::uint64_t seed,
                 const data::Manifest& manifest) {
  json h;
  h["format"] = "qus-model";
  h["format_version"] = 1;
  h["tool_version"] = kVersion;
  h["model_id"] = mk.id;
  h["family"] = family_name(mk.family);
  if (mk.family == ModelKind::Family::CNN || mk.family == ModelKind::Family::Fusion)
    h["channels"] = nn::channels_name(mk.channels);
  h["seed"] = seed;
  h["train_dataset_id"] = manifest.dataset_id;
  h["patch_rows"] = manifest.patch_rows;
  h["patch_cols"] = manifest.patch_cols;
  return h;
}

// ---------------------------------------------------------------------------
// Scoring-model implementations
// ---------------------------------------------------------------------------

class MlpScorer final : public ScoringModel {
 public:
  MlpScorer(json header, std::string id, nn::MLPModel<float> model,
            stats::FeatureConfig fcfg, stats::FeatureNormalizer norm)
      : header_(std::move(header)), id_(std::move(id)), model_(std::move(model)),
        fcfg_(fcfg), norm_(norm) {}
  const std::string& id() const override { return id_; }
  const json& header() const override { return header_; }
  double score(const EnvelopePatch& patch) override {
    return score_batch(std::span(&patch, 1))[0];
  }
  std::vector<double> score_batch(std::span<const EnvelopePatch> patches) override {
    return train::score_patches(model_, patches, fcfg_, norm_);
  }

 private:
  json header_;
  std::string id_;
  nn::MLPModel<float> model_;
  stats::FeatureConfig fcfg_;
  stats::FeatureNormalizer norm_;
};

class CnnScorer final : public ScoringModel {
 public:
  CnnScorer(json header, std::string id, nn::CNNModel<float> model)
      : header_(std::move(header)), id_(std::move(id)), model_(std::move(model)) {}
  const std::string& id() const override { return id_; }
  const json& header() const override { return header_; }
  double score(const EnvelopePatch& patch) override {
    return score_batch(std::span(&patch, 1))[0];
  }
  std::vector<double> score_batch(std::span<const EnvelopePatch> patches) override {
    return train::score_patches(model_, patches);
  }

 private:
  json header_;
  std::string id_;
  nn::CNNModel<float> model_;
};

class FusionScorer final : public ScoringModel {
 public:
  FusionScorer(json header, std::string id, nn::FusionModel<float> model,
               stats::FeatureConfig fcfg, stats::FeatureNormalizer norm)
      : header_(std::move(header)), id_(std::move(id)), model_(std::move(model)),
        fcfg_(fcfg), norm_(norm) {}
  const std::string& id() const override { return id_; }
  const json& header() const override { return header_; }
  double score(const EnvelopePatch& patch) override {
    return score_batch(std::span(&patch, 1))[0];
  }
  std::vector<double> score_batch(std::span<const EnvelopePatch> patches) override {
    return train::score_patches(model_, patches, fcfg_, norm_);
  }

 private:
  json header_;
  std::string id_;
  nn::FusionModel<float> model_;
  stats::FeatureConfig fcfg_;
  stats::FeatureNormalizer norm_;
};

class SvmScorer final : public ScoringModel {
 public:
  SvmScorer(json header, std::string id, ml::SVMModel model,
            stats::FeatureConfig fcfg, stats::FeatureNormalizer norm)
      : header_(std::move(header)), id_(std::move(id)), model_(std::move(model)),
        fcfg_(fcfg), norm_(norm) {}
  const std::string& id() const override { return id_; }
  const json& header() const override { return header_; }
  double score(const EnvelopePatch& patch) override {
    return score_batch(std::span(&patch, 1))[0];
  }
  std::vector<double> score_batch(std::span<const EnvelopePatch> patches) override {
    const auto feats = train::normalized_features(patches, fcfg_, norm_);
    std::vector<double> out(feats.size());
    for (std::size_t i = 0; i < feats.size(); ++i)
      out[i] = squash(ml::svm_decision(model_, feats[i]));
    return out;
  }

 private:
  json header_;
  std::string id_;
  ml::SVMModel model_;
  stats::FeatureConfig fcfg_;
  stats::FeatureNormalizer norm_;
};

class RfScorer final : public ScoringModel {
 public:
  RfScorer(json header, std::string id, ml::RandomForestModel model,
           stats::FeatureConfig fcfg, stats::FeatureNormalizer norm)
      : header_(std::move(header)), id_(std::move(id)), model_(std::move(model)),
        fcfg_(fcfg), norm_(norm) {}
  const std::string& id() const override { return id_; }
  const json& header() const override { return header_; }
  double score(const EnvelopePatch& patch) override {
    return score_batch(std::span(&patch, 1))[0];
  }
  std::vector<double> score_batch(std::span<const EnvelopePatch> patches) override {
    const auto feats = train::normalized_features(patches, fcfg_, norm_);
    std::vector<double> out(feats.size());
    for (std::size_t i = 0; i < feats.size(); ++i)
      out[i] = ml::rf_predict_proba(model_, feats[i]);
    return out;
  }

 private:
  json header_;
  std::string id_;
  ml::RandomForestModel model_;
  stats::FeatureConfig fcfg_;
  stats::FeatureNormalizer norm_;
};

// ---------------------------------------------------------------------------
// Checkpoint loading into trainable models
// ---------------------------------------------------------------------------

struct LoadedNN {
  ModelKind kind;
  std::uint64_t seed = 0;
  double dropout = 0.0;
  stats::FeatureConfig fcfg;      // mlp/fusion only
  stats::FeatureNormalizer norm;  // mlp/fusion only
  std::optional<nn::MLPModel<float>> mlp;
  std::optional<nn::CNNModel<float>> cnn;
  std::optional<nn::FusionModel<float>> fusion;
  json header;
};

LoadedNN load_nn_from(const ckpt::LoadedModelFile& lf) {
  LoadedNN out;
  out.header = lf.header;
  const json& h = lf.header;
  out.kind = model_kind(req(h, "model_id").get<std::string>());
  out.seed = req(h, "seed").get<std::uint64_t>();
  out.dropout = req(h, "dropout").get<double>();
  const std::string family = req(h, "family").get<std::string>();
  if (family != family_name(out.kind.family))
    throw IoError("checkpoint family does not match its model id");
  switch (out.kind.family) {
    case ModelKind::Family::MLP: {
      out.mlp.emplace(out.dropout, out.seed);
      ckpt::validate_manifest(*out.mlp, req(h, "params"));
      ckpt::unflatten(*out.mlp, lf.blob);
      out.fcfg = feature_config_from_json(req(h, "feature_config"));
      out.norm = normalizer_from_json(req(h, "normalizer"));
      break;
    }
    case ModelKind::Family::CNN: {
      out.cnn.emplace(out.kind.channels, out.dropout, out.seed);
      ckpt::validate_manifest(*out.cnn, req(h, "params"));
      ckpt::unflatten(*out.cnn, lf.blob);
      break;
    }
    case ModelKind::Family::Fusion: {
      out.fusion.emplace(out.kind.channels, out.dropout, out.seed);
      ckpt::validate_manifest(*out.fusion, req(h, "params"));
      ckpt::unflatten(*out.fusion, lf.blob);
      out.fcfg = feature_config_from_json(req(h, "feature_config"));
      out.norm = normalizer_from_json(req(h, "normalizer"));
      break;
    }
    default:
      throw InvalidArgument("model " + out.kind.id + " is not a neural checkpoint");
  }
  return out;
}

LoadedNN load_nn_checkpoint(const fs::path& path) {
  const auto lf = ckpt::load_model_file(path);
  try {
    return load_nn_from(lf);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed checkpoint header in " + path.string() + ": " + e.what());
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

RunConfig parse_config(const std::string& json_text) {
  RunConfig cfg;
  if (json_text.empty()) return cfg;
  json j;
  try {
    j = json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("config: invalid JSON: ") + e.what());
  }
  try {
    check_keys(j, {"sim", "dataset", "features", "train", "augment", "svm_grid",
                   "rf_grid", "eval"},
               "config");
    if (j.contains("sim")) {
      json def;
      sim::to_json(def, cfg.sim);
      check_keys(j["sim"], keys_of(def), "config.sim");
      sim::from_json(j["sim"], cfg.sim);
    }
    if (j.contains("dataset")) {
      json def;
      sim::to_json(def, cfg.dataset);
      check_keys(j["dataset"], keys_of(def), "config.dataset");
      sim::from_json(j["dataset"], cfg.dataset);
    }
    if (j.contains("features")) {
      check_keys(j["features"], {"v", "entropy_bins"}, "config.features");
      cfg.features = feature_config_from_json(j["features"]);
    }
    if (j.contains("train")) {
      json def;
      train::to_json(def, cfg.schedule);
      check_keys(j["train"], keys_of(def), "config.train");
      train::from_json(j["train"], cfg.schedule);
    }
    if (j.contains("augment")) {
      json def;
      train::to_json(def, cfg.augment);
      check_keys(j["augment"], keys_of(def), "config.augment");
      train::from_json(j["augment"], cfg.augment);
    }
    if (j.contains("svm_grid")) {
      const json& g = j["svm_grid"];
      check_keys(g, {"c_values", "gamma_values", "tol"}, "config.svm_grid");
      if (g.contains("c_values"))
        cfg.svm_grid.c_values = g.at("c_values").get<std::vector<double>>();
      if (g.contains("gamma_values"))
        cfg.svm_grid.gamma_values = g.at("gamma_values").get<std::vector<double>>();
      if (g.contains("tol")) cfg.svm_grid.tol = g.at("tol").get<double>();
    }
    if (j.contains("rf_grid")) {
      const json& g = j["rf_grid"];
      check_keys(g, {"trees", "max_depths"}, "config.rf_grid");
      if (g.contains("trees")) cfg.rf_grid.trees = g.at("trees").get<std::vector<int>>();
      if (g.contains("max_depths"))
        cfg.rf_grid.max_depths = g.at("max_depths").get<std::vector<int>>();
    }
    if (j.contains("eval")) {
      const json& g = j["eval"];
      check_keys(g, {"bootstrap_resamples", "ci_level"}, "config.eval");
      if (g.contains("bootstrap_resamples"))
        cfg.bootstrap_resamples = g.at("bootstrap_resamples").get<int>();
      if (g.contains("ci_level")) cfg.ci_level = g.at("ci_level").get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
  if (cfg.bootstrap_resamples < 1)
    throw InvalidArgument("config.eval: bootstrap_resamples must be >= 1");
  if (!(cfg.ci_level > 0.0 && cfg.ci_level < 1.0))
    throw InvalidArgument("config.eval: ci_level must lie in (0, 1)");
  if (cfg.svm_grid.c_values.empty() || cfg.svm_grid.gamma_values.empty())
    throw InvalidArgument("config.svm_grid: value lists must be non-empty");
  if (cfg.rf_grid.trees.empty() || cfg.rf_grid.max_depths.empty())
    throw InvalidArgument("config.rf_grid: value lists must be non-empty");
  return cfg;
}

json config_to_json(const RunConfig& cfg) {
  json j;
  json sim_json;
  sim::to_json(sim_json, cfg.sim);
  json spec_json;
  sim::to_json(spec_json, cfg.dataset);
  json sched_json;
  train::to_json(sched_json, cfg.schedule);
  json aug_json;
  train::to_json(aug_json, cfg.augment);
  j["sim"] = sim_json;
  j["dataset"] = spec_json;
  j["features"] = feature_config_to_json(cfg.features);
  j["train"] = sched_json;
  j["augment"] = aug_json;
  j["svm_grid"] = json{{"c_values", cfg.svm_grid.c_values},
                       {"gamma_values", cfg.svm_grid.gamma_values},
                       {"tol", cfg.svm_grid.tol}};
  j["rf_grid"] = json{{"trees", cfg.rf_grid.trees},
                      {"max_depths", cfg.rf_grid.max_depths}};
  j["eval"] = json{{"bootstrap_resamples", cfg.bootstrap_resamples},
                   {"ci_level", cfg.ci_level}};
  return j;
}

ModelKind model_kind(const std::string& model_id) {
  using F = ModelKind::Family;
  if (model_id == "mlp") return {model_id, F::MLP, nn::Channels::A};
  if (model_id == "svm") return {model_id, F::SVM, nn::Channels::A};
  if (model_id == "rf") return {model_id, F::RF, nn::Channels::A};
  if (model_id == "cnn1") return {model_id, F::CNN, nn::Channels::A};
  if (model_id == "cnn2") return {model_id, F::Fusion, nn::Channels::A};
  if (model_id == "cnn3") return {model_id, F::CNN, nn::Channels::AlogA};
  if (model_id == "cnn4") return {model_id, F::Fusion, nn::Channels::AlogA};
  if (model_id == "cnn5") return {model_id, F::CNN, nn::Channels::Both};
  if (model_id == "cnn6") return {model_id, F::Fusion, nn::Channels::Both};
  throw InvalidArgument("unknown model id \"" + model_id +
                        "\" (expected mlp, svm, rf or cnn1..cnn6)");
}

std::unique_ptr<ScoringModel> load_scoring_model(const fs::path& checkpoint) {
  const auto lf = ckpt::load_model_file(checkpoint);
  try {
    const json& h = lf.header;
    if (req(h, "format").get<std::string>() != "qus-model")
      throw IoError("not a model checkpoint: " + checkpoint.string());
    const std::string family = req(h, "family").get<std::string>();
    const std::string id = req(h, "model_id").get<std::string>();
    if (family == "svm") {
      if (!lf.blob.empty()) throw IoError("svm checkpoint must not carry a tensor blob");
      ml::SVMModel m;
      ml::from_json(req(h, "model"), m);
      return std::make_unique<SvmScorer>(h, id, std::move(m),
                                         feature_config_from_json(req(h, "feature_config")),
                                         normalizer_from_json(req(h, "normalizer")));
    }
    if (family == "rf") {
      if (!lf.blob.empty()) throw IoError("rf checkpoint must not carry a tensor blob");
      ml::RandomForestModel m;
      ml::from_json(req(h, "model"), m);
      return std::make_unique<RfScorer>(h, id, std::move(m),
                                        feature_config_from_json(req(h, "feature_config")),
                                        normalizer_from_json(req(h, "normalizer")));
    }
    LoadedNN nn = load_nn_from(lf);
    switch (nn.kind.family) {
      case ModelKind::Family::MLP:
        return std::make_unique<MlpScorer>(h, id, std::move(*nn.mlp), nn.fcfg, nn.norm);
      case ModelKind::Family::CNN:
        return std::make_unique<CnnScorer>(h, id, std::move(*nn.cnn));
      case ModelKind::Family::Fusion:
        return std::make_unique<FusionScorer>(h, id, std::move(*nn.fusion), nn.fcfg,
                                              nn.norm);
      default:
        throw IoError("unknown model family \"" + family + "\"");
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed checkpoint header in " + checkpoint.string() + ": " +
                  e.what());
  }
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

void cmd_simulate(const RunConfig& cfg, std::uint64_t seed, const fs::path& out_dir) {
  ensure_dir(out_dir);
  const data::Manifest m = sim::build_dataset(cfg.sim, cfg.dataset, seed, out_dir);
  json run = run_stub("simulate", seed);
  run["dataset_id"] = m.dataset_id;
  run["config"] = config_to_json(cfg);
  json outputs = json::array();
  outputs.push_back("manifest.json");
  for (const auto& [name, rec] : m.splits) outputs.push_back(rec.file);
  if (m.frames) outputs.push_back(m.frames->file);
  run["outputs"] = outputs;
  write_json_file(out_dir / "run.json", run);
}

// ---------------------------------------------------------------------------
// featurize
// ---------------------------------------------------------------------------

void cmd_featurize(const fs::path& dataset_dir, const std::string& split,
                   const RunConfig& cfg, const fs::path& out_dir) {
  ensure_dir(out_dir);
  const auto manifest = data::read_manifest(dataset_dir / "manifest.json");
  const auto patches = data::load_split(dataset_dir, split, manifest);
  std::vector<stats::FeatureVector> features;
  std::vector<Label> labels;
  features.reserve(patches.size());
  labels.reserve(patches.size());
  for (const auto& p : patches) {
    features.push_back(stats::featurize(p, cfg.features));
    labels.push_back(p.label);
  }
  const std::string csv_name = "features_" + split + ".csv";
  {
    std::ofstream os(out_dir / csv_name, std::ios::binary);
    if (!os) throw IoError("cannot open " + (out_dir / csv_name).string());
    stats::write_features_csv(os, features, labels);
    if (!os) throw IoError("failed while writing " + (out_dir / csv_name).string());
  }
  json run = run_stub("featurize", 0);
  run.erase("seed");
  run["dataset_dir"] = dataset_dir.string();
  run["dataset_id"] = manifest.dataset_id;
  run["split"] = split;
  run["count"] = patches.size();
  run["features"] = feature_config_to_json(cfg.features);
  run["outputs"] = json::array({csv_name});
  write_json_file(out_dir / "run.json", run);
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

namespace {

struct FeatureTable {
  std::vector<ml::Feat4> x;
  std::vector<int> y;
};

FeatureTable feature_table(std::span<const EnvelopePatch> patches,
                           const stats::FeatureConfig& fcfg,
                           const stats::FeatureNormalizer& norm) {
  FeatureTable t;
  t.x = train::normalized_features(patches, fcfg, norm);
  t.y = int_labels(patches);
  return t;
}

stats::FeatureNormalizer fit_train_normalizer(std::span<const EnvelopePatch> patches,
                                              const stats::FeatureConfig& fcfg) {
  std::vector<stats::FeatureVector> fv;
  fv.reserve(patches.size());
  for (const auto& p : patches) fv.push_back(stats::featurize(p, fcfg));
  return stats::fit_normalizer(fv);
}

}  // namespace

void cmd_train(const std::string& model_id, const fs::path& dataset_dir,
               const RunConfig& cfg, std::uint64_t seed, const fs::path& out_dir,
               const std::optional<fs::path>& cnn_branch,
               const std::optional<fs::path>& mlp_branch) {
  const ModelKind mk = model_kind(model_id);
  if ((cnn_branch || mlp_branch) && mk.family != ModelKind::Family::Fusion)
    throw InvalidArgument("branch checkpoints are only valid for fusion models");
  cfg.schedule.validate();
  cfg.augment.validate();
  ensure_dir(out_dir);

  const auto manifest = data::read_manifest(dataset_dir / "manifest.json");
  const auto train_set = data::load_split(dataset_dir, "train", manifest);
  const auto val_set = data::load_split(dataset_dir, "val", manifest);

  json run = run_stub("train", seed);
  run["model_id"] = model_id;
  run["dataset_dir"] = dataset_dir.string();
  run["dataset_id"] = manifest.dataset_id;
  run["config"] = config_to_json(cfg);

  const std::string ckpt_name = model_id + ".qusm";
  const fs::path ckpt_path = out_dir / ckpt_name;
  json header = base_header(mk, seed, manifest);

  switch (mk.family) {
    case ModelKind::Family::MLP: {
      const auto norm = fit_train_normalizer(train_set, cfg.features);
      nn::MLPModel<float> model(cfg.schedule.dropout, seed);
      const auto hist = train::fit_mlp(model, train_set, val_set, cfg.features, norm,
                                       cfg.schedule, cfg.augment, seed);
      header["dropout"] = cfg.schedule.dropout;
      header["feature_config"] = feature_config_to_json(cfg.features);
      header["normalizer"] = normalizer_to_json(norm);
      header["params"] = ckpt::param_manifest(model);
      ckpt::save_model_file(ckpt_path, header, ckpt::flatten(model));
      run["history"] = history_json(hist);
      break;
    }
    case ModelKind::Family::SVM: {
      const auto norm = fit_train_normalizer(train_set, cfg.features);
      const auto tr = feature_table(train_set, cfg.features, norm);
      const auto va = feature_table(val_set, cfg.features, norm);
      json log;
      const auto model =
          train::fit_svm_grid(tr.x, tr.y, va.x, va.y, cfg.svm_grid, seed, &log);
      json mj;
      ml::to_json(mj, model);
      header["feature_config"] = feature_config_to_json(cfg.features);
      header["normalizer"] = normalizer_to_json(norm);
      header["model"] = mj;
      ckpt::save_model_file(ckpt_path, header, {});
      run["grid_search"] = log;
      break;
    }
    case ModelKind::Family::RF: {
      const auto norm = fit_train_normalizer(train_set, cfg.features);
      const auto tr = feature_table(train_set, cfg.features, norm);
      const auto va = feature_table(val_set, cfg.features, norm);
      json log;
      const auto model =
          train::fit_rf_grid(tr.x, tr.y, va.x, va.y, cfg.rf_grid, seed, &log);
      json mj;
      ml::to_json(mj, model);
      header["feature_config"] = feature_config_to_json(cfg.features);
      header["normalizer"] = normalizer_to_json(norm);
      header["model"] = mj;
      ckpt::save_model_file(ckpt_path, header, {});
      run["grid_search"] = log;
      break;
    }
    case ModelKind::Family::CNN: {
      nn::CNNModel<float> model(mk.channels, cfg.schedule.dropout, seed);
      const auto hist =
          train::fit_cnn(model, train_set, val_set, cfg.schedule, cfg.augment, seed);
      header["dropout"] = cfg.schedule.dropout;
      header["params"] = ckpt::param_manifest(model);
      ckpt::save_model_file(ckpt_path, header, ckpt::flatten(model));
      run["history"] = history_json(hist);
      break;
    }
    case ModelKind::Family::Fusion: {
      nn::FusionModel<float> model(mk.channels, cfg.schedule.dropout, seed);
      stats::FeatureConfig fcfg = cfg.features;
      stats::FeatureNormalizer norm;
      json branches;
      if (cnn_branch) {
        LoadedNN b = load_nn_checkpoint(*cnn_branch);
        if (b.kind.family != ModelKind::Family::CNN)
          throw InvalidArgument("--branch-cnn must point to a cnn checkpoint");
        if (b.kind.channels != mk.channels)
          throw InvalidArgument("cnn branch channels do not match " + model_id);
        model.cnn = std::move(*b.cnn);
        branches["cnn"] = cnn_branch->string();
      } else {
        const auto hist = train::fit_cnn(model.cnn, train_set, val_set, cfg.schedule,
                                         cfg.augment, splitmix64(seed ^ 0x5));
        branches["cnn"] = "trained";
        run["cnn_history"] = history_json(hist);
      }
      if (mlp_branch) {
        LoadedNN b = load_nn_checkpoint(*mlp_branch);
        if (b.kind.family != ModelKind::Family::MLP)
          throw InvalidArgument("--branch-mlp must point to an mlp checkpoint");
        model.mlp = std::move(*b.mlp);
        fcfg = b.fcfg;
        norm = b.norm;
        branches["mlp"] = mlp_branch->string();
      } else {
        norm = fit_train_normalizer(train_set, fcfg);
        const auto hist = train::fit_mlp(model.mlp, train_set, val_set, fcfg, norm,
                                         cfg.schedule, cfg.augment, splitmix64(seed ^ 0x6));
        branches["mlp"] = "trained";
        run["mlp_history"] = history_json(hist);
      }
      const auto hist = train::fit_fusion_head(model, train_set, val_set, fcfg, norm,
                                               cfg.schedule, cfg.augment, seed);
      header["dropout"] = cfg.schedule.dropout;
      header["feature_config"] = feature_config_to_json(fcfg);
      header["normalizer"] = normalizer_to_json(norm);
      header["branches"] = branches;
      header["params"] = ckpt::param_manifest(model);
      ckpt::save_model_file(ckpt_path, header, ckpt::flatten(model));
      run["branches"] = branches;
      run["history"] = history_json(hist);
      break;
    }
  }

  run["outputs"] = json::array({ckpt_name});
  write_json_file(out_dir / "run.json", run);
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

void cmd_eval(const fs::path& checkpoint, const fs::path& dataset_dir,
              const std::string& split, const RunConfig& cfg, std::uint64_t seed,
              const fs::path& out_dir) {
  ensure_dir(out_dir);
  auto scorer = load_scoring_model(checkpoint);
  const auto manifest = data::read_manifest(dataset_dir / "manifest.json");
  const auto patches = data::load_split(dataset_dir, split, manifest);

  metrics::ScoredSet set;
  set.scores = scorer->score_batch(patches);
  set.labels = int_labels(patches);
  const auto rep = metrics::evaluate(set, cfg.bootstrap_resamples, cfg.ci_level, seed);

  json report;
  report["command"] = "eval";
  report["tool_version"] = kVersion;
  report["model_id"] = scorer->id();
  report["checkpoint"] = checkpoint.string();
  report["dataset_id"] = manifest.dataset_id;
  report["split"] = split;
  report["n"] = patches.size();
  report["n_fds"] = rep.n_pos;
  report["n_lds"] = rep.n_neg;
  report["auc"] = rep.auc;
  report["auc_ci"] = json::array({rep.ci_low, rep.ci_high});
  report["ci_level"] = cfg.ci_level;
  report["bootstrap_resamples"] = cfg.bootstrap_resamples;
  report["seed"] = seed;
  {
    json yj;
    yj["j"] = rep.youden.j;
    if (std::isfinite(rep.youden.threshold))
      yj["threshold"] = rep.youden.threshold;
    else
      yj["threshold"] = rep.youden.threshold > 0 ? "inf" : "-inf";
    yj["sensitivity"] = rep.youden.sensitivity;
    yj["specificity"] = rep.youden.specificity;
    report["youden"] = yj;
  }
  {
    const json& h = scorer->header();
    std::set<std::string> fit_ids;
    if (h.contains("train_dataset_id"))
      fit_ids.insert(h.at("train_dataset_id").get<std::string>());
    if (h.contains("finetune_dataset_id"))
      fit_ids.insert(h.at("finetune_dataset_id").get<std::string>());
    if (fit_ids.count(manifest.dataset_id) && split != "test")
      report["warning"] = "scores computed on data used to fit this model (dataset " +
                          manifest.dataset_id + ", split " + split + ")";
  }

  std::string roc_csv = "fpr,tpr\n";
  for (const auto& p : rep.roc) roc_csv += fmt(p.fpr) + "," + fmt(p.tpr) + "\n";
  write_text(out_dir / "roc.csv", roc_csv);
  write_json_file(out_dir / "report.json", report);

  json run = run_stub("eval", seed);
  run["checkpoint"] = checkpoint.string();
  run["dataset_dir"] = dataset_dir.string();
  run["split"] = split;
  run["outputs"] = json::array({"report.json", "roc.csv"});
  write_json_file(out_dir / "run.json", run);
}

// ---------------------------------------------------------------------------
// map
// ---------------------------------------------------------------------------

void cmd_map(const fs::path& checkpoint, const fs::path& frames_file,
             std::uint32_t frame_index, double overlap, const fs::path& out_dir) {
  if (!(overlap >= 0.0 && overlap < 1.0))
    throw InvalidArgument("overlap must lie in [0, 1)");
  ensure_dir(out_dir);
  auto scorer = load_scoring_model(checkpoint);
  const json& h = scorer->header();
  const int patch_rows = req(h, "patch_rows").get<int>();
  const int patch_cols = req(h, "patch_cols").get<int>();
  if (patch_rows < 2 || patch_cols < 2)
    throw IoError("checkpoint carries invalid patch dimensions");

  const auto fset = data::read_frames(frames_file);
  if (frame_index >= fset.frames.size())
    throw InvalidArgument("frame index " + std::to_string(frame_index) +
                          " out of range (file has " +
                          std::to_string(fset.frames.size()) + " frames)");
  const Grid2D<double>& frame = fset.frames[frame_index];
  if (frame.rows < patch_rows || frame.cols < patch_cols)
    throw InvalidArgument("frame is smaller than the model's patch size");

  const auto stride_r = std::max<std::int64_t>(
      1, std::llround(patch_rows * (1.0 - overlap)));
  const auto stride_c = std::max<std::int64_t>(
      1, std::llround(patch_cols * (1.0 - overlap)));
  const std::int64_t gh = (frame.rows - patch_rows) / stride_r + 1;
  const std::int64_t gw = (frame.cols - patch_cols) / stride_c + 1;

  // Patches are scored one at a time so the map values match single-patch
  // inference exactly.
  std::vector<double> probs(static_cast<std::size_t>(gh * gw));
  for (std::int64_t i = 0; i < gh; ++i) {
    for (std::int64_t j = 0; j < gw; ++j) {
      const auto r0 = static_cast<int>(i * stride_r);
      const auto c0 = static_cast<int>(j * stride_c);
      EnvelopePatch p;
      p.rows = patch_rows;
      p.cols = patch_cols;
      p.label = Label::Unknown;
      p.source_id = "frame-" + std::to_string(frame_index);
      p.values.resize(static_cast<std::size_t>(patch_rows) * patch_cols);
      for (int r = 0; r < patch_rows; ++r)
        for (int c = 0; c < patch_cols; ++c)
          p.values[static_cast<std::size_t>(r) * patch_cols + c] = frame(r0 + r, c0 + c);
      probs[static_cast<std::size_t>(i * gw + j)] = scorer->score(p);
    }
  }

  std::string csv;
  for (std::int64_t i = 0; i < gh; ++i) {
    for (std::int64_t j = 0; j < gw; ++j) {
      if (j) csv += ",";
      csv += fmt(probs[static_cast<std::size_t>(i * gw + j)]);
    }
    csv += "\n";
  }
  write_text(out_dir / "map.csv", csv);

  // PGM rendering: every frame pixel takes the probability of the patch whose
  // center is nearest.
  std::string pgm = "P5\n" + std::to_string(frame.cols) + " " +
                    std::to_string(frame.rows) + "\n255\n";
  pgm.reserve(pgm.size() + static_cast<std::size_t>(frame.rows) * frame.cols);
  for (int r = 0; r < frame.rows; ++r) {
    for (int c = 0; c < frame.cols; ++c) {
      const auto near = [](double pos, double half, std::int64_t stride,
                           std::int64_t n) {
        auto idx = std::llround((pos - half) / static_cast<double>(stride));
        return std::clamp<std::int64_t>(idx, 0, n - 1);
      };
      const std::int64_t i = near(r, patch_rows / 2.0, stride_r, gh);
      const std::int64_t j = near(c, patch_cols / 2.0, stride_c, gw);
      const double p = probs[static_cast<std::size_t>(i * gw + j)];
      pgm += static_cast<char>(
          static_cast<unsigned char>(std::llround(std::clamp(p, 0.0, 1.0) * 255.0)));
    }
  }
  write_text(out_dir / "map.pgm", pgm);

  json run = run_stub("map", 0);
  run.erase("seed");
  run["checkpoint"] = checkpoint.string();
  run["model_id"] = scorer->id();
  run["frames_file"] = frames_file.string();
  run["frame_index"] = frame_index;
  run["frame_label"] = fset.labels[frame_index] == Label::FDS ? "fds" : "lds";
  run["overlap"] = overlap;
  run["patch_rows"] = patch_rows;
  run["patch_cols"] = patch_cols;
  run["stride_rows"] = stride_r;
  run["stride_cols"] = stride_c;
  run["grid_rows"] = gh;
  run["grid_cols"] = gw;
  run["outputs"] = json::array({"map.csv", "map.pgm"});
  write_json_file(out_dir / "run.json", run);
}

// ---------------------------------------------------------------------------
// finetune
// ---------------------------------------------------------------------------

void cmd_finetune(const fs::path& checkpoint, const fs::path& dataset_dir,
                  const std::optional<fs::path>& eval_dataset_dir,
                  const RunConfig& cfg, std::uint64_t seed, const fs::path& out_dir) {
  cfg.schedule.validate();
  cfg.augment.validate();
  ensure_dir(out_dir);
  const auto lf = ckpt::load_model_file(checkpoint);
  const std::string family = req(lf.header, "family").get<std::string>();
  if (family == "svm" || family == "rf")
    throw InvalidArgument("fine-tuning requires a neural checkpoint (mlp/cnn/fusion)");
  const std::string model_id = req(lf.header, "model_id").get<std::string>();

  const auto manifest = data::read_manifest(dataset_dir / "manifest.json");

  if (eval_dataset_dir) {
    const auto eval_manifest =
        data::read_manifest(*eval_dataset_dir / "manifest.json");
    const auto it = eval_manifest.splits.find("test");
    if (it == eval_manifest.splits.end())
      throw InvalidArgument("held-out dataset has no test split");
    std::set<std::string> held_out(it->second.sources.begin(),
                                   it->second.sources.end());
    for (const char* split : {"train", "val"}) {
      const auto sit = manifest.splits.find(split);
      if (sit == manifest.splits.end()) continue;
      for (const auto& src : sit->second.sources) {
        if (held_out.count(src))
          throw LeakageError("adaptation split \"" + std::string(split) +
                             "\" shares phantom " + src +
                             " with the held-out test split");
      }
    }
  }

  json run = run_stub("finetune", seed);
  run["checkpoint"] = checkpoint.string();
  run["model_id"] = model_id;
  run["dataset_dir"] = dataset_dir.string();
  run["dataset_id"] = manifest.dataset_id;
  if (eval_dataset_dir) run["eval_dataset_dir"] = eval_dataset_dir->string();
  run["config"] = config_to_json(cfg);
  const std::string out_name = model_id + "-finetuned.qusm";

  if (cfg.schedule.max_epochs == 0) {
    // Zero-epoch fine-tuning leaves the checkpoint byte-identical.
    std::ifstream is(checkpoint, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    if (!is) throw IoError("cannot read checkpoint " + checkpoint.string());
    write_text(out_dir / out_name, ss.str());
    run["epochs_run"] = 0;
    run["outputs"] = json::array({out_name});
    write_json_file(out_dir / "run.json", run);
    return;
  }

  LoadedNN nn = load_nn_from(lf);
  const auto train_set = data::load_split(dataset_dir, "train", manifest);
  const auto val_set = data::load_split(dataset_dir, "val", manifest);
  const train::Schedule ft = cfg.schedule.finetune_variant();

  json header = lf.header;
  header["tool_version"] = kVersion;
  header["finetuned_from"] = checkpoint.filename().string();
  header["finetune_dataset_id"] = manifest.dataset_id;
  header["finetune_seed"] = seed;

  switch (nn.kind.family) {
    case ModelKind::Family::MLP: {
      const auto hist = train::fit_mlp(*nn.mlp, train_set, val_set, nn.fcfg, nn.norm,
                                       ft, cfg.augment, seed);
      ckpt::save_model_file(out_dir / out_name, header, ckpt::flatten(*nn.mlp));
      run["history"] = history_json(hist);
      break;
    }
    case ModelKind::Family::CNN: {
      const auto hist =
          train::fit_cnn(*nn.cnn, train_set, val_set, ft, cfg.augment, seed);
      ckpt::save_model_file(out_dir / out_name, header, ckpt::flatten(*nn.cnn));
      run["history"] = history_json(hist);
      break;
    }
    case ModelKind::Family::Fusion: {
      auto& fusion = *nn.fusion;
      const auto cnn_hist = train::fit_cnn(fusion.cnn, train_set, val_set, ft,
                                           cfg.augment, splitmix64(seed ^ 0x5));
      const auto mlp_hist = train::fit_mlp(fusion.mlp, train_set, val_set, nn.fcfg,
                                           nn.norm, ft, cfg.augment,
                                           splitmix64(seed ^ 0x6));
      const auto hist = train::fit_fusion_head(fusion, train_set, val_set, nn.fcfg,
                                               nn.norm, ft, cfg.augment, seed);
      ckpt::save_model_file(out_dir / out_name, header, ckpt::flatten(fusion));
      run["cnn_history"] = history_json(cnn_hist);
      run["mlp_history"] = history_json(mlp_hist);
      run["history"] = history_json(hist);
      break;
    }
    default:
      throw InvalidArgument("fine-tuning requires a neural checkpoint");
  }

  run["outputs"] = json::array({out_name});
  write_json_file(out_dir / "run.json", run);
}

}  // namespace qus::pipeline
