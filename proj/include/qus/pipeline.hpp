#pragma once

#include <filesystem>
#include <memory>
#include <optional>

#include "qus/dataset.hpp"
#include "qus/metrics.hpp"
#include "qus/specklesim.hpp"
#include "qus/training.hpp"

namespace qus::pipeline {

using json = nlohmann::ordered_json;

/// Whole-run configuration; every section and key is optional in the JSON
/// form, unknown keys are rejected.
struct RunConfig {
  sim::SimConfig sim;
  sim::DatasetSpec dataset;
  stats::FeatureConfig features;
  train::Schedule schedule;
  train::AugmentConfig augment;
  train::SVMGrid svm_grid;
  train::RFGrid rf_grid;
  int bootstrap_resamples = 1000;
  double ci_level = 0.95;
};

RunConfig parse_config(const std::string& json_text);
json config_to_json(const RunConfig& cfg);

/// Supported model identifiers: mlp, svm, rf, cnn1..cnn6. Odd cnn ids are
/// plain CNNs, even ids add the statistics branch (fusion); channel inputs
/// are A (1/2), A*logA (3/4) and both (5/6).
struct ModelKind {
  std::string id;
  enum class Family { MLP, SVM, RF, CNN, Fusion } family;
  nn::Channels channels = nn::Channels::A;
};

ModelKind model_kind(const std::string& model_id);

/// Inference-only wrapper around any trained checkpoint: maps an envelope
/// patch to a probability of the FDS class.
class ScoringModel {
 public:
  virtual ~ScoringModel() = default;
  virtual const std::string& id() const = 0;
  virtual const json& header() const = 0;
  virtual double score(const EnvelopePatch& patch) = 0;
  virtual std::vector<double> score_batch(std::span<const EnvelopePatch> patches) = 0;
};

std::unique_ptr<ScoringModel> load_scoring_model(const std::filesystem::path& checkpoint);

// ---------------------------------------------------------------------------
// Commands. Each writes its outputs plus a run.json echo into out_dir.
// ---------------------------------------------------------------------------

void cmd_simulate(const RunConfig& cfg, std::uint64_t seed,
                  const std::filesystem::path& out_dir);

void cmd_featurize(const std::filesystem::path& dataset_dir, const std::string& split,
                   const RunConfig& cfg, const std::filesystem::path& out_dir);

void cmd_train(const std::string& model_id, const std::filesystem::path& dataset_dir,
               const RunConfig& cfg, std::uint64_t seed,
               const std::filesystem::path& out_dir,
               const std::optional<std::filesystem::path>& cnn_branch,
               const std::optional<std::filesystem::path>& mlp_branch);

void cmd_eval(const std::filesystem::path& checkpoint,
              const std::filesystem::path& dataset_dir, const std::string& split,
              const RunConfig& cfg, std::uint64_t seed,
              const std::filesystem::path& out_dir);

void cmd_map(const std::filesystem::path& checkpoint,
             const std::filesystem::path& frames_file, std::uint32_t frame_index,
             double overlap, const std::filesystem::path& out_dir);

void cmd_finetune(const std::filesystem::path& checkpoint,
                  const std::filesystem::path& dataset_dir,
                  const std::optional<std::filesystem::path>& eval_dataset_dir,
                  const RunConfig& cfg, std::uint64_t seed,
                  const std::filesystem::path& out_dir);

}  // namespace qus::pipeline
