#include "qus/qus.h"

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "qus/envstats.hpp"
#include "qus/pipeline.hpp"

struct qus_model {
  std::unique_ptr<qus::pipeline::ScoringModel> impl;
};

namespace {

thread_local std::string g_last_error;

int fail(int code, const std::string& msg) {
  g_last_error = msg;
  return code;
}

template <class F>
int guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return QUS_OK;
  } catch (const qus::InvalidArgument& e) {
    return fail(QUS_ERR_USAGE, e.what());
  } catch (const qus::InvalidState& e) {
    return fail(QUS_ERR_USAGE, e.what());
  } catch (const qus::IoError& e) {
    return fail(QUS_ERR_DATA, e.what());
  } catch (const qus::DegenerateStatistic& e) {
    return fail(QUS_ERR_DATA, e.what());
  } catch (const qus::LeakageError& e) {
    return fail(QUS_ERR_DATA, e.what());
  } catch (const qus::NumericFailure& e) {
    return fail(QUS_ERR_NUMERIC, e.what());
  } catch (const qus::TrainingFailure& e) {
    return fail(QUS_ERR_NUMERIC, e.what());
  } catch (const std::exception& e) {
    return fail(QUS_ERR_NUMERIC, e.what());
  } catch (...) {
    return fail(QUS_ERR_NUMERIC, "unknown error");
  }
}

const char* require(const char* s, const char* name) {
  if (s == nullptr || *s == '\0')
    throw qus::InvalidArgument(std::string(name) + " must be provided");
  return s;
}

qus::pipeline::RunConfig config_of(const char* config_json) {
  return qus::pipeline::parse_config(config_json ? std::string(config_json)
                                                 : std::string());
}

qus::EnvelopePatch patch_of(const double* values, uint32_t rows, uint32_t cols) {
  if (values == nullptr) throw qus::InvalidArgument("values must be provided");
  if (rows < 2 || cols < 2)
    throw qus::InvalidArgument("patch must be at least 2x2");
  qus::EnvelopePatch p;
  p.rows = static_cast<int>(rows);
  p.cols = static_cast<int>(cols);
  p.label = qus::Label::Unknown;
  p.values.assign(values, values + static_cast<std::size_t>(rows) * cols);
  return p;
}

}  // namespace

extern "C" {

const char* qus_last_error(void) { return g_last_error.c_str(); }

const char* qus_version(void) { return qus::kVersion; }

int qus_simulate(const char* config_json, uint64_t seed, const char* out_dir) {
  return guarded([&] {
    qus::pipeline::cmd_simulate(config_of(config_json), seed,
                                require(out_dir, "out_dir"));
  });
}

int qus_featurize(const char* dataset_dir, const char* split,
                  const char* config_json, const char* out_dir) {
  return guarded([&] {
    qus::pipeline::cmd_featurize(require(dataset_dir, "dataset_dir"),
                                 require(split, "split"), config_of(config_json),
                                 require(out_dir, "out_dir"));
  });
}

int qus_train(const char* model_id, const char* dataset_dir,
              const char* config_json, uint64_t seed, const char* out_dir,
              const char* cnn_branch, const char* mlp_branch) {
  return guarded([&] {
    std::optional<std::filesystem::path> cb, mb;
    if (cnn_branch && *cnn_branch) cb = cnn_branch;
    if (mlp_branch && *mlp_branch) mb = mlp_branch;
    qus::pipeline::cmd_train(require(model_id, "model_id"),
                             require(dataset_dir, "dataset_dir"),
                             config_of(config_json), seed,
                             require(out_dir, "out_dir"), cb, mb);
  });
}

int qus_eval(const char* checkpoint, const char* dataset_dir, const char* split,
             const char* config_json, uint64_t seed, const char* out_dir) {
  return guarded([&] {
    qus::pipeline::cmd_eval(require(checkpoint, "checkpoint"),
                            require(dataset_dir, "dataset_dir"),
                            require(split, "split"), config_of(config_json), seed,
                            require(out_dir, "out_dir"));
  });
}

int qus_map(const char* checkpoint, const char* frames_file, uint32_t frame_index,
            double overlap, const char* out_dir) {
  return guarded([&] {
    qus::pipeline::cmd_map(require(checkpoint, "checkpoint"),
                           require(frames_file, "frames_file"), frame_index,
                           overlap, require(out_dir, "out_dir"));
  });
}

int qus_finetune(const char* checkpoint, const char* dataset_dir,
                 const char* eval_dataset_dir, const char* config_json,
                 uint64_t seed, const char* out_dir) {
  return guarded([&] {
    std::optional<std::filesystem::path> ed;
    if (eval_dataset_dir && *eval_dataset_dir) ed = eval_dataset_dir;
    qus::pipeline::cmd_finetune(require(checkpoint, "checkpoint"),
                                require(dataset_dir, "dataset_dir"), ed,
                                config_of(config_json), seed,
                                require(out_dir, "out_dir"));
  });
}

int qus_patch_features(const double* values, uint32_t rows, uint32_t cols,
                       double v, int32_t entropy_bins, double out4[4]) {
  return guarded([&] {
    if (out4 == nullptr) throw qus::InvalidArgument("out4 must be provided");
    const qus::EnvelopePatch p = patch_of(values, rows, cols);
    qus::stats::FeatureConfig fcfg;
    if (v > 0) fcfg.v = v;
    if (entropy_bins > 0) fcfg.entropy_bins = entropy_bins;
    const auto f = qus::stats::featurize(p, fcfg);
    out4[0] = f.r;
    out4[1] = f.s;
    out4[2] = f.entropy;
    out4[3] = f.t;
  });
}

int qus_model_open(const char* checkpoint, qus_model** out_model) {
  return guarded([&] {
    if (out_model == nullptr)
      throw qus::InvalidArgument("out_model must be provided");
    *out_model = nullptr;
    auto impl = qus::pipeline::load_scoring_model(require(checkpoint, "checkpoint"));
    *out_model = new qus_model{std::move(impl)};
  });
}

const char* qus_model_id(const qus_model* model) {
  if (model == nullptr || !model->impl) return nullptr;
  return model->impl->id().c_str();
}

int qus_model_score(qus_model* model, const double* values, uint32_t rows,
                    uint32_t cols, double* out_prob) {
  return guarded([&] {
    if (model == nullptr || !model->impl)
      throw qus::InvalidArgument("model handle must be open");
    if (out_prob == nullptr)
      throw qus::InvalidArgument("out_prob must be provided");
    const qus::EnvelopePatch p = patch_of(values, rows, cols);
    *out_prob = model->impl->score(p);
  });
}

void qus_model_close(qus_model* model) { delete model; }

}  // extern "C"
