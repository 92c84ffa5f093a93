/* C API for the speckle-statistics classification toolkit.
 *
 * Every entry point returns a qus_status code; on failure, qus_last_error()
 * describes the problem. Paths are UTF-8. The library is not thread-safe
 * across calls that share a qus_model handle; everything else is
 * thread-compatible (the error message is thread-local).
 */
#ifndef QUS_QUS_H
#define QUS_QUS_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes returned by every entry point (also the CLI exit codes). */
typedef enum qus_status {
  QUS_OK = 0,
  QUS_ERR_USAGE = 1,  /* invalid arguments or call sequence */
  QUS_ERR_DATA = 2,   /* missing/corrupt/degenerate data, leakage guard */
  QUS_ERR_NUMERIC = 3 /* numeric or training failure */
} qus_status;

/* Message describing the most recent failure on the calling thread. */
const char* qus_last_error(void);

const char* qus_version(void);

/* Simulates phantoms and writes a dataset directory (manifest.json,
 * train/val/test.qusp, frames.qusf). config_json may be NULL or empty for
 * defaults. */
int qus_simulate(const char* config_json, uint64_t seed, const char* out_dir);

/* Writes the four per-patch statistics of one split as features_<split>.csv. */
int qus_featurize(const char* dataset_dir, const char* split,
                  const char* config_json, const char* out_dir);

/* Trains a model (mlp, svm, rf, cnn1..cnn6) on a dataset directory and writes
 * <model_id>.qusm plus run.json. cnn_branch/mlp_branch are optional
 * checkpoint paths reused as frozen fusion branches (NULL to train fresh);
 * they are only accepted for fusion ids (cnn2/cnn4/cnn6). */
int qus_train(const char* model_id, const char* dataset_dir,
              const char* config_json, uint64_t seed, const char* out_dir,
              const char* cnn_branch, const char* mlp_branch);

/* Scores one split with a trained checkpoint and writes report.json (AUC,
 * bootstrap CI, Youden J / threshold / sensitivity / specificity) and
 * roc.csv. The seed drives the bootstrap resampling. */
int qus_eval(const char* checkpoint, const char* dataset_dir, const char* split,
             const char* config_json, uint64_t seed, const char* out_dir);

/* Slides the model over one stored frame with the given fractional overlap
 * and writes map.csv (grid of probabilities) and map.pgm (rendered frame). */
int qus_map(const char* checkpoint, const char* frames_file, uint32_t frame_index,
            double overlap, const char* out_dir);

/* Continues training a neural checkpoint on an adaptation dataset at scaled
 * learning rates and writes <model_id>-finetuned.qusm. eval_dataset_dir may
 * be NULL; when given, adaptation data sharing phantoms with that dataset's
 * test split is rejected. */
int qus_finetune(const char* checkpoint, const char* dataset_dir,
                 const char* eval_dataset_dir, const char* config_json,
                 uint64_t seed, const char* out_dir);

/* The four summary statistics (r, s, entropy, t) of a rows x cols envelope
 * patch given in row-major order. v <= 0 and entropy_bins <= 0 select the
 * defaults (0.5 and 100). */
int qus_patch_features(const double* values, uint32_t rows, uint32_t cols,
                       double v, int32_t entropy_bins, double out4[4]);

/* Opaque handle over a trained checkpoint, for patch scoring. */
typedef struct qus_model qus_model;

int qus_model_open(const char* checkpoint, qus_model** out_model);

/* Model id ("mlp", "cnn5", ...) of an open handle; NULL for NULL input. */
const char* qus_model_id(const qus_model* model);

/* Probability of the fully-developed-speckle class for one envelope patch. */
int qus_model_score(qus_model* model, const double* values, uint32_t rows,
                    uint32_t cols, double* out_prob);

void qus_model_close(qus_model* model);

#ifdef __cplusplus
}
#endif

#endif /* QUS_QUS_H */
