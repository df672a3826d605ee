/* C interface to the collider-aware prognosis pipeline. All state lives
 * behind the opaque experiment handle; every call returns a status code and
 * the last error message is retrievable per thread via cn_last_error(). */

#ifndef CAUSALNET_H
#define CAUSALNET_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cn_status {
  CN_OK = 0,
  CN_ERR_CONFIG = 2,  /* invalid configuration or parameters */
  CN_ERR_RUNTIME = 3, /* runtime / training / I-O failure */
  CN_ERR_CHECK = 4    /* a verification check failed */
} cn_status;

typedef struct cn_experiment cn_experiment;

/* Default configuration as a JSON document (static storage). */
const char* cn_default_config(void);

/* Message for the most recent failure on this thread. */
const char* cn_last_error(void);

/* Parse and validate a JSON config; NULL config_json means defaults. */
cn_status cn_experiment_create(const char* config_json, cn_experiment** out);
void cn_experiment_destroy(cn_experiment* exp);

/* The experiment's canonical config JSON (owned by the handle). */
const char* cn_experiment_config(cn_experiment* exp);

/* Write train/validation cohort CSVs plus a JSON manifest under out_dir. */
cn_status cn_simulate(cn_experiment* exp, const char* out_dir);

/* Render both image pools; raw float32 payload + JSON sidecar per pool,
 * plus a PGM preview of the first image. */
cn_status cn_build_pool(cn_experiment* exp, const char* out_dir);

/* Train one network ("causal" or "biased"); writes model_<mode>.ckpt and
 * training_log.csv under out_dir. */
cn_status cn_train(cn_experiment* exp, const char* mode, const char* out_dir);

/* Noise-calibration run (same trunk, targets x and z); returns the two
 * validation MSEs. */
cn_status cn_calibrate(cn_experiment* exp, const char* out_dir, double* mse_x,
                       double* mse_z);

/* Evaluate previously trained checkpoints: baselines + both network rows,
 * results.csv + manifest.json under out_dir. */
cn_status cn_evaluate(cn_experiment* exp, const char* causal_ckpt,
                      const char* biased_ckpt, const char* out_dir);

/* Full pipeline for k seed replicates (optionally jobs-way parallel);
 * per-replicate reports under out_dir/rep_<i>/ plus aggregate results.csv. */
cn_status cn_reproduce(cn_experiment* exp, int replicates, int jobs,
                       const char* out_dir);

/* Finite-difference verification of every differentiable op and the full
 * dual-task loss, in double precision. Writes a human-readable report into
 * report_buf (if non-NULL) and the worst relative error into max_rel_err. */
cn_status cn_gradcheck(char* report_buf, size_t buf_len, double* max_rel_err);

#ifdef __cplusplus
}
#endif

#endif /* CAUSALNET_H */
