#ifndef LBT_LBT_H
#define LBT_LBT_H

/*
 * C interface to the lbt library. Every object is an opaque handle created by
 * a *_load / *_open call and released by the matching *_destroy. Functions
 * return an lbt_status; on failure lbt_last_error_message() describes the
 * problem for the calling thread until its next failing call.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(LBT_BUILDING_LIBRARY)
#define LBT_API __attribute__((visibility("default")))
#else
#define LBT_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum lbt_status {
  LBT_OK = 0,
  LBT_ERR_SHAPE = 1,
  LBT_ERR_DOMAIN = 2,
  LBT_ERR_FORMAT = 3,
  LBT_ERR_TRAINING_DIVERGED = 4,
  LBT_ERR_OPERATOR_INAPPLICABLE = 5,
  LBT_ERR_POOL_EXHAUSTED = 6,
  LBT_ERR_CALIBRATION_FAILED = 7,
  LBT_ERR_TUNING = 8,
  LBT_ERR_CONFIG = 9,
  LBT_ERR_IO = 10,
  LBT_ERR_CONTRACT = 11,
  LBT_ERR_MISSING_ARTIFACT = 12,
  LBT_ERR_NULL_ARGUMENT = 100,
  LBT_ERR_INTERNAL = 101
} lbt_status;

LBT_API const char* lbt_version(void);
LBT_API const char* lbt_status_string(lbt_status status);
LBT_API const char* lbt_last_error_message(void);

/* Networks (weight JSON documents). */
typedef struct lbt_network lbt_network;

LBT_API lbt_status lbt_network_load(const char* path, lbt_network** out);
LBT_API lbt_status lbt_network_save(const lbt_network* net, const char* path);
LBT_API void lbt_network_destroy(lbt_network* net);
LBT_API lbt_status lbt_network_dims(const lbt_network* net, int* input_dim, int* num_classes);
/* xs is rows x input_dim row-major; probs receives rows x num_classes. */
LBT_API lbt_status lbt_network_forward(const lbt_network* net, const double* xs, size_t rows, double* probs);
LBT_API lbt_status lbt_network_predict(const lbt_network* net, const double* xs, size_t rows, int* labels);

/* Labeled datasets in IDX format. */
typedef struct lbt_dataset lbt_dataset;

LBT_API lbt_status lbt_dataset_load_idx(const char* images, const char* labels, lbt_dataset** out);
LBT_API void lbt_dataset_destroy(lbt_dataset* set);
LBT_API lbt_status lbt_dataset_shape(const lbt_dataset* set, size_t* rows, int* cols);
/* Borrowed views, valid until the dataset is destroyed. */
LBT_API lbt_status lbt_dataset_features(const lbt_dataset* set, const double** data);
LBT_API lbt_status lbt_dataset_labels(const lbt_dataset* set, const int** labels);

/* Scalar helpers. */
LBT_API lbt_status lbt_sprt_ratio(int n, int z, double zeta_h, double delta, double* ratio);
/* selected_is_fault: one flag per selected input. */
LBT_API lbt_status lbt_fdr(const int* selected_is_fault, size_t k, size_t total_faults, double* out);
/* is_fault: one flag per position of a permutation. */
LBT_API lbt_status lbt_apfd(const int* is_fault, size_t n, double* raw, double* normalized);

/* Experiments: a config file plus an output directory holding stage artifacts. */
typedef struct lbt_experiment lbt_experiment;

/* seed_override may be NULL to keep the config's seed. */
LBT_API lbt_status lbt_experiment_open(const char* config_path, const char* out_dir, const uint64_t* seed_override,
                                       lbt_experiment** out);
LBT_API void lbt_experiment_destroy(lbt_experiment* exp);
/* Stage names: train-mut, gen-adv, build-surrogate, calibrate, prioritize,
 * evaluate, retrain, report. method may be NULL or empty for all methods. */
LBT_API lbt_status lbt_experiment_run_stage(lbt_experiment* exp, const char* stage, const char* method);
LBT_API lbt_status lbt_experiment_run_all(lbt_experiment* exp);
/* Text produced by the last run call; valid until the next call on exp. */
LBT_API const char* lbt_experiment_last_output(const lbt_experiment* exp);

#ifdef __cplusplus
}
#endif

#endif
