#pragma once

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define DGM_API __declspec(dllexport)
#else
#define DGM_API __attribute__((visibility("default")))
#endif

typedef enum dgm_status {
  DGM_OK = 0,
  DGM_ERR_CONFIG = 1,       /* invalid config, unknown key, arch mismatch */
  DGM_ERR_IO = 2,           /* file could not be read or written, corrupt checkpoint */
  DGM_ERR_DIVERGED = 3,     /* training loss exceeded the divergence threshold */
  DGM_ERR_SHAPE = 4,        /* buffer sizes do not fit the model */
  DGM_ERR_NON_FINITE = 5,   /* NaN or infinity in an evaluation */
  DGM_ERR_ARGUMENT = 6,     /* null handle or pointer, bad policy spec */
  DGM_ERR_CHECK_FAILED = 7, /* at least one invariant of dgm_check failed */
  DGM_ERR_INTERNAL = 8
} dgm_status;

typedef struct dgm_experiment dgm_experiment;
typedef struct dgm_model dgm_model;

/* Message of the last failed call on this thread; "" when none. */
DGM_API const char* dgm_last_error(void);
/* Config line of the last DGM_ERR_CONFIG, 0 when unknown. */
DGM_API int dgm_last_error_line(void);
DGM_API const char* dgm_version(void);

/* ---- experiments ---- */

DGM_API dgm_status dgm_experiment_load(const char* config_path, dgm_experiment** out);
/* Parses config text; source_name is used in messages and as the experiment name. */
DGM_API dgm_status dgm_experiment_parse(const char* text, const char* source_name,
                                        dgm_experiment** out);
DGM_API void dgm_experiment_free(dgm_experiment* exp);

/* Replaces the experiment seed (training, scenarios and bound check). */
DGM_API dgm_status dgm_experiment_set_seed(dgm_experiment* exp, uint64_t seed);
DGM_API const char* dgm_experiment_name(const dgm_experiment* exp);
DGM_API const char* dgm_experiment_problem(const dgm_experiment* exp);
DGM_API int dgm_experiment_state_dim(const dgm_experiment* exp);

/* ---- training ---- */

typedef struct dgm_train_row {
  uint64_t iteration;
  double domain_loss;
  double terminal_loss;
  double total_loss;
  double on_policy_error; /* NaN when not monitored */
  double alpha;
  double lr;
  double wall_ms;
} dgm_train_row;

typedef void (*dgm_progress_fn)(const dgm_train_row* row, void* user);

/* Trains from scratch. When log_csv is not NULL the training log is written
 * there, also after divergence (rows up to the failing iteration). */
DGM_API dgm_status dgm_train(const dgm_experiment* exp, dgm_progress_fn progress, void* user,
                             const char* log_csv, dgm_model** out);

/* ---- models ---- */

/* Loads a checkpoint and checks it against the experiment's network and problem. */
DGM_API dgm_status dgm_model_load(const dgm_experiment* exp, const char* path, dgm_model** out);
DGM_API dgm_status dgm_model_save(const dgm_model* model, const char* path);
DGM_API void dgm_model_free(dgm_model* model);
DGM_API uint64_t dgm_model_iterations(const dgm_model* model);

/* J(t, x) for `rows` points; points is row-major rows x (1 + state_dim) with
 * time first, values has `rows` entries. */
DGM_API dgm_status dgm_model_value(const dgm_model* model, const double* points, size_t rows,
                                   double* values);
/* Feedback control of the network policy; controls is row-major rows x state_dim. */
DGM_API dgm_status dgm_model_control(const dgm_model* model, const double* points, size_t rows,
                                     double* controls);

/* ---- simulation and evaluation ---- */

/* Policy spec: "network" (needs model), "zero", "oracle" (LQR) or "alpha=<v>".
 * Writes one trajectory CSV per configured scenario into out_dir as
 * trajectory_<index>.csv and a summary costs.csv (scenario, seed, total_cost). */
DGM_API dgm_status dgm_simulate(const dgm_experiment* exp, const dgm_model* model,
                                const char* policy, const char* out_dir, size_t* written);

/* Writes comparison.csv and metrics.csv into out_dir, plus bound.csv for LQR
 * when a model is given. model may be NULL (baselines only). */
DGM_API dgm_status dgm_evaluate(const dgm_experiment* exp, const dgm_model* model,
                                const char* out_dir);

/* ---- invariant battery ---- */

typedef void (*dgm_check_fn)(const char* name, int passed, const char* detail, void* user);

/* Runs the fast invariant battery; config_path and checkpoint_path may be NULL.
 * Returns DGM_ERR_CHECK_FAILED when any check fails; failures counts them. */
DGM_API dgm_status dgm_check(const char* config_path, const char* checkpoint_path,
                             dgm_check_fn report, void* user, int* failures);

#ifdef __cplusplus
}
#endif
