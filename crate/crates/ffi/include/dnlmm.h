#ifndef DNLMM_H
#define DNLMM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes shared by all entry points.
typedef enum DnlmmStatus {
  DNLMM_STATUS_OK = 0,
  DNLMM_STATUS_NULL_POINTER = 1,
  DNLMM_STATUS_INVALID_ARGUMENT = 2,
  DNLMM_STATUS_VALIDATION = 3,
  DNLMM_STATUS_CAPABILITY = 4,
  DNLMM_STATUS_INSTABILITY = 5,
  DNLMM_STATUS_IO = 6,
  DNLMM_STATUS_PARSE = 7,
  DNLMM_STATUS_PANIC = 8,
  DNLMM_STATUS_BUFFER_TOO_SMALL = 9,
} DnlmmStatus;

// Column-stochastic combination weights.
typedef struct DnlmmCombination DnlmmCombination;

// Experiment configuration.
typedef struct DnlmmExperiment DnlmmExperiment;

// Monte Carlo results of one experiment run.
typedef struct DnlmmResults DnlmmResults;

// Analytical curves, one entry per configured algorithm.
typedef struct DnlmmTheory DnlmmTheory;

// Network graph.
typedef struct DnlmmTopology DnlmmTopology;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, NUL-terminated. Returns
// the size needed including the terminator; copies only when it fits.
//
// # Safety
// `buf` must be null or point to `capacity` writable bytes.
size_t dnlmm_last_error_message(char *buf, size_t capacity);

// Random geometric graph on the unit square, retried until connected.
//
// # Safety
// `out` must be a valid pointer to a handle slot.
enum DnlmmStatus dnlmm_topology_random_geometric(size_t nodes,
                                                 uint64_t seed,
                                                 double radius,
                                                 struct DnlmmTopology **out);

// Ring in which every node links to its two neighbours.
//
// # Safety
// `out` must be a valid pointer to a handle slot.
enum DnlmmStatus dnlmm_topology_ring(size_t nodes, struct DnlmmTopology **out);

// # Safety
// `topology` must be a live handle; `nodes` must be writable.
enum DnlmmStatus dnlmm_topology_node_count(const struct DnlmmTopology *topology, size_t *nodes);

// Degree of node `k`, counting the node itself.
//
// # Safety
// `topology` must be a live handle; `degree` must be writable.
enum DnlmmStatus dnlmm_topology_degree(const struct DnlmmTopology *topology,
                                       size_t k,
                                       size_t *degree);

// # Safety
// `topology` must be null or a handle not yet freed.
void dnlmm_topology_free(struct DnlmmTopology *topology);

// Metropolis weights for `topology`.
//
// # Safety
// `topology` must be a live handle; `out` a valid handle slot.
enum DnlmmStatus dnlmm_combination_metropolis(const struct DnlmmTopology *topology,
                                              struct DnlmmCombination **out);

// Weight `c_{m,k}` that node `k` gives to node `m`.
//
// # Safety
// `combination` must be a live handle; `weight` must be writable.
enum DnlmmStatus dnlmm_combination_weight(const struct DnlmmCombination *combination,
                                          size_t m,
                                          size_t k,
                                          double *weight);

// # Safety
// `combination` must be null or a handle not yet freed.
void dnlmm_combination_free(struct DnlmmCombination *combination);

// Parse and validate a JSON experiment configuration.
//
// # Safety
// `json` must be a NUL-terminated string; `out` a valid handle slot.
enum DnlmmStatus dnlmm_experiment_from_json(const char *json, struct DnlmmExperiment **out);

// Built-in experiment by name.
//
// # Safety
// `name` must be a NUL-terminated string; `out` a valid handle slot.
enum DnlmmStatus dnlmm_experiment_preset(const char *name, struct DnlmmExperiment **out);

// Override the trial and iteration counts; zero leaves a value unchanged.
//
// # Safety
// `experiment` must be a live handle.
enum DnlmmStatus dnlmm_experiment_set_run_length(struct DnlmmExperiment *experiment,
                                                 size_t trials,
                                                 size_t iterations);

// Serialize the configuration as JSON into `buf`.
//
// # Safety
// `experiment` must be a live handle; `buf` null or `capacity` bytes;
// `needed` null or writable.
enum DnlmmStatus dnlmm_experiment_to_json(const struct DnlmmExperiment *experiment,
                                          char *buf,
                                          size_t capacity,
                                          size_t *needed);

// Run the Monte Carlo simulation.
//
// # Safety
// `experiment` must be a live handle; `out` a valid handle slot.
enum DnlmmStatus dnlmm_experiment_run(const struct DnlmmExperiment *experiment,
                                      struct DnlmmResults **out);

// Evaluate the analytical model for every algorithm.
//
// # Safety
// `experiment` must be a live handle; `out` a valid handle slot.
enum DnlmmStatus dnlmm_experiment_theory(const struct DnlmmExperiment *experiment,
                                         struct DnlmmTheory **out);

// # Safety
// `experiment` must be null or a handle not yet freed.
void dnlmm_experiment_free(struct DnlmmExperiment *experiment);

// # Safety
// `results` must be a live handle; `count` must be writable.
enum DnlmmStatus dnlmm_results_algorithm_count(const struct DnlmmResults *results, size_t *count);

// Label of algorithm `index` as a NUL-terminated string.
//
// # Safety
// `results` must be a live handle; `buf` null or `capacity` bytes;
// `needed` null or writable.
enum DnlmmStatus dnlmm_results_label(const struct DnlmmResults *results,
                                     size_t index,
                                     char *buf,
                                     size_t capacity,
                                     size_t *needed);

// Trial-averaged network MSD in dB, one value per iteration.
//
// # Safety
// `results` must be a live handle; `buf` null or `capacity` doubles;
// `written` null or writable.
enum DnlmmStatus dnlmm_results_msd_db(const struct DnlmmResults *results,
                                      size_t index,
                                      double *buf,
                                      size_t capacity,
                                      size_t *written);

// Steady-state network MSD in dB and the number of diverged trials.
//
// # Safety
// `results` must be a live handle; the outputs must be writable.
enum DnlmmStatus dnlmm_results_summary(const struct DnlmmResults *results,
                                       size_t index,
                                       double *steady_msd_db,
                                       size_t *diverged_trials);

// # Safety
// `results` must be null or a handle not yet freed.
void dnlmm_results_free(struct DnlmmResults *results);

// Model network MSD in dB, one value per iteration. Fails with
// `Capability` when the model does not cover algorithm `index`.
//
// # Safety
// `theory` must be a live handle; `buf` null or `capacity` doubles;
// `written` null or writable.
enum DnlmmStatus dnlmm_theory_msd_db(const struct DnlmmTheory *theory,
                                     size_t index,
                                     double *buf,
                                     size_t capacity,
                                     size_t *written);

// Closed-form steady-state network MSD in dB and the spectral radius of
// the mean-square transition operator.
//
// # Safety
// `theory` must be a live handle; the outputs must be writable.
enum DnlmmStatus dnlmm_theory_summary(const struct DnlmmTheory *theory,
                                      size_t index,
                                      double *steady_msd_db,
                                      double *spectral_radius);

// # Safety
// `theory` must be null or a handle not yet freed.
void dnlmm_theory_free(struct DnlmmTheory *theory);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DNLMM_H */
