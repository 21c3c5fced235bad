#ifndef RS_SELFCAL_H
#define RS_SELFCAL_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Number of unknowns of the self-calibration system.
 */
#define RSC_NUM_UNKNOWNS 8

typedef enum RscStatus {
  RSC_STATUS_OK = 0,
  RSC_STATUS_NULL_POINTER = 1,
  RSC_STATUS_INVALID_INPUT = 2,
  RSC_STATUS_INFEASIBLE = 3,
  RSC_STATUS_NUMERICAL_FAILURE = 4,
  RSC_STATUS_DEGENERATE = 5,
  RSC_STATUS_CHEIRALITY = 6,
  RSC_STATUS_NO_REAL_ROOT = 7,
  RSC_STATUS_IO = 8,
  RSC_STATUS_PANIC = 9,
  RSC_STATUS_OTHER = 99,
} RscStatus;

typedef enum RscVariant {
  RSC_VARIANT_NO_RS = 0,
  RSC_VARIANT_TWO_STEP = 1,
  RSC_VARIANT_TWO_STEP_ANCHORED = 2,
  RSC_VARIANT_LINEARIZED_EXACT = 3,
} RscVariant;

/**
 * Opaque solve-report handle.
 */
typedef struct RscReport RscReport;

/**
 * Opaque scene handle.
 */
typedef struct RscScene RscScene;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *rsc_version(void);

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next library call on the same thread.
 */
const char *rsc_last_error(void);

/**
 * Parses a scene JSON document.
 *
 * # Safety
 * `json` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum RscStatus rsc_scene_from_json(const char *json, struct RscScene **out);

/**
 * Releases a scene. Null is ignored.
 *
 * # Safety
 * `scene` must come from [`rsc_scene_from_json`] and not be used afterwards.
 */
void rsc_scene_free(struct RscScene *scene);

/**
 * Number of cameras in the scene, 0 for null.
 *
 * # Safety
 * `scene` must be null or a live handle.
 */
size_t rsc_scene_num_cameras(const struct RscScene *scene);

/**
 * Number of points in the scene, 0 for null.
 *
 * # Safety
 * `scene` must be null or a live handle.
 */
size_t rsc_scene_num_points(const struct RscScene *scene);

/**
 * Critical-motion test on the scene's trajectory. `singular_values` may be
 * null; otherwise it must hold [`RSC_NUM_UNKNOWNS`] doubles.
 *
 * # Safety
 * Pointers must be valid for writes; `scene` must be a live handle.
 */
enum RscStatus rsc_cms_check(const struct RscScene *scene,
                             double threshold,
                             size_t *nullity,
                             bool *is_cms,
                             double *singular_values);

/**
 * Bundle adjustment of a scene with observations. RS parameters start at
 * zero. `anchor_param` is 1 or 2 and only matters for the anchored variant.
 *
 * # Safety
 * `scene` must be a live handle and `out` a valid pointer.
 */
enum RscStatus rsc_solve(const struct RscScene *scene,
                         enum RscVariant variant,
                         size_t anchor_cam,
                         uint32_t anchor_param,
                         size_t max_iters,
                         struct RscReport **out);

/**
 * # Safety
 * `report` must be null or a live handle.
 */
double rsc_report_final_cost(const struct RscReport *report);

/**
 * # Safety
 * `report` must be null or a live handle.
 */
double rsc_report_initial_cost(const struct RscReport *report);

/**
 * # Safety
 * `report` must be null or a live handle.
 */
size_t rsc_report_iterations(const struct RscReport *report);

/**
 * # Safety
 * `report` must be null or a live handle.
 */
bool rsc_report_converged(const struct RscReport *report);

/**
 * Full report as JSON; release with [`rsc_string_free`]. Null on failure.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
char *rsc_report_to_json(const struct RscReport *report);

/**
 * # Safety
 * `report` must come from [`rsc_solve`] and not be used afterwards.
 */
void rsc_report_free(struct RscReport *report);

/**
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void rsc_string_free(char *s);

/**
 * Two-step RS projection of one world point to pixels.
 * `rotation` is 9 doubles row-major, `position`, `rs` and `point` 3 each,
 * `uv` receives 2.
 *
 * # Safety
 * All pointers must be valid for the stated lengths.
 */
enum RscStatus rsc_project_two_step(const double *rotation,
                                    const double *position,
                                    const double *rs,
                                    double f,
                                    double u0,
                                    double v0,
                                    const double *point,
                                    double *uv);

/**
 * Whether `m` views with `n_k` known and `n_f` fixed intrinsics give at
 * least as many equations as unknowns.
 */
bool rsc_feasibility_count(size_t m, size_t n_k, size_t n_f);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RS_SELFCAL_H */
