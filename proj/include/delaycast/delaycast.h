/* delaycast: delay-corrected epidemic surveillance engine.
 *
 * C ABI over the C++ core. All functions return dc_status (0 on success);
 * on failure dc_last_error() describes the problem for the calling thread.
 * Handles are opaque and freed with their dc_*_free function.
 */
#ifndef DELAYCAST_H
#define DELAYCAST_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define DC_API __declspec(dllexport)
#else
#define DC_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dc_status {
  DC_OK = 0,
  DC_ERR_DATA = 2,    /* bad or inconsistent input data */
  DC_ERR_NUMERIC = 3, /* estimation / numerical failure */
  DC_ERR_USAGE = 4    /* bad arguments or call sequence */
} dc_status;

typedef struct dc_frame dc_frame;
typedef struct dc_triangle dc_triangle;
typedef struct dc_model dc_model;
typedef struct dc_predictions dc_predictions;
typedef struct dc_report dc_report;

DC_API const char* dc_version(void);
/* Message for the last failing call on this thread; empty string if none. */
DC_API const char* dc_last_error(void);

/* ---- stratum frame ---- */
DC_API dc_status dc_frame_load(const char* csv_path, dc_frame** out);
DC_API void dc_frame_free(dc_frame* frame);
DC_API int dc_frame_district_count(const dc_frame* frame);
DC_API int dc_frame_group_count(const dc_frame* frame);

/* ---- reporting triangle ---- */
typedef struct dc_ingest_stats {
  int64_t batches;
  int64_t records;
  int64_t dropped_unknown_stratum;
  int64_t dropped_invalid_delay;
  int64_t negative_increments;
  int64_t folded_overflow;
  int64_t delay_histogram[32]; /* counts by delay 1..d_max */
  int32_t delay_histogram_len;
} dc_ingest_stats;

/* reject_negative != 0 turns decreasing cumulative counts into an error
 * instead of clamping the increment to zero. */
DC_API dc_status dc_triangle_ingest(const char* snapshot_dir, const dc_frame* frame, int d_max,
                                    int reject_negative, dc_triangle** out,
                                    dc_ingest_stats* stats_or_null);
DC_API dc_status dc_triangle_save(const dc_triangle* tri, const char* path);
DC_API dc_status dc_triangle_load(const char* path, const dc_frame* frame, dc_triangle** out);
DC_API void dc_triangle_free(dc_triangle* tri);
DC_API int dc_triangle_days(const dc_triangle* tri);
DC_API int dc_triangle_d_max(const dc_triangle* tri);
DC_API dc_status dc_triangle_anchor(const dc_triangle* tri, char* buf, size_t buf_len);

/* ---- model specification ---- */
typedef struct dc_spec {
  int32_t d_max;
  int32_t window_days;
  int32_t k_short;
  int32_t include_ar_time;
  int32_t include_ar_delay;
  int32_t include_re;
  int32_t include_re_short;
  int32_t time_basis_dim;
  int32_t spatial_basis_dim;
  int32_t penalty_order;
  int32_t bootstrap_n;
  double interval_level;
  double theta_fixed; /* <= 0: estimate */
} dc_spec;

DC_API void dc_spec_default(dc_spec* spec);
DC_API int dc_variant_count(void);
DC_API const char* dc_variant_name(int index);
DC_API const char* dc_default_variant(void);
DC_API dc_status dc_spec_variant(const char* name, dc_spec* spec);

/* ---- fitting ---- */
/* anchor_iso: analysis date (window end); NULL uses the triangle anchor. */
DC_API dc_status dc_fit(const dc_triangle* tri, const dc_frame* frame, const dc_spec* spec,
                        const char* anchor_iso, uint64_t seed, dc_model** out);
DC_API dc_status dc_model_save(const dc_model* model, const char* path);
DC_API dc_status dc_model_load(const char* path, dc_model** out);
DC_API void dc_model_free(dc_model* model);
DC_API double dc_model_theta(const dc_model* model);
DC_API int dc_model_converged(const dc_model* model);
DC_API dc_status dc_model_anchor(const dc_model* model, char* buf, size_t buf_len);
DC_API int dc_model_lambda_count(const dc_model* model);
DC_API dc_status dc_model_lambda(const dc_model* model, int index, char* name_buf,
                                 size_t name_buf_len, double* value);

/* ---- prediction ---- */
#define DC_KIND_NOWCAST 1u
#define DC_KIND_FORECAST 2u
#define DC_KIND_FORENOWCAST 4u
#define DC_KIND_INCIDENCE 8u

DC_API dc_status dc_predict(const dc_model* model, const dc_triangle* tri, const dc_frame* frame,
                            unsigned kinds_mask, int k, int bootstrap_n, double level,
                            uint64_t seed, int threads, dc_predictions** out);
DC_API int dc_predictions_count(const dc_predictions* pred);
DC_API dc_status dc_predictions_get(const dc_predictions* pred, int index, char* district_buf,
                                    size_t district_buf_len, char* kind_buf, size_t kind_buf_len,
                                    double* point, double* lower, double* upper);
DC_API dc_status dc_predictions_write_csv(const dc_predictions* pred, const char* path);
DC_API dc_status dc_predictions_write_geojson(const dc_predictions* pred, const dc_frame* frame,
                                              const char* path);
DC_API void dc_predictions_free(dc_predictions* pred);

/* ---- rolling evaluation ----
 * variants: comma-separated registry names, or "all" / "default".
 * anchors: comma-separated ISO dates; each must be a snapshot report date. */
DC_API dc_status dc_evaluate(const char* snapshot_dir, const dc_frame* frame,
                             const char* variants, const char* anchors, int k, int bootstrap_n,
                             double level, uint64_t seed, int threads, dc_report** out);
DC_API int dc_report_cell_count(const dc_report* report);
DC_API dc_status dc_report_cell(const dc_report* report, int index, char* anchor_buf,
                                size_t anchor_buf_len, char* variant_buf, size_t variant_buf_len,
                                char* kind_buf, size_t kind_buf_len, double* marpe, double* mrpe,
                                double* coverage, int* skipped);
DC_API dc_status dc_report_write_csv(const dc_report* report, const char* metrics_path,
                                     const char* rpe_path);
DC_API void dc_report_free(dc_report* report);

/* ---- synthetic scenarios ----
 * config_path: flat key=value file (NULL for defaults); overrides: same keys
 * as "key=value;key=value" applied on top. Writes frame.csv, truth.csv and
 * snapshots/<date>.csv under out_dir. */
DC_API dc_status dc_simulate(const char* config_path, const char* overrides, const char* out_dir,
                             uint64_t seed);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* DELAYCAST_H */
