#include "delaycast/delaycast.h"

#include <algorithm>
#include <cstring>
#include <exception>
#include <map>
#include <string>
#include <vector>

#include "core/error.hpp"
#include "core/estimate.hpp"
#include "core/evaluate.hpp"
#include "core/predict.hpp"
#include "core/stratum.hpp"
#include "core/synth.hpp"
#include "core/triangle.hpp"

namespace {

thread_local std::string g_last_error;

dc_status handle_exception() {
  try {
    throw;
  } catch (const delaycast::Error& e) {
    g_last_error = e.what();
    return static_cast<dc_status>(static_cast<int>(e.cls()));
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return DC_ERR_NUMERIC;
  } catch (...) {
    g_last_error = "unknown error";
    return DC_ERR_NUMERIC;
  }
}

dc_status copy_string(const std::string& s, char* buf, size_t buf_len) {
  if (!buf || buf_len == 0) {
    g_last_error = "output buffer is null/empty";
    return DC_ERR_USAGE;
  }
  std::size_t n = std::min(s.size(), buf_len - 1);
  std::memcpy(buf, s.data(), n);
  buf[n] = '\0';
  return DC_OK;
}

delaycast::ModelSpec to_core(const dc_spec& s) {
  delaycast::ModelSpec spec;
  spec.d_max = s.d_max;
  spec.window_days = s.window_days;
  spec.k_short = s.k_short;
  spec.include_ar_time = s.include_ar_time != 0;
  spec.include_ar_delay = s.include_ar_delay != 0;
  spec.include_re = s.include_re != 0;
  spec.include_re_short = s.include_re_short != 0;
  spec.time_basis_dim = s.time_basis_dim;
  spec.spatial_basis_dim = s.spatial_basis_dim;
  spec.penalty_order = s.penalty_order;
  spec.bootstrap_n = s.bootstrap_n;
  spec.interval_level = s.interval_level;
  spec.theta_fixed = s.theta_fixed;
  return spec;
}

void from_core(const delaycast::ModelSpec& spec, dc_spec* s) {
  s->d_max = spec.d_max;
  s->window_days = spec.window_days;
  s->k_short = spec.k_short;
  s->include_ar_time = spec.include_ar_time ? 1 : 0;
  s->include_ar_delay = spec.include_ar_delay ? 1 : 0;
  s->include_re = spec.include_re ? 1 : 0;
  s->include_re_short = spec.include_re_short ? 1 : 0;
  s->time_basis_dim = spec.time_basis_dim;
  s->spatial_basis_dim = spec.spatial_basis_dim;
  s->penalty_order = spec.penalty_order;
  s->bootstrap_n = spec.bootstrap_n;
  s->interval_level = spec.interval_level;
  s->theta_fixed = spec.theta_fixed;
}

std::vector<std::string> split_csv_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  for (char c : s) {
    if (c == ',') {
      if (!item.empty()) out.push_back(item);
      item.clear();
    } else if (c != ' ') {
      item += c;
    }
  }
  if (!item.empty()) out.push_back(item);
  return out;
}

}  // namespace

struct dc_frame {
  delaycast::StratumFrame frame;
};
struct dc_triangle {
  delaycast::CaseTriangle tri;
};
struct dc_model {
  delaycast::FittedModel model;
};
struct dc_predictions {
  delaycast::PredictionSet set;
};
struct dc_report {
  delaycast::EvaluationReport report;
};

extern "C" {

DC_API const char* dc_version(void) { return "1.0.0"; }

DC_API const char* dc_last_error(void) { return g_last_error.c_str(); }

DC_API dc_status dc_frame_load(const char* csv_path, dc_frame** out) {
  try {
    if (!csv_path || !out) throw delaycast::Error(delaycast::Errc::usage, "BadArgument", "null argument");
    *out = new dc_frame{delaycast::StratumFrame::load_csv(csv_path)};
    return DC_OK;
  } catch (...) {
    return handle_exception();
  }
}

DC_API void dc_frame_free(dc_frame* frame) { delete frame; }

DC_API int dc_frame_district_count(const dc_frame* frame) {
  return frame ? frame->frame.n_districts() : 0;
}

DC_API int dc_frame_group_count(const dc_frame* frame) {
  return frame ? frame->frame.n_groups() : 0;
}

DC_API dc_status dc_triangle_ingest(const char* snapshot_dir, const dc_frame* frame, int d_max,
                                    int reject_negative, dc_triangle** out,
                                    dc_ingest_stats* stats_or_null) {
  try {
    if (!snapshot_dir || !frame || !out) {
      throw delaycast::Error(delaycast::Errc::usage, "BadArgument", "null argument");
    }
    auto batches = delaycast::read_snapshot_dir(snapshot_dir);
    delaycast::IngestStats stats;
    auto policy = reject_negative ? delaycast::NegativePolicy::reject
                                  : delaycast::NegativePolicy::clamp;
    auto tri = delaycast::merge_snapshots(batches, frame->frame, d_max, policy, &stats);
    if (stats_or_null) {
      std::memset(stats_or_null, 0, sizeof(*stats_or_null));
      stats_or_null->batches = stats.batches;
      stats_or_null->records = stats.records;
      stats_or_null->dropped_unknown_stratum = stats.dropped_unknown_stratum;
      stats_or_null->dropped_invalid_delay = stats.dropped_invalid_delay;
      stats_or_null->negative_increments = stats.negative_increments;
      stats_or_null->folded_overflow = stats.folded_overflow;
      int n = static_cast<int>(std::min<std::size_t>(stats.delay_histogram.size(), 32));
      stats_or_null->delay_histogram_len = n;
      for (int i = 0; i < n; ++i) {
        stats_or_null->delay_histogram[i] = stats.delay_histogram[static_cast<std::size_t>(i)];
      }
    }
    *out = new dc_triangle{std::move(tri)};
    return DC_OK;
  } catch (...) {
    return handle_exception();
  }
}

DC_API dc_status dc_triangle_save(const dc_triangle* tri, const char* path) {
  try {
    if (!tri || !path) throw delaycast::Error(delaycast::Errc::usage, "BadArgument", "null argument");
    delaycast::save_triangle(tri->tri, path);
    return DC_OK;
  } catch (...) {
    return handle_exception();
  }
}

DC_API dc_status dc_triangle_load(const char* path, const dc_frame* frame, dc_triangle** out) {
  try {
    if (!path || !frame || !out) {
      throw delaycast::Error(delaycast::Errc::usage, "BadArgument", "null argument");
    }
    *out = new dc_triangle{delaycast::load_triangle(path, frame->frame)};
    return DC_OK;
  } catch (...) {
    return handle_exception();
  }
}

DC_API void dc_triangle_free(dc_triangle* tri) { delete tri; }

DC_API int dc_triangle_days(const dc_triangle* tri) { return tri ? tri->tri.n_rows() : 0; }

DC_API int dc_triangle_d_max(const dc_triangle* tri) { return tri ? tri->tri.d_max() : 0; }

DC_API dc_status dc_triangle_anchor(const dc_triangle* tri, char* buf, size_t buf_len) {
  if (!tri) {
    g_last_error = "null triangle";
    return DC_ERR_USAGE;
  }
  return copy_string(tri->tri.anchor_date().iso(), buf, buf_len);
}

DC_API void dc_spec_default(dc_spec* spec) {
  if (!spec) return;
  from_core(delaycast::ModelSpec{}, spec);
}

DC_API int dc_variant_count(void) {
  return static_cast<int>(delaycast::variant_registry().size());
}

DC_API const char* dc_variant_name(int index) {
  const auto& reg = delaycast::variant_registry();
  if (index < 0 || index >= static_cast<int>(reg.size())) return "";
  return reg[static_cast<std::size_t>(index)].name.c_str();
}

DC_API const char* dc_default_variant(void) { return delaycast::default_variant().name.c_str(); }

DC_API dc_status dc_spec_variant(const char* name, dc_spec* spec) {
  try {
    if (!name || !spec) throw delaycast::Error(delaycast::Errc::usage, "BadArgument", "null argument");
    from_core(delaycast::variant_by_name(name).spec, spec);
    return DC_OK;
  } catch (...) {
    return handle_exception();
  }
}

DC_API dc_status dc_fit(const dc_triangle* tri, const dc_frame* frame, const dc_spec* spec,
                        const char* anchor_iso, uint64_t seed, dc_model** out) {
  try {
    if (!tri || !frame || !spec || !out) {
      throw delaycast::Error(delaycast::Errc::usage, "BadArgument", "null argument");
    }
    delaycast::ModelSpec core_spec = to_core(*spec);
    const delaycast::CaseTriangle* fit_tri = &tri->tri;
    delaycast::CaseTriangle cut;
    if (anchor_iso && anchor_iso[0] != '\0') {
      cut = tri->tri.as_of(delaycast::Date::parse(anchor_iso));
      fit_tri = &cut;
    }
    *out = new dc_model{delaycast::fit_model(*fit_tri, frame->frame, core_spec, seed)};
    return DC_OK;
  } catch (...) {
    return handle_exception();
  }
}

DC_API dc_status dc_model_save(const dc_model* model, const char* path) {
  try {
    if (!model || !path) throw delaycast::Error(delaycast::Errc::usage, "BadArgument", "null argument");
    delaycast::save_model(model->model, path);
    return DC_OK;
  } catch (...) {
    return handle_exception();
  }
}

DC_API dc_status dc_model_load(const char* path, dc_model** out) {
  try {
    if (!path || !out) throw delaycast::Error(delaycast::Errc::usage, "BadArgument", "null argument");
    *out = new dc_model{delaycast::load_model(path)};
    return DC_OK;
  } catch (...) {
    return handle_exception();
  }
}

DC_API void dc_model_free(dc_model* model) { delete model; }

DC_API double dc_model_theta(const dc_model* model) { return model ? model->model.theta : 0.0; }

DC_API int dc_model_converged(const dc_model* model) {
  return model && model->model.diag.converged ? 1 : 0;
}

DC_API dc_status dc_model_anchor(const dc_model* model, char* buf, size_t buf_len) {
  if (!model) {
    g_last_error = "null model";
    return DC_ERR_USAGE;
  }
  return copy_string(model->model.anchor_date.iso(), buf, buf_len);
}

DC_API int dc_model_lambda_count(const dc_model* model) {
  return model ? static_cast<int>(model->model.lambda.size()) : 0;
}

DC_API dc_status dc_model_lambda(const dc_model* model, int index, char* name_buf,
                                 size_t name_buf_len, double* value) {
  try {
    if (!model || index < 0 || index >= static_cast<int>(model->model.lambda.size())) {
      throw delaycast::Error(delaycast::Errc::usage, "BadArgument", "lambda index out of range");
    }
    if (value) *value = model->model.lambda[static_cast<std::size_t>(index)];
    if (name_buf) {
      const auto& pens = model->model.assembler.layout.penalties;
      return copy_string(pens[static_cast<std::size_t>(index)].name, name_buf, name_buf_len);
    }
    return DC_OK;
  } catch (...) {
    return handle_exception();
  }
}

DC_API dc_status dc_predict(const dc_model* model, const dc_triangle* tri, const dc_frame* frame,
                            unsigned kinds_mask, int k, int bootstrap_n, double level,
                            uint64_t seed, int threads, dc_predictions** out) {
  try {
    if (!model || !tri || !frame || !out) {
      throw delaycast::Error(delaycast::Errc::usage, "BadArgument", "null argument");
    }
    *out = new dc_predictions{delaycast::predict_targets(
        model->model, tri->tri, frame->frame, kinds_mask, k, bootstrap_n, level, seed, threads)};
    return DC_OK;
  } catch (...) {
    return handle_exception();
  }
}

DC_API int dc_predictions_count(const dc_predictions* pred) {
  return pred ? static_cast<int>(pred->set.rows.size()) : 0;
}

DC_API dc_status dc_predictions_get(const dc_predictions* pred, int index, char* district_buf,
                                    size_t district_buf_len, char* kind_buf, size_t kind_buf_len,
                                    double* point, double* lower, double* upper) {
  try {
    if (!pred || index < 0 || index >= static_cast<int>(pred->set.rows.size())) {
      throw delaycast::Error(delaycast::Errc::usage, "BadArgument", "prediction index out of range");
    }
    const auto& row = pred->set.rows[static_cast<std::size_t>(index)];
    if (district_buf) {
      dc_status rc = copy_string(row.district_id, district_buf, district_buf_len);
      if (rc != DC_OK) return rc;
    }
    if (kind_buf) {
      dc_status rc = copy_string(row.kind, kind_buf, kind_buf_len);
      if (rc != DC_OK) return rc;
    }
    if (point) *point = row.point;
    if (lower) *lower = row.lower;
    if (upper) *upper = row.upper;
    return DC_OK;
  } catch (...) {
    return handle_exception();
  }
}

DC_API dc_status dc_predictions_write_csv(const dc_predictions* pred, const char* path) {
  try {
    if (!pred || !path) throw delaycast::Error(delaycast::Errc::usage, "BadArgument", "null argument");
    delaycast::write_predictions_csv(pred->set, path);
    return DC_OK;
  } catch (...) {
    return handle_exception();
  }
}

DC_API dc_status dc_predictions_write_geojson(const dc_predictions* pred, const dc_frame* frame,
                                              const char* path) {
  try {
    if (!pred || !frame || !path) {
      throw delaycast::Error(delaycast::Errc::usage, "BadArgument", "null argument");
    }
    delaycast::write_predictions_geojson(pred->set, frame->frame, path);
    return DC_OK;
  } catch (...) {
    return handle_exception();
  }
}

DC_API void dc_predictions_free(dc_predictions* pred) { delete pred; }

DC_API dc_status dc_evaluate(const char* snapshot_dir, const dc_frame* frame,
                             const char* variants, const char* anchors, int k, int bootstrap_n,
                             double level, uint64_t seed, int threads, dc_report** out) {
  try {
    if (!snapshot_dir || !frame || !variants || !anchors || !out) {
      throw delaycast::Error(delaycast::Errc::usage, "BadArgument", "null argument");
    }
    std::vector<delaycast::VariantDef> defs;
    std::string vlist = variants;
    if (vlist == "all") {
      defs = delaycast::variant_registry();
    } else if (vlist == "default" || vlist.empty()) {
      defs.push_back(delaycast::default_variant());
    } else {
      for (const auto& name : split_csv_list(vlist)) {
        defs.push_back(delaycast::variant_by_name(name));
      }
    }
    std::vector<delaycast::Date> anchor_dates;
    for (const auto& a : split_csv_list(anchors)) {
      anchor_dates.push_back(delaycast::Date::parse(a));
    }
    if (anchor_dates.empty()) {
      throw delaycast::Error(delaycast::Errc::usage, "BadArgument", "no anchors given");
    }
    auto batches = delaycast::read_snapshot_dir(snapshot_dir);
    delaycast::EvalOptions opts;
    opts.k = k;
    opts.n_boot = bootstrap_n;
    opts.level = level;
    opts.seed = seed;
    opts.threads = threads;
    *out = new dc_report{
        delaycast::rolling_evaluation(batches, frame->frame, defs, anchor_dates, opts)};
    return DC_OK;
  } catch (...) {
    return handle_exception();
  }
}

DC_API int dc_report_cell_count(const dc_report* report) {
  return report ? static_cast<int>(report->report.cells.size()) : 0;
}

DC_API dc_status dc_report_cell(const dc_report* report, int index, char* anchor_buf,
                                size_t anchor_buf_len, char* variant_buf, size_t variant_buf_len,
                                char* kind_buf, size_t kind_buf_len, double* marpe, double* mrpe,
                                double* coverage, int* skipped) {
  try {
    if (!report || index < 0 || index >= static_cast<int>(report->report.cells.size())) {
      throw delaycast::Error(delaycast::Errc::usage, "BadArgument", "report index out of range");
    }
    const auto& cell = report->report.cells[static_cast<std::size_t>(index)];
    if (anchor_buf) {
      dc_status rc = copy_string(cell.anchor.iso(), anchor_buf, anchor_buf_len);
      if (rc != DC_OK) return rc;
    }
    if (variant_buf) {
      dc_status rc = copy_string(cell.variant, variant_buf, variant_buf_len);
      if (rc != DC_OK) return rc;
    }
    if (kind_buf) {
      dc_status rc = copy_string(delaycast::target_kind_name(cell.kind), kind_buf, kind_buf_len);
      if (rc != DC_OK) return rc;
    }
    if (marpe) *marpe = cell.marpe;
    if (mrpe) *mrpe = cell.mrpe;
    if (coverage) *coverage = cell.coverage;
    if (skipped) *skipped = cell.skipped ? 1 : 0;
    return DC_OK;
  } catch (...) {
    return handle_exception();
  }
}

DC_API dc_status dc_report_write_csv(const dc_report* report, const char* metrics_path,
                                     const char* rpe_path) {
  try {
    if (!report) throw delaycast::Error(delaycast::Errc::usage, "BadArgument", "null report");
    if (metrics_path) delaycast::write_report_metrics_csv(report->report, metrics_path);
    if (rpe_path) delaycast::write_report_rpe_csv(report->report, rpe_path);
    return DC_OK;
  } catch (...) {
    return handle_exception();
  }
}

DC_API void dc_report_free(dc_report* report) { delete report; }

DC_API dc_status dc_simulate(const char* config_path, const char* overrides, const char* out_dir,
                             uint64_t seed) {
  try {
    if (!out_dir) throw delaycast::Error(delaycast::Errc::usage, "BadArgument", "null out_dir");
    std::map<std::string, std::string> kv;
    if (config_path && config_path[0] != '\0') kv = delaycast::read_config_file(config_path);
    if (overrides && overrides[0] != '\0') {
      std::string s = overrides;
      std::string item;
      auto flush = [&]() {
        auto eq = item.find('=');
        if (eq != std::string::npos) kv[item.substr(0, eq)] = item.substr(eq + 1);
        item.clear();
      };
      for (char c : s) {
        if (c == ';') flush();
        else item += c;
      }
      flush();
    }
    delaycast::ScenarioSpec spec = delaycast::scenario_from_config(kv);
    delaycast::SynthResult result = delaycast::generate(spec, seed);
    delaycast::write_scenario(result, out_dir);
    return DC_OK;
  } catch (...) {
    return handle_exception();
  }
}

}  // extern "C"
