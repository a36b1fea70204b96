// Command-line surface over the delaycast C API: ingest, fit, predict,
// evaluate, simulate. Exit codes: 0 ok, 2 data error, 3 numerical failure,
// 4 usage error.
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "delaycast/delaycast.h"

namespace {

int fail(dc_status rc) {
  std::fprintf(stderr, "error: %s\n", dc_last_error());
  return static_cast<int>(rc);
}

unsigned parse_kinds(const std::string& kinds) {
  unsigned mask = 0;
  std::string item;
  auto flush = [&]() {
    if (item == "n" || item == "nowcast") mask |= DC_KIND_NOWCAST;
    else if (item == "f" || item == "forecast") mask |= DC_KIND_FORECAST;
    else if (item == "fn" || item == "forenowcast") mask |= DC_KIND_FORENOWCAST;
    else if (item == "incidence" || item == "inc") mask |= DC_KIND_INCIDENCE;
    else if (!item.empty()) throw CLI::ValidationError("--kinds", "unknown kind '" + item + "'");
    item.clear();
  };
  for (char c : kinds) {
    if (c == ',') flush();
    else item += c;
  }
  flush();
  return mask;
}

struct SpecFlags {
  std::string variant = "default";
  int d_max = -1, window_days = -1, k_short = -1, time_dim = -1, space_dim = -1;
  double theta_fixed = -1.0;
  bool no_ar_time = false, no_ar_delay = false, no_re = false, no_re_short = false;

  void add_options(CLI::App* cmd) {
    cmd->add_option("--variant", variant,
                    "model variant from the registry (see --list-variants), or 'default'");
    cmd->add_option("--d-max", d_max, "maximum reporting delay in days");
    cmd->add_option("--window-days", window_days, "fitting window length");
    cmd->add_option("--k-short", k_short, "short-term random-intercept span");
    cmd->add_option("--time-dim", time_dim, "time spline basis dimension");
    cmd->add_option("--space-dim", space_dim, "spatial spline basis dimension per axis");
    cmd->add_option("--theta-fixed", theta_fixed, "pin overdispersion theta (<=0 estimates it)");
    cmd->add_flag("--no-ar-time", no_ar_time, "drop the time-related AR term");
    cmd->add_flag("--no-ar-delay", no_ar_delay, "drop the delay-related AR term");
    cmd->add_flag("--no-re", no_re, "drop the district random intercepts");
    cmd->add_flag("--no-re-short", no_re_short, "drop the short-term random intercept");
  }

  dc_status resolve(dc_spec* spec) const {
    dc_status rc;
    if (variant == "default") rc = dc_spec_variant(dc_default_variant(), spec);
    else rc = dc_spec_variant(variant.c_str(), spec);
    if (rc != DC_OK) return rc;
    if (d_max > 0) spec->d_max = d_max;
    if (window_days > 0) spec->window_days = window_days;
    if (k_short > 0) spec->k_short = k_short;
    if (time_dim > 0) spec->time_basis_dim = time_dim;
    if (space_dim > 0) spec->spatial_basis_dim = space_dim;
    if (theta_fixed > 0) spec->theta_fixed = theta_fixed;
    if (no_ar_time) spec->include_ar_time = 0;
    if (no_ar_delay) spec->include_ar_delay = 0;
    if (no_re) {
      spec->include_re = 0;
      spec->include_re_short = 0;
    }
    if (no_re_short) spec->include_re_short = 0;
    return DC_OK;
  }
};

struct FrameGuard {
  dc_frame* ptr = nullptr;
  ~FrameGuard() { dc_frame_free(ptr); }
};
struct TriangleGuard {
  dc_triangle* ptr = nullptr;
  ~TriangleGuard() { dc_triangle_free(ptr); }
};
struct ModelGuard {
  dc_model* ptr = nullptr;
  ~ModelGuard() { dc_model_free(ptr); }
};
struct PredictionsGuard {
  dc_predictions* ptr = nullptr;
  ~PredictionsGuard() { dc_predictions_free(ptr); }
};
struct ReportGuard {
  dc_report* ptr = nullptr;
  ~ReportGuard() { dc_report_free(ptr); }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"delaycast: delay-corrected nowcasts, forecasts and forenowcasts for "
               "registered case counts"};
  app.require_subcommand(1);
  app.set_config("--config", "", "flat key=value config file; flags override it");

  bool list_variants = false;
  app.add_flag("--list-variants", list_variants, "print the model variant registry and exit");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "merge daily snapshots into a triangle cache");
  std::string in_snapshots, in_frame, in_out;
  int in_dmax = 7;
  bool in_reject = false;
  ingest->add_option("--snapshots", in_snapshots, "directory of daily snapshot CSVs")->required();
  ingest->add_option("--frame", in_frame, "stratum frame CSV")->required();
  ingest->add_option("--out", in_out, "triangle cache output path")->required();
  ingest->add_option("--d-max", in_dmax, "maximum reporting delay in days");
  ingest->add_flag("--reject-negative", in_reject,
                   "treat decreasing cumulative counts as an error instead of clamping");

  // fit
  auto* fit = app.add_subcommand("fit", "fit the surveillance model on a triangle window");
  std::string ft_triangle, ft_frame, ft_out, ft_anchor;
  std::uint64_t ft_seed = 1;
  SpecFlags ft_spec;
  fit->add_option("--triangle", ft_triangle, "triangle cache path")->required();
  fit->add_option("--frame", ft_frame, "stratum frame CSV")->required();
  fit->add_option("--out", ft_out, "model JSON output path")->required();
  fit->add_option("--anchor", ft_anchor, "analysis date (default: triangle anchor)");
  fit->add_option("--seed", ft_seed, "random seed");
  ft_spec.add_options(fit);

  // predict
  auto* predict = app.add_subcommand("predict", "nowcast/forecast/forenowcast with intervals");
  std::string pr_model, pr_triangle, pr_frame, pr_out, pr_geojson;
  std::string pr_kinds = "nowcast,forecast,forenowcast,incidence";
  int pr_k = 7, pr_n = 1000, pr_threads = 1;
  double pr_level = 0.90;
  std::uint64_t pr_seed = 1;
  predict->add_option("--model", pr_model, "fitted model JSON")->required();
  predict->add_option("--triangle", pr_triangle, "triangle cache path")->required();
  predict->add_option("--frame", pr_frame, "stratum frame CSV")->required();
  predict->add_option("--out", pr_out, "predictions CSV output path")->required();
  predict->add_option("--kinds", pr_kinds, "comma list of n,f,fn,incidence");
  predict->add_option("--k", pr_k, "aggregation / horizon length in days");
  predict->add_option("--n", pr_n, "bootstrap replicates");
  predict->add_option("--level", pr_level, "prediction interval level");
  predict->add_option("--seed", pr_seed, "random seed");
  predict->add_option("--threads", pr_threads, "bootstrap worker threads");
  predict->add_option("--geojson", pr_geojson, "optional GeoJSON output path");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "rolling retrospective evaluation");
  std::string ev_snapshots, ev_frame, ev_outdir, ev_variants = "all", ev_anchors;
  int ev_k = 7, ev_n = 200, ev_threads = 1;
  double ev_level = 0.90;
  std::uint64_t ev_seed = 1;
  evaluate->add_option("--snapshots", ev_snapshots, "directory of daily snapshot CSVs")->required();
  evaluate->add_option("--frame", ev_frame, "stratum frame CSV")->required();
  evaluate->add_option("--anchors", ev_anchors, "comma list of analysis dates")->required();
  evaluate->add_option("--variants", ev_variants, "comma list of variants, or 'all'/'default'");
  evaluate->add_option("--k", ev_k, "aggregation / horizon length in days");
  evaluate->add_option("--n", ev_n, "bootstrap replicates per fit");
  evaluate->add_option("--level", ev_level, "prediction interval level");
  evaluate->add_option("--seed", ev_seed, "random seed");
  evaluate->add_option("--threads", ev_threads, "bootstrap worker threads");
  evaluate->add_option("--out-dir", ev_outdir, "output directory for report CSVs")->required();

  // simulate
  auto* simulate = app.add_subcommand("simulate", "generate a synthetic snapshot archive");
  std::string sm_outdir, sm_scenario, sm_set;
  std::uint64_t sm_seed = 1;
  simulate->add_option("--out-dir", sm_outdir, "output directory")->required();
  simulate->add_option("--scenario", sm_scenario, "scenario config file (key=value lines)");
  simulate->add_option("--set", sm_set, "inline overrides, e.g. 'districts=20;days=120'");
  simulate->add_option("--seed", sm_seed, "random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 4;
  }

  if (list_variants) {
    for (int i = 0; i < dc_variant_count(); ++i) {
      std::printf("%s%s\n", dc_variant_name(i),
                  std::string(dc_variant_name(i)) == dc_default_variant() ? " (default)" : "");
    }
    return 0;
  }

  if (ingest->parsed()) {
    FrameGuard frame;
    dc_status rc = dc_frame_load(in_frame.c_str(), &frame.ptr);
    if (rc != DC_OK) return fail(rc);
    TriangleGuard tri;
    dc_ingest_stats stats;
    rc = dc_triangle_ingest(in_snapshots.c_str(), frame.ptr, in_dmax, in_reject ? 1 : 0, &tri.ptr,
                            &stats);
    if (rc != DC_OK) return fail(rc);
    rc = dc_triangle_save(tri.ptr, in_out.c_str());
    if (rc != DC_OK) return fail(rc);
    char anchor[16];
    dc_triangle_anchor(tri.ptr, anchor, sizeof(anchor));
    std::printf("anchor %s, %d registration days, d_max %d\n", anchor,
                dc_triangle_days(tri.ptr), dc_triangle_d_max(tri.ptr));
    std::printf("batches %lld, records %lld\n", static_cast<long long>(stats.batches),
                static_cast<long long>(stats.records));
    std::printf("dropped: unknown stratum %lld, invalid delay %lld; negative increments %lld; "
                "folded beyond d_max %lld\n",
                static_cast<long long>(stats.dropped_unknown_stratum),
                static_cast<long long>(stats.dropped_invalid_delay),
                static_cast<long long>(stats.negative_increments),
                static_cast<long long>(stats.folded_overflow));
    long long total = 0;
    for (int i = 0; i < stats.delay_histogram_len; ++i) total += stats.delay_histogram[i];
    std::printf("delay distribution:");
    for (int i = 0; i < stats.delay_histogram_len; ++i) {
      double share = total > 0 ? 100.0 * static_cast<double>(stats.delay_histogram[i]) /
                                     static_cast<double>(total)
                               : 0.0;
      std::printf(" d%d=%lld(%.1f%%)", i + 1, static_cast<long long>(stats.delay_histogram[i]),
                  share);
    }
    std::printf("\nwrote %s\n", in_out.c_str());
    return 0;
  }

  if (fit->parsed()) {
    FrameGuard frame;
    dc_status rc = dc_frame_load(ft_frame.c_str(), &frame.ptr);
    if (rc != DC_OK) return fail(rc);
    TriangleGuard tri;
    rc = dc_triangle_load(ft_triangle.c_str(), frame.ptr, &tri.ptr);
    if (rc != DC_OK) return fail(rc);
    dc_spec spec;
    rc = ft_spec.resolve(&spec);
    if (rc != DC_OK) return fail(rc);
    ModelGuard model;
    rc = dc_fit(tri.ptr, frame.ptr, &spec, ft_anchor.empty() ? nullptr : ft_anchor.c_str(),
                ft_seed, &model.ptr);
    if (rc != DC_OK) return fail(rc);
    rc = dc_model_save(model.ptr, ft_out.c_str());
    if (rc != DC_OK) return fail(rc);
    char anchor[16];
    dc_model_anchor(model.ptr, anchor, sizeof(anchor));
    std::printf("fitted at %s: theta %.4f, converged %s\n", anchor, dc_model_theta(model.ptr),
                dc_model_converged(model.ptr) ? "yes" : "no");
    for (int i = 0; i < dc_model_lambda_count(model.ptr); ++i) {
      char name[64];
      double value = 0;
      if (dc_model_lambda(model.ptr, i, name, sizeof(name), &value) == DC_OK) {
        std::printf("lambda[%s] = %.6g\n", name, value);
      }
    }
    std::printf("wrote %s\n", ft_out.c_str());
    return 0;
  }

  if (predict->parsed()) {
    unsigned mask;
    try {
      mask = parse_kinds(pr_kinds);
    } catch (const CLI::Error& e) {
      std::fprintf(stderr, "error: %s\n", e.what());
      return 4;
    }
    FrameGuard frame;
    dc_status rc = dc_frame_load(pr_frame.c_str(), &frame.ptr);
    if (rc != DC_OK) return fail(rc);
    TriangleGuard tri;
    rc = dc_triangle_load(pr_triangle.c_str(), frame.ptr, &tri.ptr);
    if (rc != DC_OK) return fail(rc);
    ModelGuard model;
    rc = dc_model_load(pr_model.c_str(), &model.ptr);
    if (rc != DC_OK) return fail(rc);
    PredictionsGuard pred;
    rc = dc_predict(model.ptr, tri.ptr, frame.ptr, mask, pr_k, pr_n, pr_level, pr_seed,
                    pr_threads, &pred.ptr);
    if (rc != DC_OK) return fail(rc);
    rc = dc_predictions_write_csv(pred.ptr, pr_out.c_str());
    if (rc != DC_OK) return fail(rc);
    if (!pr_geojson.empty()) {
      rc = dc_predictions_write_geojson(pred.ptr, frame.ptr, pr_geojson.c_str());
      if (rc != DC_OK) return fail(rc);
    }
    std::printf("%d prediction rows -> %s\n", dc_predictions_count(pred.ptr), pr_out.c_str());
    return 0;
  }

  if (evaluate->parsed()) {
    FrameGuard frame;
    dc_status rc = dc_frame_load(ev_frame.c_str(), &frame.ptr);
    if (rc != DC_OK) return fail(rc);
    ReportGuard report;
    rc = dc_evaluate(ev_snapshots.c_str(), frame.ptr, ev_variants.c_str(), ev_anchors.c_str(),
                     ev_k, ev_n, ev_level, ev_seed, ev_threads, &report.ptr);
    if (rc != DC_OK) return fail(rc);
    std::error_code ec;
    std::filesystem::create_directories(ev_outdir, ec);
    std::string metrics = ev_outdir + "/metrics.csv";
    std::string rpes = ev_outdir + "/rpe.csv";
    rc = dc_report_write_csv(report.ptr, metrics.c_str(), rpes.c_str());
    if (rc != DC_OK) return fail(rc);
    std::printf("%d evaluation cells -> %s, %s\n", dc_report_cell_count(report.ptr),
                metrics.c_str(), rpes.c_str());
    return 0;
  }

  if (simulate->parsed()) {
    dc_status rc = dc_simulate(sm_scenario.empty() ? nullptr : sm_scenario.c_str(),
                               sm_set.empty() ? nullptr : sm_set.c_str(), sm_outdir.c_str(),
                               sm_seed);
    if (rc != DC_OK) return fail(rc);
    std::printf("scenario written under %s\n", sm_outdir.c_str());
    return 0;
  }

  return 4;
}
