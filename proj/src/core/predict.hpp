#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "core/estimate.hpp"
#include "core/triangle.hpp"

namespace delaycast {

enum class FillMode { mean, sampled };

// Precomputed iterative-prediction schedule: every cell to fill in report-day
// (diagonal) order with its non-autoregressive linear predictor. Replicates
// re-run only the AR chain and the NB2 draws on top of this.
class FillPlan {
 public:
  FillPlan(const FittedModel& model, const CaseTriangle& tri, int horizon_k);

  struct Cell {
    int t;
    int d;
    std::size_t eta0_offset;  // into eta0_, R*G values
  };

  int rows_out() const { return rows_out_; }
  int horizon() const { return horizon_; }
  const CaseTriangle& base() const { return *tri_; }
  const FittedModel& model() const { return *model_; }

  // Fills work arrays sized rows_out x d_max x R x G (registration-major).
  // work_n: counts; work_c: row-cumulative counts. Observed cells are copied
  // from the base triangle; missing cells get mean or sampled values.
  void run(FillMode mode, std::mt19937_64* rng, std::vector<double>& work_n,
           std::vector<double>& work_c) const;

  std::size_t work_size() const {
    return static_cast<std::size_t>(rows_out_) * static_cast<std::size_t>(d_max_) *
           static_cast<std::size_t>(r_) * static_cast<std::size_t>(g_);
  }
  std::size_t widx(int t, int d, int r, int g) const {
    return ((static_cast<std::size_t>(t - 1) * static_cast<std::size_t>(d_max_) +
             static_cast<std::size_t>(d - 1)) *
                static_cast<std::size_t>(r_) +
            static_cast<std::size_t>(r)) *
               static_cast<std::size_t>(g_) +
           static_cast<std::size_t>(g);
  }

  // Weekly target aggregate for district r evaluated on filled work arrays.
  double aggregate(const std::vector<double>& work_n, const std::vector<double>& work_c,
                   TargetKind kind, int k, int r) const;

 private:
  const FittedModel* model_;
  const CaseTriangle* tri_;
  int horizon_;
  int rows_out_;
  int d_max_;
  int r_;
  int g_;
  int anchor_;
  double phi_ = 0.0;
  double delta_ = 0.0;
  double theta_;
  std::vector<Cell> cells_;
  std::vector<double> eta0_;
};

// Completes the missing wedge (and, for horizon_k >= 1, rows up to
// T + horizon_k - 1) by iterative diagonal prediction. mode=mean writes the
// NB means; mode=sampled draws NB2 counts that feed back into the AR chain.
CaseTriangle fill_cells(const FittedModel& model, const CaseTriangle& tri, const CumTriangle& cum,
                        int horizon_k, FillMode mode, std::uint64_t seed);

struct PredictionRow {
  std::string district_id;
  std::string district_name;
  std::string kind;  // nowcast | forecast | forenowcast | incidence
  double point = 0;
  double lower = 0;
  double upper = 0;
};

struct PredictionSet {
  Date anchor_date;
  int k = 7;
  double level = 0.90;
  int bootstrap_n = 0;
  std::uint64_t seed = 0;
  CaseTriangle filled;  // mean-mode fill
  std::vector<PredictionRow> rows;
};

struct Interval {
  double lower = 0;
  double upper = 0;
};

constexpr unsigned kKindNowcast = 1u;
constexpr unsigned kKindForecast = 2u;
constexpr unsigned kKindForenowcast = 4u;
constexpr unsigned kKindIncidence = 8u;

// Point predictions from a single mean fill plus bootstrap intervals from n
// sampled fills (shared replicates across the requested kinds). Replicate RNG
// streams are derived from (seed, replicate), so results do not depend on the
// thread count.
PredictionSet predict_targets(const FittedModel& model, const CaseTriangle& tri,
                              const StratumFrame& frame, unsigned kinds_mask, int k, int n_boot,
                              double level, std::uint64_t seed, int threads);

// Single-kind convenience wrappers spelled after the three prediction flavors.
PredictionSet nowcast(const FittedModel& model, const CaseTriangle& tri, const StratumFrame& frame,
                      int n_boot, double level, std::uint64_t seed, int threads = 1, int k = 7);
PredictionSet forecast(const FittedModel& model, const CaseTriangle& tri,
                       const StratumFrame& frame, int k, int n_boot, double level,
                       std::uint64_t seed, int threads = 1);
PredictionSet forenowcast(const FittedModel& model, const CaseTriangle& tri,
                          const StratumFrame& frame, int k, int n_boot, double level,
                          std::uint64_t seed, int threads = 1);

// Per-district bootstrap interval for one target kind.
std::vector<Interval> bootstrap_intervals(const FittedModel& model, const CaseTriangle& tri,
                                          TargetKind kind, int k, int n, double level,
                                          std::uint64_t seed, int threads = 1);

// Delay-corrected 7-day incidence per 100k from the nowcast; the last entry
// is the national value (summed numerators over summed populations).
std::vector<double> seven_day_incidence(const FittedModel& model, const CaseTriangle& tri,
                                        const StratumFrame& frame);

// Uncorrected comparator: the same weekly window using only cells already
// reported by the anchor day. Test/analysis helper, not a product output.
std::vector<double> uncorrected_incidence(const CaseTriangle& tri, const StratumFrame& frame,
                                          int k = 7);

// Type-7 empirical quantile on a copy of the values.
double quantile_type7(std::vector<double> values, double p);

void write_predictions_csv(const PredictionSet& set, const std::string& path);
void write_predictions_geojson(const PredictionSet& set, const StratumFrame& frame,
                               const std::string& path);

}  // namespace delaycast
