#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "core/stratum.hpp"
#include "core/triangle.hpp"

namespace delaycast {

struct Injection {
  int district = 0;     // index into the scenario's district list
  int day_from = 1;     // registration day range, 1-based inclusive
  int day_to = 1;
  double factor = 1.0;  // multiplicative rate factor
};

enum class Regime { stationary, growth_plateau, second_wave };

// True parameter set mirroring every model term, plus the layout of the
// simulated map. Counts are drawn sequentially in (t, d) so the
// autoregressive terms act on realized history.
struct ScenarioSpec {
  int n_districts = 20;
  int days = 120;
  int d_max = 7;
  int k_short = 7;
  std::vector<std::string> age_groups = {"15-34", "35-59"};
  std::vector<std::string> genders = {"F", "M"};
  Date start_date = Date::from_ymd(2020, 6, 1);
  double base_level = -11.5;  // log rate against the population offset
  Regime regime = Regime::stationary;
  double growth_rate = 0.06;  // per day during a growth phase
  int break_day = 60;         // growth ends (growth_plateau) or starts (second_wave)
  std::vector<double> gamma_delay = {0.0, -0.3, -0.7, -1.2, -1.8, -2.2, -2.6};
  std::vector<double> weekday_reg = {0.0, 0.05, 0.05, 0.0, -0.05, -0.35, -0.45};  // Mon..Sun
  std::vector<double> weekday_rep = {0.1, 0.05, 0.0, 0.0, -0.05, -0.5, -0.6};
  std::vector<double> beta_age;   // per age group; defaults to a mild gradient
  double beta_gender_m = -0.1;
  double sigma_u_long = 0.25;
  double sigma_u_short = 0.0;     // short-term effect over the last k_short days
  double phi = 0.0;
  double delta = 0.2;
  double theta = 0.5;
  double base_population = 50000;
  double spatial_amplitude = 0.4;
  std::vector<Injection> injections;

  void validate() const;
  // True linear predictor without AR terms and offset, for a cell.
  double eta0(int t, int d, int r, int g, const StratumFrame& frame,
              const std::vector<double>& u_long, const std::vector<double>& u_short) const;
  double s1(int t) const;
  double s2(double lon, double lat) const;
};

struct SynthResult {
  StratumFrame frame;
  CaseTriangle truth;  // complete rectangle, rows 1..days, every cell observed
  std::vector<SnapshotBatch> snapshots;
  std::vector<double> u_long;   // realized random effects, for recovery checks
  std::vector<double> u_short;
};

SynthResult generate(const ScenarioSpec& spec, std::uint64_t seed, bool with_snapshots = true);

// Snapshot projection of a complete triangle: one batch per report date
// start+1 .. start+days+d_max-1, cumulative per (registration date, r, g).
std::vector<SnapshotBatch> snapshots_from_truth(const CaseTriangle& truth);

// Flat key=value scenario configuration (CLI surface).
ScenarioSpec scenario_from_config(const std::map<std::string, std::string>& kv);
std::map<std::string, std::string> read_config_file(const std::string& path);

// Writes frame.csv, truth.csv and snapshots/<date>.csv under out_dir.
void write_scenario(const SynthResult& result, const std::string& out_dir);

}  // namespace delaycast
