#include "core/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "core/error.hpp"
#include "core/rng.hpp"

namespace delaycast {

void ScenarioSpec::validate() const {
  if (n_districts < 2) throw Error(Errc::usage, "BadScenario", "need at least 2 districts");
  if (days < 10) throw Error(Errc::usage, "BadScenario", "need at least 10 days");
  if (d_max < 1) throw Error(Errc::usage, "BadScenario", "d_max must be >= 1");
  if (static_cast<int>(gamma_delay.size()) != d_max) {
    throw Error(Errc::usage, "BadScenario", "gamma_delay must have d_max entries");
  }
  if (weekday_reg.size() != 7 || weekday_rep.size() != 7) {
    throw Error(Errc::usage, "BadScenario", "weekday effect vectors must have 7 entries");
  }
  if (!(theta > 0)) throw Error(Errc::usage, "BadScenario", "theta must be > 0");
  for (const auto& inj : injections) {
    if (inj.district < 0 || inj.district >= n_districts || inj.day_from > inj.day_to ||
        !(inj.factor > 0)) {
      throw Error(Errc::usage, "BadScenario", "invalid injection");
    }
  }
}

double ScenarioSpec::s1(int t) const {
  switch (regime) {
    case Regime::stationary:
      return 0.0;
    case Regime::growth_plateau:
      // Rises to the base level and stays there.
      return growth_rate * (std::min(t, break_day) - break_day);
    case Regime::second_wave:
      return t <= break_day ? 0.0 : growth_rate * (t - break_day);
  }
  return 0.0;
}

double ScenarioSpec::s2(double lon, double lat) const {
  return spatial_amplitude * std::sin(0.9 * (lon - 6.0)) * std::cos(0.8 * (lat - 47.0));
}

double ScenarioSpec::eta0(int t, int d, int r, int g, const StratumFrame& frame,
                          const std::vector<double>& u_long,
                          const std::vector<double>& u_short) const {
  const District& dist = frame.district(r);
  const Stratum& s = frame.group(g);
  int age_idx = 0;
  for (std::size_t i = 0; i < age_groups.size(); ++i) {
    if (age_groups[i] == s.age_group) age_idx = static_cast<int>(i);
  }
  Date reg = start_date + (t - 1);
  double eta = base_level + s1(t) + s2(dist.lon, dist.lat) +
               gamma_delay[static_cast<std::size_t>(d - 1)] +
               weekday_reg[static_cast<std::size_t>(reg.weekday())] +
               weekday_rep[static_cast<std::size_t>((reg + d).weekday())] +
               (beta_age.empty() ? 0.15 * age_idx
                                 : beta_age[static_cast<std::size_t>(age_idx)]) +
               (s.gender == "M" ? beta_gender_m : 0.0) + u_long[static_cast<std::size_t>(r)];
  if (t > days - k_short) eta += u_short[static_cast<std::size_t>(r)];
  for (const auto& inj : injections) {
    if (inj.district == r && t >= inj.day_from && t <= inj.day_to) eta += std::log(inj.factor);
  }
  return eta;
}

namespace {

StratumFrame make_frame(const ScenarioSpec& spec) {
  // Grid layout with Germany-like coordinates; column/row counts chosen so
  // both axes have several distinct values.
  int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(spec.n_districts))));
  std::vector<District> districts;
  for (int r = 0; r < spec.n_districts; ++r) {
    District d;
    char id[16];
    std::snprintf(id, sizeof(id), "D%03d", r + 1);
    d.id = id;
    d.name = std::string("District ") + std::to_string(r + 1);
    d.lon = 6.0 + 0.8 * (r % cols);
    d.lat = 47.0 + 0.7 * (r / cols);
    districts.push_back(std::move(d));
  }
  std::vector<Stratum> groups;
  for (const auto& a : spec.age_groups) {
    for (const auto& g : spec.genders) groups.push_back(Stratum{a, g});
  }
  std::vector<double> pop;
  for (int r = 0; r < spec.n_districts; ++r) {
    for (std::size_t g = 0; g < groups.size(); ++g) {
      // Deterministic variation so districts differ without extra RNG state.
      double f = 0.8 + 0.4 * (((r * 31 + static_cast<int>(g) * 17) % 97) / 96.0);
      pop.push_back(std::floor(spec.base_population * f));
    }
  }
  return StratumFrame(std::move(districts), std::move(groups), std::move(pop));
}

}  // namespace

SynthResult generate(const ScenarioSpec& spec, std::uint64_t seed, bool with_snapshots) {
  spec.validate();
  StratumFrame frame = make_frame(spec);
  const int R = frame.n_districts();
  const int G = frame.n_groups();

  std::mt19937_64 rng = substream(seed, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> u_long(static_cast<std::size_t>(R), 0.0);
  std::vector<double> u_short(static_cast<std::size_t>(R), 0.0);
  for (int r = 0; r < R; ++r) u_long[static_cast<std::size_t>(r)] = spec.sigma_u_long * normal(rng);
  for (int r = 0; r < R; ++r) {
    u_short[static_cast<std::size_t>(r)] = spec.sigma_u_short * normal(rng);
  }

  std::vector<std::string> ids;
  for (const auto& d : frame.districts()) ids.push_back(d.id);
  // Anchor beyond the last report day marks every cell observed.
  CaseTriangle truth(spec.start_date, spec.days, spec.days + spec.d_max, spec.d_max, ids,
                     frame.groups());

  // Sequential draw in (t, d): C[t-1,d] and C[t,d-1] are fully realized when
  // cell (t, d) is drawn.
  std::vector<double> cum_prev_row(static_cast<std::size_t>(spec.d_max * R * G), 0.0);
  std::vector<double> cum_row(cum_prev_row.size(), 0.0);
  auto cidx = [&](int d, int r, int g) {
    return (static_cast<std::size_t>(d - 1) * static_cast<std::size_t>(R) +
            static_cast<std::size_t>(r)) *
               static_cast<std::size_t>(G) +
           static_cast<std::size_t>(g);
  };
  for (int t = 1; t <= spec.days; ++t) {
    std::fill(cum_row.begin(), cum_row.end(), 0.0);
    for (int d = 1; d <= spec.d_max; ++d) {
      for (int r = 0; r < R; ++r) {
        for (int g = 0; g < G; ++g) {
          double eta = spec.eta0(t, d, r, g, frame, u_long, u_short) +
                       std::log(frame.population(r, g));
          if (spec.phi != 0.0 && t > 1) {
            eta += spec.phi * std::log1p(cum_prev_row[cidx(d, r, g)]);
          }
          if (spec.delta != 0.0 && d > 1) {
            eta += spec.delta * std::log1p(cum_row[cidx(d - 1, r, g)]);
          }
          double mu = std::exp(std::min(eta, 30.0));
          long n = sample_nb2(rng, mu, spec.theta);
          truth.set_cell(t, d, r, g, static_cast<double>(n), CellState::observed);
          cum_row[cidx(d, r, g)] =
              (d > 1 ? cum_row[cidx(d - 1, r, g)] : 0.0) + static_cast<double>(n);
        }
      }
    }
    std::swap(cum_prev_row, cum_row);
  }

  SynthResult out{std::move(frame), std::move(truth), {}, std::move(u_long),
                  std::move(u_short)};
  if (with_snapshots) out.snapshots = snapshots_from_truth(out.truth);
  return out;
}

std::vector<SnapshotBatch> snapshots_from_truth(const CaseTriangle& truth) {
  std::vector<SnapshotBatch> batches;
  const int days = truth.n_rows();
  const int d_max = truth.d_max();
  for (int s = 2; s <= days + d_max; ++s) {
    SnapshotBatch batch;
    batch.report_date = truth.start_date() + (s - 1);
    for (int t = 1; t <= std::min(days, s - 1); ++t) {
      int d_avail = std::min(s - t, d_max);
      for (int r = 0; r < truth.n_districts(); ++r) {
        for (int g = 0; g < truth.n_groups(); ++g) {
          double c = 0;
          for (int d = 1; d <= d_avail; ++d) c += truth.at(t, d, r, g);
          if (c <= 0) continue;
          SnapshotRecord rec;
          rec.district_id = truth.district_ids()[static_cast<std::size_t>(r)];
          rec.age_group = truth.groups()[static_cast<std::size_t>(g)].age_group;
          rec.gender = truth.groups()[static_cast<std::size_t>(g)].gender;
          rec.count = static_cast<long>(c + 0.5);
          rec.registration_date = truth.date_of_row(t);
          rec.report_date = batch.report_date;
          batch.records.push_back(std::move(rec));
        }
      }
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::data, "FileNotFound", "cannot open config '" + path + "'");
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      auto b = s.find_first_not_of(" \t");
      auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (!key.empty()) kv[key] = val;
  }
  return kv;
}

namespace {

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

ScenarioSpec scenario_from_config(const std::map<std::string, std::string>& kv) {
  ScenarioSpec spec;
  auto get = [&](const char* k) -> const std::string* {
    auto it = kv.find(k);
    return it == kv.end() ? nullptr : &it->second;
  };
  if (auto* v = get("districts")) spec.n_districts = std::stoi(*v);
  if (auto* v = get("days")) spec.days = std::stoi(*v);
  if (auto* v = get("d_max")) spec.d_max = std::stoi(*v);
  if (auto* v = get("k_short")) spec.k_short = std::stoi(*v);
  if (auto* v = get("start")) spec.start_date = Date::parse(*v);
  if (auto* v = get("regime")) {
    if (*v == "stationary") spec.regime = Regime::stationary;
    else if (*v == "growth_plateau") spec.regime = Regime::growth_plateau;
    else if (*v == "second_wave") spec.regime = Regime::second_wave;
    else throw Error(Errc::usage, "BadScenario", "unknown regime '" + *v + "'");
  }
  if (auto* v = get("growth_rate")) spec.growth_rate = std::stod(*v);
  if (auto* v = get("break_day")) spec.break_day = std::stoi(*v);
  if (auto* v = get("base_level")) spec.base_level = std::stod(*v);
  if (auto* v = get("base_population")) spec.base_population = std::stod(*v);
  if (auto* v = get("spatial_amplitude")) spec.spatial_amplitude = std::stod(*v);
  if (auto* v = get("sigma_u_long")) spec.sigma_u_long = std::stod(*v);
  if (auto* v = get("sigma_u_short")) spec.sigma_u_short = std::stod(*v);
  if (auto* v = get("phi")) spec.phi = std::stod(*v);
  if (auto* v = get("delta")) spec.delta = std::stod(*v);
  if (auto* v = get("theta")) spec.theta = std::stod(*v);
  if (auto* v = get("beta_gender_m")) spec.beta_gender_m = std::stod(*v);
  if (auto* v = get("age_groups")) {
    spec.age_groups = split_list(*v, ',');
    if (spec.age_groups.empty())
      throw Error(Errc::usage, "BadScenario", "age_groups must not be empty");
  }
  if (auto* v = get("gamma_delay")) {
    spec.gamma_delay.clear();
    for (const auto& s : split_list(*v, ',')) spec.gamma_delay.push_back(std::stod(s));
  }
  if (auto* v = get("beta_age")) {
    spec.beta_age.clear();
    for (const auto& s : split_list(*v, ',')) spec.beta_age.push_back(std::stod(s));
  }
  if (auto* v = get("injections")) {
    // district_index:from:to:factor, ';'-separated
    for (const auto& item : split_list(*v, ';')) {
      auto parts = split_list(item, ':');
      if (parts.size() != 4) throw Error(Errc::usage, "BadScenario", "bad injection '" + item + "'");
      Injection inj;
      inj.district = std::stoi(parts[0]);
      inj.day_from = std::stoi(parts[1]);
      inj.day_to = std::stoi(parts[2]);
      inj.factor = std::stod(parts[3]);
      spec.injections.push_back(inj);
    }
  }
  // gamma_delay must track d_max when only the latter is overridden.
  if (static_cast<int>(spec.gamma_delay.size()) != spec.d_max) {
    std::vector<double> g(static_cast<std::size_t>(spec.d_max));
    for (int d = 0; d < spec.d_max; ++d) {
      g[static_cast<std::size_t>(d)] =
          d < static_cast<int>(spec.gamma_delay.size()) ? spec.gamma_delay[static_cast<std::size_t>(d)]
                                                        : -0.4 * d;
    }
    spec.gamma_delay = std::move(g);
  }
  spec.validate();
  return spec;
}

void write_scenario(const SynthResult& result, const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "snapshots", ec);
  if (ec) throw Error(Errc::data, "FileNotFound", "cannot create '" + out_dir + "'");
  result.frame.save_csv((fs::path(out_dir) / "frame.csv").string());
  save_triangle(result.truth, (fs::path(out_dir) / "truth.csv").string());
  for (const auto& batch : result.snapshots) {
    write_snapshot_csv(batch,
                       (fs::path(out_dir) / "snapshots" / (batch.report_date.iso() + ".csv"))
                           .string());
  }
}

}  // namespace delaycast
