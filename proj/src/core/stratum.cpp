#include "core/stratum.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "core/csv.hpp"
#include "core/error.hpp"

namespace delaycast {

const std::vector<std::string>& canonical_age_groups() {
  static const std::vector<std::string> groups = {"00-04", "05-14", "15-34",
                                                  "35-59", "60-79", "80+"};
  return groups;
}

std::optional<std::string> normalize_age_group(const std::string& raw) {
  std::string s;
  for (char c : raw) {
    if (c == 'A' || c == 'a' || c == ' ') continue;  // "A00-A04" -> "00-04"
    s += c;
  }
  for (const auto& g : canonical_age_groups()) {
    if (s == g) return g;
  }
  if (s == "80plus") return std::string("80+");
  return std::nullopt;
}

std::optional<std::string> normalize_gender(const std::string& raw) {
  if (raw == "F" || raw == "f" || raw == "W" || raw == "w") return std::string("F");
  if (raw == "M" || raw == "m") return std::string("M");
  return std::nullopt;
}

StratumFrame::StratumFrame(std::vector<District> districts, std::vector<Stratum> groups,
                           std::vector<double> population)
    : districts_(std::move(districts)),
      groups_(std::move(groups)),
      population_(std::move(population)) {
  if (population_.size() != districts_.size() * groups_.size()) {
    throw Error(Errc::usage, "BadFrame", "population table does not match R x G");
  }
  for (std::size_t r = 0; r < districts_.size(); ++r) {
    if (!district_lookup_.emplace(districts_[r].id, static_cast<int>(r)).second) {
      throw Error(Errc::data, "DuplicateDistrict",
                  "district_id '" + districts_[r].id + "' listed twice");
    }
  }
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    group_lookup_.emplace(groups_[g].label(), static_cast<int>(g));
  }
  for (double p : population_) {
    if (!(p > 0)) {
      throw Error(Errc::data, "ZeroPopulation",
                  "every (district, age group, gender) stratum needs population > 0");
    }
  }
}

int StratumFrame::district_index(const std::string& id) const {
  auto it = district_lookup_.find(id);
  return it == district_lookup_.end() ? -1 : it->second;
}

int StratumFrame::group_index(const std::string& age, const std::string& gender) const {
  auto it = group_lookup_.find(age + "_" + gender);
  return it == group_lookup_.end() ? -1 : it->second;
}

double StratumFrame::district_population(int r) const {
  double total = 0;
  for (int g = 0; g < n_groups(); ++g) total += population(r, g);
  return total;
}

double StratumFrame::total_population() const {
  double total = 0;
  for (int r = 0; r < n_districts(); ++r) total += district_population(r);
  return total;
}

StratumFrame StratumFrame::load_csv(const std::string& path) {
  csv::Table t = csv::read_file(path);
  int c_id = t.require_column("district_id");
  int c_name = t.column("name");
  if (c_name < 0) c_name = t.column("district_name");
  int c_lon = t.require_column("lon");
  int c_lat = t.require_column("lat");

  // Population columns are pop_<age>_<gender>.
  std::vector<Stratum> groups;
  std::vector<int> pop_cols;
  for (std::size_t i = 0; i < t.header.size(); ++i) {
    const std::string& h = t.header[i];
    if (h.rfind("pop_", 0) != 0) continue;
    auto us = h.rfind('_');
    if (us == std::string::npos || us < 4) {
      throw Error(Errc::data, "BadFrame", "population column '" + h + "' is not pop_<age>_<gender>");
    }
    auto age = normalize_age_group(h.substr(4, us - 4));
    auto gender = normalize_gender(h.substr(us + 1));
    if (!age || !gender) {
      throw Error(Errc::data, "BadFrame", "population column '" + h + "' names an unknown stratum");
    }
    groups.push_back(Stratum{*age, *gender});
    pop_cols.push_back(static_cast<int>(i));
  }
  if (groups.empty()) throw Error(Errc::data, "BadFrame", "no pop_<age>_<gender> columns in " + path);

  std::vector<District> districts;
  std::vector<double> pop;
  for (const auto& row : t.rows) {
    District d;
    d.id = row.at(static_cast<std::size_t>(c_id));
    d.name = c_name >= 0 ? row.at(static_cast<std::size_t>(c_name)) : d.id;
    d.lon = std::stod(row.at(static_cast<std::size_t>(c_lon)));
    d.lat = std::stod(row.at(static_cast<std::size_t>(c_lat)));
    districts.push_back(std::move(d));
    for (int pc : pop_cols) pop.push_back(std::stod(row.at(static_cast<std::size_t>(pc))));
  }
  return StratumFrame(std::move(districts), std::move(groups), std::move(pop));
}

void StratumFrame::save_csv(const std::string& path) const {
  std::string out;
  std::vector<std::string> header = {"district_id", "name", "lon", "lat"};
  for (const auto& g : groups_) header.push_back("pop_" + g.age_group + "_" + g.gender);
  csv::write_row(out, header);
  char buf[64];
  for (int r = 0; r < n_districts(); ++r) {
    std::vector<std::string> row = {districts_[static_cast<std::size_t>(r)].id,
                                    districts_[static_cast<std::size_t>(r)].name};
    std::snprintf(buf, sizeof(buf), "%.6f", districts_[static_cast<std::size_t>(r)].lon);
    row.push_back(buf);
    std::snprintf(buf, sizeof(buf), "%.6f", districts_[static_cast<std::size_t>(r)].lat);
    row.push_back(buf);
    for (int g = 0; g < n_groups(); ++g) {
      std::snprintf(buf, sizeof(buf), "%.0f", population(r, g));
      row.push_back(buf);
    }
    csv::write_row(out, row);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::data, "FileNotFound", "cannot write '" + path + "'");
  f << out;
}

}  // namespace delaycast
