#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace delaycast {

// A stratum is an (age group, gender) cell. Canonical age groups follow the
// national register's six bands; gender codes are F and M.
struct Stratum {
  std::string age_group;
  std::string gender;

  std::string label() const { return age_group + "_" + gender; }
  friend bool operator==(const Stratum& a, const Stratum& b) {
    return a.age_group == b.age_group && a.gender == b.gender;
  }
};

struct District {
  std::string id;
  std::string name;
  double lon = 0;
  double lat = 0;
};

const std::vector<std::string>& canonical_age_groups();

// Returns the canonical form ("00-04".."80+", "F"/"M"), or nullopt for
// unknown/unparseable categories. Accepts the register's raw spellings
// ("A00-A04", "A80+", gender "W" for female).
std::optional<std::string> normalize_age_group(const std::string& raw);
std::optional<std::string> normalize_gender(const std::string& raw);

// District metadata, coordinates and per-stratum population sizes.
class StratumFrame {
 public:
  StratumFrame(std::vector<District> districts, std::vector<Stratum> groups,
               std::vector<double> population);  // population is R x G, row-major

  static StratumFrame load_csv(const std::string& path);
  void save_csv(const std::string& path) const;

  int n_districts() const { return static_cast<int>(districts_.size()); }
  int n_groups() const { return static_cast<int>(groups_.size()); }

  const std::vector<District>& districts() const { return districts_; }
  const std::vector<Stratum>& groups() const { return groups_; }
  const District& district(int r) const { return districts_.at(static_cast<std::size_t>(r)); }
  const Stratum& group(int g) const { return groups_.at(static_cast<std::size_t>(g)); }

  int district_index(const std::string& id) const;        // -1 when absent
  int group_index(const std::string& age, const std::string& gender) const;

  double population(int r, int g) const {
    return population_[static_cast<std::size_t>(r) * groups_.size() + static_cast<std::size_t>(g)];
  }
  double district_population(int r) const;
  double total_population() const;

 private:
  std::vector<District> districts_;
  std::vector<Stratum> groups_;
  std::vector<double> population_;
  std::unordered_map<std::string, int> district_lookup_;
  std::unordered_map<std::string, int> group_lookup_;
};

}  // namespace delaycast
