#pragma once

#include <cstdint>
#include <string>

namespace delaycast {

// Calendar day stored as days since 1970-01-01, so day indexing in the
// reporting triangle is plain integer arithmetic.
class Date {
 public:
  Date() = default;

  static Date from_days(std::int64_t d) {
    Date out;
    out.days_ = d;
    return out;
  }
  static Date from_ymd(int year, int month, int day);

  // Parses "YYYY-MM-DD". Also tolerates a trailing time part
  // ("2020-09-25 00:00:00" or "...T00:00:00") as in some RKI exports.
  static Date parse(const std::string& iso);

  std::int64_t days() const { return days_; }
  std::string iso() const;

  // 0 = Monday ... 6 = Sunday.
  int weekday() const {
    std::int64_t w = (days_ + 3) % 7;  // 1970-01-01 was a Thursday
    return static_cast<int>(w < 0 ? w + 7 : w);
  }

  Date operator+(std::int64_t n) const { return from_days(days_ + n); }
  Date operator-(std::int64_t n) const { return from_days(days_ - n); }
  std::int64_t operator-(const Date& o) const { return days_ - o.days_; }

  friend bool operator==(const Date& a, const Date& b) { return a.days_ == b.days_; }
  friend bool operator!=(const Date& a, const Date& b) { return a.days_ != b.days_; }
  friend bool operator<(const Date& a, const Date& b) { return a.days_ < b.days_; }
  friend bool operator<=(const Date& a, const Date& b) { return a.days_ <= b.days_; }
  friend bool operator>(const Date& a, const Date& b) { return a.days_ > b.days_; }
  friend bool operator>=(const Date& a, const Date& b) { return a.days_ >= b.days_; }

 private:
  std::int64_t days_ = 0;
};

const char* weekday_name(int wd);

}  // namespace delaycast
