#pragma once

#include <chrono>
#include <compare>
#include <string>
#include <string_view>

namespace polyp {

// Calendar date with day resolution. Always valid once constructed.
class Date {
 public:
  Date() = default;
  explicit Date(std::chrono::sys_days days) : days_(days) {}

  // Parses "YYYY-MM-DD"; throws Error(Parse) on malformed or impossible dates.
  static Date parse(std::string_view text);
  static Date from_offset(int days_since_epoch);

  int offset() const { return static_cast<int>(days_.time_since_epoch().count()); }
  std::string to_string() const;

  Date plus_days(int n) const { return Date(days_ + std::chrono::days(n)); }
  friend int days_between(const Date& from, const Date& to) { return to.offset() - from.offset(); }

  friend auto operator<=>(const Date&, const Date&) = default;

 private:
  std::chrono::sys_days days_{};
};

}  // namespace polyp
