#include "polyp/date.hpp"

#include <charconv>
#include <cstdio>

#include "polyp/error.hpp"

namespace polyp {

namespace {

int parse_int(std::string_view s, std::string_view whole) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(ErrorCode::Parse, "invalid date: '" + std::string(whole) + "'");
  }
  return value;
}

}  // namespace

Date Date::parse(std::string_view text) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
    throw Error(ErrorCode::Parse, "invalid date: '" + std::string(text) + "'");
  }
  using namespace std::chrono;
  const year_month_day ymd{year{parse_int(text.substr(0, 4), text)},
                           month{static_cast<unsigned>(parse_int(text.substr(5, 2), text))},
                           day{static_cast<unsigned>(parse_int(text.substr(8, 2), text))}};
  if (!ymd.ok()) {
    throw Error(ErrorCode::Parse, "invalid date: '" + std::string(text) + "'");
  }
  return Date(sys_days(ymd));
}

Date Date::from_offset(int days_since_epoch) {
  return Date(std::chrono::sys_days(std::chrono::days(days_since_epoch)));
}

std::string Date::to_string() const {
  const std::chrono::year_month_day ymd(days_);
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NoEvents: return "NoEvents";
    case ErrorCode::SingularHessian: return "SingularHessian";
    case ErrorCode::MissingCovariate: return "MissingCovariate";
    case ErrorCode::NoOobTrees: return "NoOobTrees";
    case ErrorCode::NoUsablePairs: return "NoUsablePairs";
    case ErrorCode::DegenerateLabels: return "DegenerateLabels";
    case ErrorCode::UnrenderableSummary: return "UnrenderableSummary";
    case ErrorCode::NoCompleteCases: return "NoCompleteCases";
    case ErrorCode::IneligibleHistory: return "IneligibleHistory";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Parse: return "Parse";
  }
  return "Unknown";
}

}  // namespace polyp
