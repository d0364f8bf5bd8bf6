#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace fineas {

// A UTC instant with second precision. All timestamps in the pipeline are
// UTC; no local-time or DST handling anywhere.
struct UtcTime {
  int64_t seconds = 0;  // seconds since 1970-01-01T00:00:00Z

  friend bool operator==(UtcTime a, UtcTime b) { return a.seconds == b.seconds; }
  friend bool operator!=(UtcTime a, UtcTime b) { return a.seconds != b.seconds; }
  friend bool operator<(UtcTime a, UtcTime b) { return a.seconds < b.seconds; }
  friend bool operator<=(UtcTime a, UtcTime b) { return a.seconds <= b.seconds; }
  friend bool operator>(UtcTime a, UtcTime b) { return a.seconds > b.seconds; }
  friend bool operator>=(UtcTime a, UtcTime b) { return a.seconds >= b.seconds; }
};

struct CivilTime {
  int year = 1970;
  int month = 1;  // 1..12
  int day = 1;    // 1..31
  int hour = 0;
  int minute = 0;
  int second = 0;
};

// Days since epoch for a civil date (proleptic Gregorian calendar).
int64_t days_from_civil(int year, int month, int day);
void civil_from_days(int64_t days, int& year, int& month, int& day);
int days_in_month(int year, int month);

UtcTime to_utc(const CivilTime& c);
CivilTime to_civil(UtcTime t);

// Strict "YYYY-MM-DDTHH:MM:SSZ" parse. Returns nullopt on any deviation
// (bad digits, out-of-range fields, missing 'Z', trailing bytes).
std::optional<UtcTime> parse_utc(const std::string& s);

// Inverse of parse_utc; always emits the full 20-char form.
std::string format_utc(UtcTime t);

// Calendar-month subtraction keeping day-of-month, clamped to month end
// (e.g. Aug 31 minus 6 months -> Feb 28/29). Time of day is preserved.
UtcTime minus_months(UtcTime t, int months);

UtcTime plus_days(UtcTime t, int days);

}  // namespace fineas
