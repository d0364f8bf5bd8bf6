#include "fineas/time_utils.hpp"

#include <cctype>
#include <cstdio>

namespace fineas {

// Howard Hinnant's branchless civil-date algorithms.
int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);             // [0, 399]
  const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;  // [0, 365]
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;            // [0, 146096]
  return era * 146097 + static_cast<int64_t>(doe) - 719468;
}

void civil_from_days(int64_t z, int& year, int& month, int& day) {
  z += 719468;
  const int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);           // [0, 146096]
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const int64_t y = static_cast<int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);           // [0, 365]
  const unsigned mp = (5 * doy + 2) / 153;                                // [0, 11]
  day = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  month = static_cast<int>(mp + (mp < 10 ? 3 : -9));
  year = static_cast<int>(y + (month <= 2));
}

int days_in_month(int year, int month) {
  static const int lengths[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (month == 2) {
    const bool leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
    return leap ? 29 : 28;
  }
  return lengths[month - 1];
}

UtcTime to_utc(const CivilTime& c) {
  const int64_t days = days_from_civil(c.year, c.month, c.day);
  return UtcTime{days * 86400 + c.hour * 3600 + c.minute * 60 + c.second};
}

CivilTime to_civil(UtcTime t) {
  int64_t days = t.seconds / 86400;
  int64_t rem = t.seconds % 86400;
  if (rem < 0) {
    rem += 86400;
    days -= 1;
  }
  CivilTime c;
  civil_from_days(days, c.year, c.month, c.day);
  c.hour = static_cast<int>(rem / 3600);
  c.minute = static_cast<int>((rem % 3600) / 60);
  c.second = static_cast<int>(rem % 60);
  return c;
}

namespace {

bool read_digits(const std::string& s, size_t pos, size_t n, int& out) {
  int v = 0;
  for (size_t i = 0; i < n; ++i) {
    const char c = s[pos + i];
    if (c < '0' || c > '9') return false;
    v = v * 10 + (c - '0');
  }
  out = v;
  return true;
}

}  // namespace

std::optional<UtcTime> parse_utc(const std::string& s) {
  // YYYY-MM-DDTHH:MM:SSZ
  if (s.size() != 20) return std::nullopt;
  if (s[4] != '-' || s[7] != '-' || s[10] != 'T' || s[13] != ':' ||
      s[16] != ':' || s[19] != 'Z') {
    return std::nullopt;
  }
  CivilTime c;
  if (!read_digits(s, 0, 4, c.year) || !read_digits(s, 5, 2, c.month) ||
      !read_digits(s, 8, 2, c.day) || !read_digits(s, 11, 2, c.hour) ||
      !read_digits(s, 14, 2, c.minute) || !read_digits(s, 17, 2, c.second)) {
    return std::nullopt;
  }
  if (c.month < 1 || c.month > 12) return std::nullopt;
  if (c.day < 1 || c.day > days_in_month(c.year, c.month)) return std::nullopt;
  if (c.hour > 23 || c.minute > 59 || c.second > 59) return std::nullopt;
  return to_utc(c);
}

std::string format_utc(UtcTime t) {
  const CivilTime c = to_civil(t);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", c.year,
                c.month, c.day, c.hour, c.minute, c.second);
  return buf;
}

UtcTime minus_months(UtcTime t, int months) {
  CivilTime c = to_civil(t);
  int total = c.year * 12 + (c.month - 1) - months;
  c.year = total >= 0 ? total / 12 : (total - 11) / 12;
  c.month = static_cast<int>(total - c.year * 12) + 1;
  const int dim = days_in_month(c.year, c.month);
  if (c.day > dim) c.day = dim;
  return to_utc(c);
}

UtcTime plus_days(UtcTime t, int days) {
  return UtcTime{t.seconds + static_cast<int64_t>(days) * 86400};
}

}  // namespace fineas
