#pragma once

#include <charconv>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <string>
#include <string_view>

namespace relicl {

/// Epoch milliseconds. `kNegInf` marks rows of tables without a time column.
using Timestamp = std::int64_t;

inline constexpr Timestamp kNegInf = std::numeric_limits<Timestamp>::min();
inline constexpr Timestamp kPosInf = std::numeric_limits<Timestamp>::max();
inline constexpr Timestamp kMsPerHour = 3'600'000;
inline constexpr Timestamp kMsPerDay = 24 * kMsPerHour;

namespace detail {

inline bool read_fixed(std::string_view s, std::size_t pos, std::size_t len, int& out) {
  if (pos + len > s.size()) return false;
  const char* first = s.data() + pos;
  auto [ptr, ec] = std::from_chars(first, first + len, out);
  return ec == std::errc{} && ptr == first + len;
}

}  // namespace detail

/// Parses `YYYY-MM-DD`, optionally followed by `T` or a space and
/// `HH:MM[:SS[.fff]]`, and an optional trailing `Z`. Times are UTC.
inline std::optional<Timestamp> parse_timestamp(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (!s.empty() && s.back() == 'Z') s.remove_suffix(1);
  if (s.size() < 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  int y = 0, mo = 0, d = 0;
  if (!detail::read_fixed(s, 0, 4, y) || !detail::read_fixed(s, 5, 2, mo) ||
      !detail::read_fixed(s, 8, 2, d)) {
    return std::nullopt;
  }
  std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(mo)},
                                  std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  Timestamp ms = static_cast<Timestamp>(std::chrono::sys_days{ymd}.time_since_epoch().count()) * kMsPerDay;
  if (s.size() == 10) return ms;
  if (s[10] != 'T' && s[10] != ' ') return std::nullopt;
  int hh = 0, mm = 0, ss = 0, frac = 0;
  if (s.size() < 16 || s[13] != ':' || !detail::read_fixed(s, 11, 2, hh) || !detail::read_fixed(s, 14, 2, mm)) {
    return std::nullopt;
  }
  std::size_t pos = 16;
  if (pos < s.size()) {
    if (s[pos] != ':' || !detail::read_fixed(s, pos + 1, 2, ss)) return std::nullopt;
    pos += 3;
    if (pos < s.size()) {
      if (s[pos] != '.') return std::nullopt;
      std::size_t digits = s.size() - pos - 1;
      if (digits == 0 || digits > 9 || !detail::read_fixed(s, pos + 1, digits, frac)) return std::nullopt;
      while (digits > 3) {
        frac /= 10;
        --digits;
      }
      while (digits < 3) {
        frac *= 10;
        ++digits;
      }
    }
  }
  if (hh > 23 || mm > 59 || ss > 60) return std::nullopt;
  return ms + hh * kMsPerHour + mm * 60'000 + ss * 1000 + frac;
}

/// Inverse of parse_timestamp. Midnight renders as a bare date.
inline std::string format_timestamp(Timestamp t) {
  if (t == kNegInf) return "-inf";
  if (t == kPosInf) return "+inf";
  Timestamp days = t >= 0 ? t / kMsPerDay : -((-t + kMsPerDay - 1) / kMsPerDay);
  Timestamp rem = t - days * kMsPerDay;
  std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{days}}};
  char buf[48];
  int y = static_cast<int>(ymd.year());
  unsigned mo = static_cast<unsigned>(ymd.month()), d = static_cast<unsigned>(ymd.day());
  if (rem == 0) {
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", y, mo, d);
  } else {
    auto hh = rem / kMsPerHour, mm = rem / 60'000 % 60, ss = rem / 1000 % 60, ms = rem % 1000;
    if (ms == 0) {
      std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02lld:%02lld:%02lld", y, mo, d, static_cast<long long>(hh),
                    static_cast<long long>(mm), static_cast<long long>(ss));
    } else {
      std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02lld:%02lld:%02lld.%03lld", y, mo, d,
                    static_cast<long long>(hh), static_cast<long long>(mm), static_cast<long long>(ss),
                    static_cast<long long>(ms));
    }
  }
  return buf;
}

}  // namespace relicl
