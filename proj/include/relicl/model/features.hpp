#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "relicl/core/random.hpp"
#include "relicl/core/time.hpp"

namespace relicl::model {

inline constexpr std::size_t kNumFeats = 3;
inline constexpr std::size_t kTimeFeats = 4;

/// Fixed pseudo-random unit-variance vectors keyed by a hash.
class HashVectors {
 public:
  explicit HashVectors(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const { return dim_; }

  const std::vector<double>& get(std::uint64_t h) {
    auto it = cache_.find(h);
    if (it != cache_.end()) return it->second;
    std::vector<double> v(dim_);
    Rng rng(h);
    for (auto& x : v) x = rng.normal();
    return cache_.emplace(h, std::move(v)).first->second;
  }

  std::uint64_t key(std::string_view s, std::uint64_t salt) const { return hash_combine(salt, hash_string(s)); }

 private:
  std::size_t dim_;
  std::unordered_map<std::uint64_t, std::vector<double>> cache_;
};

/// (sign, log-magnitude, clipped raw) of a normalized value.
inline void numeric_features(double z, double* out) {
  out[0] = z > 0 ? 1.0 : (z < 0 ? -1.0 : 0.0);
  out[1] = std::log1p(std::abs(z));
  out[2] = std::clamp(z, -3.0, 3.0);
}

/// Relative-time features of a timestamp seen from an anchor.
inline void time_features(Timestamp anchor, Timestamp t, double* out) {
  const double days = static_cast<double>(anchor - t) / static_cast<double>(kMsPerDay);
  out[0] = days > 0 ? 1.0 : (days < 0 ? -1.0 : 0.0);
  out[1] = std::log1p(std::abs(days)) / 4.0;
  const double phase = 2 * std::numbers::pi * static_cast<double>(t) / static_cast<double>(7 * kMsPerDay);
  out[2] = std::sin(phase);
  out[3] = std::cos(phase);
}

/// Lower-cased alphanumeric words of a text cell.
inline std::vector<std::string> words(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace relicl::model
