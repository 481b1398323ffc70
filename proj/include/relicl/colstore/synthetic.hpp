#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

#include "relicl/colstore/adjacency.hpp"
#include "relicl/core/random.hpp"

namespace relicl {

/// Two-table store for benchmarks: `entities` users and `edges` timestamped
/// events, each event linked to a uniformly drawn user. Columns are built
/// directly, without going through CSV text.
inline Store make_synthetic_store(std::size_t entities, std::size_t edges, std::uint64_t seed) {
  if (entities == 0) throw InputError("synthetic store needs at least one entity");
  Rng rng(hash_combine(seed, 0x5e7));
  std::vector<std::optional<std::string>> ids(entities);
  for (std::size_t i = 0; i < entities; ++i) ids[i] = "u" + std::to_string(i);
  TableData users;
  users.rows = entities;
  users.columns.push_back(make_dictionary_column("user_id", SemanticType::kIdentifier, ids));

  TableData events;
  events.rows = edges;
  Column fk;
  fk.name = "user_id";
  fk.stype = SemanticType::kIdentifier;
  fk.dict = users.columns[0].dict;  // code i names user i
  std::vector<std::uint32_t> codes(edges);
  std::vector<Timestamp> times(edges);
  const Timestamp start = 1735689600000;  // 2025-01-01
  for (std::size_t e = 0; e < edges; ++e) {
    codes[e] = static_cast<std::uint32_t>(rng.below(entities));
    times[e] = start + static_cast<Timestamp>(rng.below(365 * 24 * 3600)) * 1000;
  }
  fk.codes = Array<std::uint32_t>(std::move(codes));
  fk.nulls = Array<std::uint8_t>(std::vector<std::uint8_t>((edges + 7) / 8, 0));
  events.columns.push_back(std::move(fk));
  events.columns.push_back(make_timestamp_column("event_time", times));

  Schema schema;
  schema.tables.push_back({"users", {{"user_id", SemanticType::kIdentifier}}, "user_id", std::nullopt, {}});
  schema.tables.push_back({"events",
                           {{"user_id", SemanticType::kIdentifier}, {"event_time", SemanticType::kTimestamp}},
                           std::nullopt,
                           "event_time",
                           {}});
  schema.links.push_back({"events", "user_id", "users"});
  std::vector<TableData> data;
  data.push_back(std::move(users));
  data.push_back(std::move(events));
  return make_store(build_graph(schema, std::move(data)));
}

struct LookupBench {
  std::size_t lookups = 0;
  std::size_t neighbors = 0;  // total neighbors returned
  std::uint64_t checksum = 0; // hash of every returned neighbor id, deterministic per seed
  double seconds = 0;
  double lookups_per_sec = 0;
};

/// Times `lookups` random neighbors_before calls (user -> events, at most
/// `k` neighbors each) on one thread. Query draws happen before timing.
inline LookupBench bench_lookups(const Store& s, std::size_t lookups, std::size_t k, std::uint64_t seed) {
  const auto types = s.index.edge_types_from(0);
  if (types.empty()) throw InputError("store has no edges out of its first table");
  const std::size_t e = types.front();
  const auto rows = s.graph.table(0).rows;
  auto [lo, hi] = s.graph.time_range();
  if (lo == kPosInf) lo = hi = 0;
  Rng rng(hash_combine(seed, 0xbe7c));
  std::vector<std::uint32_t> qr(lookups);
  std::vector<Timestamp> qt(lookups);
  for (std::size_t i = 0; i < lookups; ++i) {
    qr[i] = static_cast<std::uint32_t>(rng.below(rows));
    qt[i] = lo + static_cast<Timestamp>(rng.uniform() * static_cast<double>(hi - lo));
  }
  LookupBench b;
  b.lookups = lookups;
  std::vector<std::uint32_t> out;
  out.reserve(k);
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < lookups; ++i) {
    out.clear();
    s.index.neighbors_before(qr[i], e, qt[i], k, out);
    b.neighbors += out.size();
    for (auto n : out) b.checksum = b.checksum * 1099511628211ull + n + 1;
  }
  b.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  b.lookups_per_sec = b.seconds > 0 ? static_cast<double>(lookups) / b.seconds : 0.0;
  return b;
}

}  // namespace relicl
