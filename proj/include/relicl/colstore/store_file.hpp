#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <json.hpp>

#include "relicl/colstore/adjacency.hpp"
#include "relicl/colstore/column.hpp"
#include "relicl/core/error.hpp"
#include "relicl/relgraph/graph.hpp"
#include "relicl/relgraph/schema.hpp"

// Binary store layout (little-endian):
//
//   [0, 64)   header: "RLCT" | u32 version | u64 section count |
//             u64 section-table offset | u64 file size | zero padding
//   section table: per section a 64-byte zero-padded name, u64 offset,
//             u64 length (80 bytes per entry)
//   sections: each starts on a 64-byte boundary, zero padded in between
//
// Section "meta" is a JSON document (schema, per-column dictionary sizes,
// edge types, dangling counts). Every other section is a raw array that is
// mapped in place on load.

namespace relicl {

static_assert(std::endian::native == std::endian::little, "store format assumes a little-endian host");

inline constexpr char kStoreMagic[4] = {'R', 'L', 'C', 'T'};
inline constexpr std::uint32_t kStoreVersion = 1;
inline constexpr std::size_t kStoreAlign = 64;
inline constexpr std::size_t kSectionNameBytes = 64;
inline constexpr std::size_t kSectionEntryBytes = kSectionNameBytes + 16;

namespace store_detail {

struct Section {
  std::string name;
  const void* data;
  std::size_t length;
  std::string owned;  // used for the meta document
};

inline std::size_t align_up(std::size_t x) { return (x + kStoreAlign - 1) / kStoreAlign * kStoreAlign; }

template <class T>
Section array_section(std::string name, const Array<T>& a) {
  return {std::move(name), a.data(), a.byte_size(), {}};
}

class Mapping {
 public:
  explicit Mapping(const std::string& path) {
    int fd = ::open(path.c_str(), O_RDONLY);
    if (fd < 0) throw StoreError("cannot open store '" + path + "'");
    struct stat st {};
    if (::fstat(fd, &st) != 0) {
      ::close(fd);
      throw StoreError("cannot stat store '" + path + "'");
    }
    size_ = static_cast<std::size_t>(st.st_size);
    if (size_ > 0) {
      void* p = ::mmap(nullptr, size_, PROT_READ, MAP_PRIVATE, fd, 0);
      if (p == MAP_FAILED) {
        ::close(fd);
        throw StoreError("cannot map store '" + path + "'");
      }
      data_ = static_cast<const std::uint8_t*>(p);
    }
    ::close(fd);
  }
  ~Mapping() {
    if (data_) ::munmap(const_cast<std::uint8_t*>(data_), size_);
  }
  Mapping(const Mapping&) = delete;
  Mapping& operator=(const Mapping&) = delete;

  const std::uint8_t* data() const noexcept { return data_; }
  std::size_t size() const noexcept { return size_; }

 private:
  const std::uint8_t* data_ = nullptr;
  std::size_t size_ = 0;
};

template <class T>
T read_le(const std::uint8_t* p) {
  T v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

}  // namespace store_detail

inline void save_store(const Store& store, const std::string& path) {
  using namespace store_detail;
  const auto& graph = store.graph;
  nlohmann::json meta;
  meta["schema"] = schema_to_json(graph.schema());
  nlohmann::json tables = nlohmann::json::array();
  std::vector<Section> sections;
  sections.push_back({"meta", nullptr, 0, {}});
  for (std::size_t t = 0; t < graph.num_tables(); ++t) {
    const auto& data = graph.table(t);
    nlohmann::json cols = nlohmann::json::array();
    for (std::size_t c = 0; c < data.columns.size(); ++c) {
      const auto& col = data.columns[c];
      cols.push_back({{"name", col.name}, {"stype", to_string(col.stype)}});
      std::string prefix = "t" + std::to_string(t) + ".c" + std::to_string(c) + ".";
      switch (col.stype) {
        case SemanticType::kNumerical: sections.push_back(array_section(prefix + "values", col.numbers)); break;
        case SemanticType::kTimestamp: sections.push_back(array_section(prefix + "values", col.times)); break;
        default:
          sections.push_back(array_section(prefix + "values", col.codes));
          sections.push_back(array_section(prefix + "dict_offsets", col.dict.offsets));
          sections.push_back(array_section(prefix + "dict_bytes", col.dict.bytes));
      }
      sections.push_back(array_section(prefix + "nulls", col.nulls));
    }
    tables.push_back({{"rows", data.rows}, {"columns", cols}});
  }
  meta["tables"] = tables;
  nlohmann::json edges = nlohmann::json::array();
  for (std::size_t e = 0; e < store.index.num_edge_types(); ++e) {
    const auto& et = store.index.edge_type(e);
    edges.push_back({{"link", et.link},
                     {"reverse", et.reverse},
                     {"src_table", et.src_table},
                     {"dst_table", et.dst_table},
                     {"name", et.name}});
    std::string prefix = "e" + std::to_string(e) + ".";
    const auto& c = store.index.csr(e);
    sections.push_back(array_section(prefix + "offsets", c.offsets));
    sections.push_back(array_section(prefix + "neighbors", c.neighbors));
    sections.push_back(array_section(prefix + "times", c.times));
  }
  meta["edge_types"] = edges;
  meta["dangling"] = store.index.dangling();
  sections[0].owned = meta.dump();
  sections[0].data = sections[0].owned.data();
  sections[0].length = sections[0].owned.size();

  const std::size_t table_offset = kStoreAlign;
  std::size_t cursor = align_up(table_offset + sections.size() * kSectionEntryBytes);
  std::vector<std::size_t> offsets;
  for (const auto& s : sections) {
    offsets.push_back(cursor);
    cursor = align_up(cursor + s.length);
  }
  const std::size_t file_size = cursor;
  std::vector<std::uint8_t> buf(file_size, 0);
  auto put = [&](std::size_t at, const void* p, std::size_t n) {
    if (n) std::memcpy(buf.data() + at, p, n);
  };
  put(0, kStoreMagic, 4);
  put(4, &kStoreVersion, 4);
  std::uint64_t count = sections.size(), toff = table_offset, fsize = file_size;
  put(8, &count, 8);
  put(16, &toff, 8);
  put(24, &fsize, 8);
  for (std::size_t i = 0; i < sections.size(); ++i) {
    std::size_t at = table_offset + i * kSectionEntryBytes;
    if (sections[i].name.size() >= kSectionNameBytes) throw StoreError("section name too long: " + sections[i].name);
    put(at, sections[i].name.data(), sections[i].name.size());
    std::uint64_t off = offsets[i], len = sections[i].length;
    put(at + kSectionNameBytes, &off, 8);
    put(at + kSectionNameBytes + 8, &len, 8);
    put(offsets[i], sections[i].data, sections[i].length);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw StoreError("cannot write store '" + path + "'");
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw StoreError("failed writing store '" + path + "'");
}

/// Maps a store file. Arrays point straight into the mapping; only the
/// header, the section table and the small meta document are parsed.
inline Store load_store(const std::string& path) {
  using namespace store_detail;
  auto mapping = std::make_shared<const Mapping>(path);
  const std::uint8_t* base = mapping->data();
  const std::size_t size = mapping->size();
  if (size < kStoreAlign) throw StoreError("truncated store '" + path + "': missing header");
  if (std::memcmp(base, kStoreMagic, 4) != 0)
    throw StoreError("bad magic in '" + path + "': expected \"RLCT\", found \"" +
                     std::string(reinterpret_cast<const char*>(base), 4) + "\"");
  auto version = read_le<std::uint32_t>(base + 4);
  if (version != kStoreVersion)
    throw StoreError("store version mismatch: file has " + std::to_string(version) + ", expected " +
                     std::to_string(kStoreVersion));
  auto count = read_le<std::uint64_t>(base + 8);
  auto toff = read_le<std::uint64_t>(base + 16);
  auto fsize = read_le<std::uint64_t>(base + 24);
  if (fsize != size) throw StoreError("truncated store '" + path + "': header says " + std::to_string(fsize) + " bytes, file has " + std::to_string(size));
  if (toff + count * kSectionEntryBytes > size) throw StoreError("truncated store '" + path + "': section table");
  std::unordered_map<std::string, std::pair<std::uint64_t, std::uint64_t>> index;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint8_t* e = base + toff + i * kSectionEntryBytes;
    std::string name(reinterpret_cast<const char*>(e), strnlen(reinterpret_cast<const char*>(e), kSectionNameBytes));
    auto off = read_le<std::uint64_t>(e + kSectionNameBytes);
    auto len = read_le<std::uint64_t>(e + kSectionNameBytes + 8);
    if (off > size || len > size - off) throw StoreError("truncated section '" + name + "' in '" + path + "'");
    index[name] = {off, len};
  }
  auto section = [&](const std::string& name) {
    auto it = index.find(name);
    if (it == index.end()) throw StoreError("missing section '" + name + "' in '" + path + "'");
    return it->second;
  };
  auto array = [&]<class T>(const std::string& name, std::size_t expected) {
    auto [off, len] = section(name);
    if (len % sizeof(T) != 0 || len / sizeof(T) != expected)
      throw StoreError("section '" + name + "' has " + std::to_string(len) + " bytes, expected " +
                       std::to_string(expected * sizeof(T)));
    return Array<T>(mapping, reinterpret_cast<const T*>(base + off), expected);
  };
  auto [moff, mlen] = section("meta");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(base + moff, base + moff + mlen);
  } catch (const nlohmann::json::exception& ex) {
    throw StoreError(std::string("corrupt meta section: ") + ex.what());
  }
  Schema schema = schema_from_json(meta.at("schema"));
  std::vector<TableData> tables;
  for (std::size_t t = 0; t < meta["tables"].size(); ++t) {
    const auto& jt = meta["tables"][t];
    TableData data;
    data.rows = jt.at("rows").get<std::size_t>();
    for (std::size_t c = 0; c < jt["columns"].size(); ++c) {
      Column col;
      col.name = jt["columns"][c]["name"].get<std::string>();
      col.stype = parse_stype(jt["columns"][c]["stype"].get<std::string>());
      std::string prefix = "t" + std::to_string(t) + ".c" + std::to_string(c) + ".";
      switch (col.stype) {
        case SemanticType::kNumerical: col.numbers = array.template operator()<double>(prefix + "values", data.rows); break;
        case SemanticType::kTimestamp: col.times = array.template operator()<Timestamp>(prefix + "values", data.rows); break;
        default: {
          col.codes = array.template operator()<std::uint32_t>(prefix + "values", data.rows);
          auto [ooff, olen] = section(prefix + "dict_offsets");
          col.dict.offsets = array.template operator()<std::uint64_t>(prefix + "dict_offsets", olen / 8);
          auto [boff, blen] = section(prefix + "dict_bytes");
          col.dict.bytes = array.template operator()<char>(prefix + "dict_bytes", blen);
          (void)ooff;
          (void)boff;
        }
      }
      col.nulls = array.template operator()<std::uint8_t>(prefix + "nulls", (data.rows + 7) / 8);
      data.columns.push_back(std::move(col));
    }
    tables.push_back(std::move(data));
  }
  TemporalGraph graph(schema, std::move(tables));
  std::vector<EdgeType> types;
  std::vector<Csr> csr;
  for (std::size_t e = 0; e < meta["edge_types"].size(); ++e) {
    const auto& je = meta["edge_types"][e];
    EdgeType et{je.at("link").get<std::uint32_t>(), je.at("reverse").get<bool>(), je.at("src_table").get<std::uint32_t>(),
                je.at("dst_table").get<std::uint32_t>(), je.at("name").get<std::string>()};
    std::string prefix = "e" + std::to_string(e) + ".";
    Csr c;
    c.offsets = array.template operator()<std::uint64_t>(prefix + "offsets", graph.table(et.src_table).rows + 1);
    auto edges = c.offsets[c.offsets.size() - 1];
    c.neighbors = array.template operator()<std::uint32_t>(prefix + "neighbors", edges);
    c.times = array.template operator()<Timestamp>(prefix + "times", edges);
    types.push_back(std::move(et));
    csr.push_back(std::move(c));
  }
  auto dangling = meta.at("dangling").get<std::vector<std::size_t>>();
  return {std::move(graph), AdjacencyIndex(std::move(types), std::move(csr), std::move(dangling))};
}

}  // namespace relicl
