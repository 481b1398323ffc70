#pragma once

#include <string>
#include <string_view>

#include <json.hpp>

#include "relicl/core/error.hpp"

namespace relicl::model {

struct ModelConfig {
  std::string run_mode = "fast";
  std::size_t d = 64;
  std::size_t heads = 4;
  std::size_t table_blocks = 2;
  std::size_t graph_blocks = 2;
  std::size_t cross_blocks = 2;
  std::size_t hash_dim = 32;        // width of hashed value/name vectors
  std::size_t table_inducing = 4;   // inducing points per column group
  std::size_t cross_inducing = 8;   // inducing points over context examples
  std::size_t max_hops = 8;
  std::size_t flat_class_limit = 32;  // hierarchical head above this many classes
  std::size_t context_budget = 1000;

  void validate() const {
    if (d == 0 || heads == 0 || d % heads != 0) throw InputError("embed dim must be divisible by heads");
    if (table_blocks == 0 || graph_blocks == 0 || cross_blocks == 0) throw InputError("block counts must be >= 1");
    if (hash_dim == 0 || table_inducing == 0 || cross_inducing == 0) throw InputError("widths must be >= 1");
  }

  nlohmann::json to_json() const {
    return {{"run_mode", run_mode},       {"d", d},
            {"heads", heads},             {"table_blocks", table_blocks},
            {"graph_blocks", graph_blocks}, {"cross_blocks", cross_blocks},
            {"hash_dim", hash_dim},       {"table_inducing", table_inducing},
            {"cross_inducing", cross_inducing}, {"max_hops", max_hops},
            {"flat_class_limit", flat_class_limit}, {"context_budget", context_budget}};
  }

  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.run_mode = j.value("run_mode", c.run_mode);
    c.d = j.value("d", c.d);
    c.heads = j.value("heads", c.heads);
    c.table_blocks = j.value("table_blocks", c.table_blocks);
    c.graph_blocks = j.value("graph_blocks", c.graph_blocks);
    c.cross_blocks = j.value("cross_blocks", c.cross_blocks);
    c.hash_dim = j.value("hash_dim", c.hash_dim);
    c.table_inducing = j.value("table_inducing", c.table_inducing);
    c.cross_inducing = j.value("cross_inducing", c.cross_inducing);
    c.max_hops = j.value("max_hops", c.max_hops);
    c.flat_class_limit = j.value("flat_class_limit", c.flat_class_limit);
    c.context_budget = j.value("context_budget", c.context_budget);
    c.validate();
    return c;
  }
};

/// fast | normal | best follow the run_mode knob; toy is the desk-scale
/// configuration used for pre-training in tests.
inline ModelConfig preset(std::string_view mode) {
  ModelConfig c;
  c.run_mode = std::string(mode);
  if (mode == "fast") {
    c.d = 64, c.table_blocks = c.graph_blocks = c.cross_blocks = 2, c.context_budget = 1000;
  } else if (mode == "normal") {
    c.d = 128, c.table_blocks = c.graph_blocks = c.cross_blocks = 3, c.context_budget = 2000;
  } else if (mode == "best") {
    c.d = 128, c.table_blocks = c.graph_blocks = c.cross_blocks = 4, c.context_budget = 5000;
  } else if (mode == "toy") {
    c.d = 32, c.heads = 4, c.hash_dim = 16, c.table_blocks = c.graph_blocks = c.cross_blocks = 2;
    c.context_budget = 1000;
  } else {
    throw InputError("unknown run_mode '" + std::string(mode) + "' (expected fast, normal, best or toy)");
  }
  return c;
}

}  // namespace relicl::model
