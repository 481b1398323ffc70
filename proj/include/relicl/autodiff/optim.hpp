#pragma once

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "relicl/autodiff/tensor.hpp"
#include "relicl/core/random.hpp"

namespace relicl::ad {

/// Named trainable tensors in insertion order, with Adam moments.
template <class T>
class ParamStore {
 public:
  Tensor<T> add(const std::string& name, Shape shape, std::vector<T> values) {
    if (index_.count(name)) throw Error("duplicate parameter '" + name + "'");
    index_[name] = names_.size();
    names_.push_back(name);
    params_.push_back(Tensor<T>::from(std::move(shape), std::move(values), true));
    m_.emplace_back(params_.back().size(), T(0));
    v_.emplace_back(params_.back().size(), T(0));
    return params_.back();
  }
  /// Normal(0, stddev) initialization from `rng`.
  Tensor<T> add_normal(const std::string& name, Shape shape, Rng& rng, double stddev) {
    std::vector<T> v(numel(shape));
    for (auto& x : v) x = static_cast<T>(rng.normal() * stddev);
    return add(name, std::move(shape), std::move(v));
  }
  Tensor<T> add_const(const std::string& name, Shape shape, T value) {
    return add(name, shape, std::vector<T>(numel(shape), value));
  }

  Tensor<T>& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("unknown parameter '" + name + "'");
    return params_[it->second];
  }
  const Tensor<T>& get(const std::string& name) const { return const_cast<ParamStore*>(this)->get(name); }
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::size_t size() const { return params_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  std::vector<Tensor<T>>& tensors() { return params_; }
  const std::vector<Tensor<T>>& tensors() const { return params_; }
  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  double grad_norm() const {
    double s = 0;
    for (const auto& p : params_)
      for (T g : p.node_ptr()->grad) s += static_cast<double>(g) * static_cast<double>(g);
    return std::sqrt(s);
  }

  std::size_t step() const { return step_; }
  void set_step(std::size_t s) { step_ = s; }
  std::vector<T>& first_moment(std::size_t i) { return m_[i]; }
  std::vector<T>& second_moment(std::size_t i) { return v_[i]; }
  const std::vector<T>& first_moment(std::size_t i) const { return m_[i]; }
  const std::vector<T>& second_moment(std::size_t i) const { return v_[i]; }

  void bump_step() { ++step_; }

 private:
  std::vector<std::string> names_;
  std::map<std::string, std::size_t> index_;
  std::vector<Tensor<T>> params_;
  std::vector<std::vector<T>> m_, v_;
  std::size_t step_ = 0;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 0.0;  // global gradient-norm clip, 0 = off
};

/// One Adam update with bias correction. Parameters without gradient are
/// treated as having zero gradient.
template <class T>
void adam_step(ParamStore<T>& store, const AdamConfig& cfg) {
  store.bump_step();
  const double t = static_cast<double>(store.step());
  const double bc1 = 1.0 - std::pow(cfg.beta1, t), bc2 = 1.0 - std::pow(cfg.beta2, t);
  double clip = 1.0;
  if (cfg.clip_norm > 0) {
    const double norm = store.grad_norm();
    if (norm > cfg.clip_norm) clip = cfg.clip_norm / norm;
  }
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto& p = store.tensors()[i];
    const auto& g = p.node_ptr()->grad;
    auto& m = store.first_moment(i);
    auto& v = store.second_moment(i);
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = g.empty() ? 0.0 : static_cast<double>(g[j]) * clip;
      m[j] = static_cast<T>(cfg.beta1 * m[j] + (1 - cfg.beta1) * gj);
      v[j] = static_cast<T>(cfg.beta2 * v[j] + (1 - cfg.beta2) * gj * gj);
      const double mhat = m[j] / bc1, vhat = v[j] / bc2;
      p.value()[j] = static_cast<T>(p.value()[j] - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

namespace checkpoint_detail {

inline constexpr char kMagic[4] = {'R', 'L', 'C', 'K'};

template <class U>
void put(std::string& buf, U v) {
  char b[sizeof(U)];
  std::memcpy(b, &v, sizeof(U));  // little-endian hosts only
  buf.append(b, sizeof(U));
}

}  // namespace checkpoint_detail

/// Writes parameters, Adam state and a JSON manifest to one file:
/// "RLCK", u64 manifest length, manifest JSON, then raw little-endian
/// float64 values of every tensor (values, first moment, second moment).
template <class T>
void save_checkpoint(const ParamStore<T>& store, const nlohmann::json& manifest, const std::string& path) {
  nlohmann::json m = manifest;
  m["step"] = store.step();
  m["dtype"] = "float64";
  nlohmann::json tensors = nlohmann::json::array();
  for (std::size_t i = 0; i < store.size(); ++i)
    tensors.push_back({{"name", store.names()[i]}, {"shape", store.tensors()[i].shape()}});
  m["tensors"] = tensors;
  std::string header = m.dump();
  std::string buf(checkpoint_detail::kMagic, 4);
  checkpoint_detail::put<std::uint64_t>(buf, header.size());
  buf += header;
  for (std::size_t i = 0; i < store.size(); ++i) {
    for (T x : store.tensors()[i].value()) checkpoint_detail::put<double>(buf, static_cast<double>(x));
    for (T x : store.first_moment(i)) checkpoint_detail::put<double>(buf, static_cast<double>(x));
    for (T x : store.second_moment(i)) checkpoint_detail::put<double>(buf, static_cast<double>(x));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint '" + path + "'");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error("failed writing checkpoint '" + path + "'");
}

inline nlohmann::json read_checkpoint_manifest(const std::string& path, std::string* payload = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint '" + path + "'");
  std::string buf((std::istreambuf_iterator<char>(in)), {});
  if (buf.size() < 12 || std::memcmp(buf.data(), checkpoint_detail::kMagic, 4) != 0)
    throw InputError("'" + path + "' is not a checkpoint");
  std::uint64_t len = 0;
  std::memcpy(&len, buf.data() + 4, 8);
  if (12 + len > buf.size()) throw InputError("checkpoint '" + path + "' is truncated");
  auto manifest = nlohmann::json::parse(buf.substr(12, len));
  if (payload) *payload = buf.substr(12 + len);
  return manifest;
}

/// Loads values and optimizer state into an existing store with the same
/// parameter names and shapes. Returns the manifest.
template <class T>
nlohmann::json load_checkpoint(ParamStore<T>& store, const std::string& path) {
  std::string payload;
  auto manifest = read_checkpoint_manifest(path, &payload);
  const auto& tensors = manifest.at("tensors");
  if (tensors.size() != store.size())
    throw InputError("checkpoint has " + std::to_string(tensors.size()) + " tensors, model expects " +
                     std::to_string(store.size()));
  std::size_t off = 0;
  auto read = [&](std::vector<T>& dst) {
    if (off + dst.size() * 8 > payload.size()) throw InputError("checkpoint '" + path + "' is truncated");
    for (auto& x : dst) {
      double v;
      std::memcpy(&v, payload.data() + off, 8);
      off += 8;
      x = static_cast<T>(v);
    }
  };
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& t = tensors[i];
    if (t.at("name").get<std::string>() != store.names()[i] || t.at("shape").get<Shape>() != store.tensors()[i].shape())
      throw InputError("checkpoint tensor '" + t.at("name").get<std::string>() + "' does not match model parameter '" +
                       store.names()[i] + "'");
    read(store.tensors()[i].value());
    read(store.first_moment(i));
    read(store.second_moment(i));
  }
  store.set_step(manifest.at("step").get<std::size_t>());
  return manifest;
}

}  // namespace relicl::ad
