#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "wcdiff/rng.hpp"
#include "wcdiff/tensor.hpp"

namespace wcdiff {

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;
  // Adam state, allocated lazily on the first optimizer step.
  Tensor m, v;
  std::int64_t adam_steps = 0;

  bool has_adam_state() const { return m.size() > 0; }
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Named parameter registry. std::map keeps iteration order deterministic,
// which fixes gradient-reduction order, checksum order, and file layout.
class ParamStore {
 public:
  // Returns the existing entry when the name is already present (shape
  // checked), otherwise registers a new one initialized via `init`.
  template <typename Init>
  Param& bind(const std::string& name, TensorShape shape, Init&& init) {
    auto it = params_.find(name);
    if (it != params_.end()) {
      if (it->second->value.shape() != shape)
        throw ShapeError("parameter " + name + " bound with shape " + shape.str() +
                         " but stored as " + it->second->value.shape().str());
      return *it->second;
    }
    auto p = std::make_unique<Param>();
    p->name = name;
    p->value = Tensor(shape);
    init(p->value);
    p->grad = Tensor(shape);
    auto& ref = *p;
    params_.emplace(name, std::move(p));
    return ref;
  }

  Param& bind_zero(const std::string& name, TensorShape shape) {
    return bind(name, shape, [](Tensor&) {});
  }

  bool contains(const std::string& name) const { return params_.count(name) > 0; }

  Param& at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw StateError("unknown parameter: " + name);
    return *it->second;
  }
  const Param& at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw StateError("unknown parameter: " + name);
    return *it->second;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& [k, v] : params_) out.push_back(k);
    return out;
  }
  std::size_t size() const { return params_.size(); }

  template <typename Fn>
  void for_each(Fn&& fn) {
    for (auto& [k, v] : params_) fn(*v);
  }
  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (const auto& [k, v] : params_) fn(const_cast<const Param&>(*v));
  }

  void zero_grads() {
    for (auto& [k, v] : params_) v->grad.data().setZero();
  }
  void freeze_all() {
    for (auto& [k, v] : params_) v->trainable = false;
  }
  void scale_grads(double s) {
    for (auto& [k, v] : params_)
      if (v->trainable) v->grad.data() *= s;
  }

  std::int64_t parameter_count() const {
    std::int64_t n = 0;
    for (const auto& [k, v] : params_) n += v->value.size();
    return n;
  }

  // FNV-1a over sorted names and raw value bytes; detects any mutation of the
  // stored values, which is how freeze contracts are enforced.
  std::uint64_t checksum() const {
    Fnv1a h;
    for (const auto& [k, v] : params_) {
      h.update(k.data(), k.size());
      const auto& a = v->value.data();
      h.update(a.data(), static_cast<std::size_t>(a.size()) * sizeof(double));
    }
    return h.digest();
  }

  // Standard Adam with bias correction. Frozen entries are skipped entirely.
  void adam_step(const AdamConfig& cfg) {
    for (auto& [k, p] : params_) {
      if (!p->trainable) continue;
      if (p->grad.size() != p->value.size())
        throw StateError("adam_step: grad not allocated for " + p->name);
      if (!p->grad.data().allFinite())
        throw NumericError("adam_step: non-finite gradient in " + p->name);
      if (!p->has_adam_state()) {
        p->m = Tensor(p->value.shape());
        p->v = Tensor(p->value.shape());
      }
      p->adam_steps += 1;
      const double t = double(p->adam_steps);
      p->m.data() = cfg.beta1 * p->m.data() + (1.0 - cfg.beta1) * p->grad.data();
      p->v.data() = cfg.beta2 * p->v.data() + (1.0 - cfg.beta2) * p->grad.data().square();
      const double bc1 = 1.0 - std::pow(cfg.beta1, t);
      const double bc2 = 1.0 - std::pow(cfg.beta2, t);
      p->value.data() -=
          cfg.lr * (p->m.data() / bc1) / ((p->v.data() / bc2).sqrt() + cfg.eps);
    }
  }

 private:
  std::map<std::string, std::unique_ptr<Param>> params_;
};

// He-style fan-in scaled normal init, deterministic per (rng, parameter).
inline void init_normal(Tensor& t, const Rng& rng, double stddev) {
  auto& a = t.data();
  for (std::int64_t i = 0; i < a.size(); ++i)
    a[i] = stddev * rng.normal(static_cast<std::uint64_t>(i));
}

}  // namespace wcdiff
