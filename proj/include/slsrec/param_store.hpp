#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "slsrec/autodiff.hpp"
#include "slsrec/error.hpp"

namespace slsrec::ad {

// Named trainable matrices in insertion order. Parameter addresses are stable
// for the lifetime of the store, so tapes may hold pointers into it.
template <typename Scalar>
class ParamStore {
 public:
  using Mat = Matrix<Scalar>;

  ParamStore() = default;
  ParamStore(ParamStore&&) noexcept = default;
  ParamStore& operator=(ParamStore&&) noexcept = default;

  ParamStore(const ParamStore& other) { copy_from(other); }
  ParamStore& operator=(const ParamStore& other) {
    if (this != &other) copy_from(other);
    return *this;
  }

  Parameter<Scalar>& add(const std::string& name, Mat value) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    index_.emplace(name, params_.size());
    params_.push_back(std::make_unique<Parameter<Scalar>>(name, std::move(value)));
    return *params_.back();
  }

  bool contains(std::string_view name) const { return index_.find(std::string(name)) != index_.end(); }

  Parameter<Scalar>& get(std::string_view name) { return *params_.at(lookup(name)); }
  const Parameter<Scalar>& get(std::string_view name) const { return *params_.at(lookup(name)); }

  std::size_t size() const { return params_.size(); }
  Parameter<Scalar>& operator[](std::size_t i) { return *params_[i]; }
  const Parameter<Scalar>& operator[](std::size_t i) const { return *params_[i]; }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

  std::size_t coefficient_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
    return n;
  }

  bool gradients_finite() const {
    for (const auto& p : params_) {
      if (!p->grad.allFinite()) return false;
    }
    return true;
  }

 private:
  std::size_t lookup(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw ConfigError("unknown parameter: " + std::string(name));
    return it->second;
  }

  void copy_from(const ParamStore& other) {
    params_.clear();
    index_ = other.index_;
    for (const auto& p : other.params_) params_.push_back(std::make_unique<Parameter<Scalar>>(*p));
  }

  std::vector<std::unique_ptr<Parameter<Scalar>>> params_;
  std::map<std::string, std::size_t> index_;
};

// Entries uniform in [-bound, bound].
template <typename Scalar, typename Rng>
Matrix<Scalar> uniform_matrix(Eigen::Index rows, Eigen::Index cols, Scalar bound, Rng& rng) {
  std::uniform_real_distribution<Scalar> dist(-bound, bound);
  Matrix<Scalar> m(rows, cols);
  // Row-major fill so results do not depend on Eigen's storage order.
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = dist(rng);
  return m;
}

template <typename Scalar>
struct AdamConfig {
  Scalar lr = Scalar(1e-3);
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar eps = Scalar(1e-8);
};

template <typename Scalar>
struct AdamState {
  std::vector<Matrix<Scalar>> m;
  std::vector<Matrix<Scalar>> v;
  long skipped_steps = 0;
};

// One bias-corrected Adam update at step t (t >= 1). Gradients are zeroed
// afterwards. Returns false, leaving parameters untouched, when any gradient
// is non-finite.
template <typename Scalar>
bool adam_step(ParamStore<Scalar>& params, AdamState<Scalar>& state, const AdamConfig<Scalar>& cfg, long t) {
  if (t < 1) throw ContractViolation("adam_step: step counter must be >= 1");
  if (state.m.size() != params.size()) {
    state.m.clear();
    state.v.clear();
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m.push_back(Matrix<Scalar>::Zero(params[i].value.rows(), params[i].value.cols()));
      state.v.push_back(Matrix<Scalar>::Zero(params[i].value.rows(), params[i].value.cols()));
    }
  }
  if (!params.gradients_finite()) {
    ++state.skipped_steps;
    params.zero_grad();
    return false;
  }
  const Scalar c1 = Scalar(1) - std::pow(cfg.beta1, Scalar(t));
  const Scalar c2 = Scalar(1) - std::pow(cfg.beta2, Scalar(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    m = cfg.beta1 * m + (Scalar(1) - cfg.beta1) * p.grad;
    v = cfg.beta2 * v + (Scalar(1) - cfg.beta2) * p.grad.cwiseAbs2();
    p.value.array() -= cfg.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.eps);
    p.grad.setZero();
  }
  return true;
}

}  // namespace slsrec::ad
