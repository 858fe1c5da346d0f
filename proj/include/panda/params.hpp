#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "panda/autodiff.hpp"

namespace panda {

/// Named parameter matrices in insertion order.
class ParamStore {
 public:
  Matrix& add(const std::string& name, Matrix value) {
    if (index_.count(name)) throw UsageError("duplicate parameter '" + name + "'");
    index_.emplace(name, entries_.size());
    entries_.push_back({name, std::move(value)});
    return entries_.back().value;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Matrix& at(const std::string& name) { return entries_[lookup(name)].value; }
  const Matrix& at(const std::string& name) const { return entries_[lookup(name)].value; }

  std::size_t size() const noexcept { return entries_.size(); }
  const std::string& name(std::size_t i) const { return entries_[i].name; }
  Matrix& value(std::size_t i) { return entries_[i].value; }
  const Matrix& value(std::size_t i) const { return entries_[i].value; }

  /// Same names and shapes, all zeros.
  ParamStore zeros_like() const {
    ParamStore out;
    for (const auto& e : entries_) out.add(e.name, Matrix::Zero(e.value.rows(), e.value.cols()));
    return out;
  }

  void set_zero() {
    for (auto& e : entries_) e.value.setZero();
  }

  /// Largest absolute entry over parameters whose name passes `pred`.
  template <typename Pred>
  double max_abs(Pred pred) const {
    double w = 0.0;
    for (const auto& e : entries_) {
      if (pred(e.name) && e.value.size() > 0) w = std::max(w, e.value.cwiseAbs().maxCoeff());
    }
    return w;
  }

 private:
  struct Entry {
    std::string name;
    Matrix value;
  };

  std::size_t lookup(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw UsageError("unknown parameter '" + name + "'");
    return it->second;
  }

  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Lazily places parameters on a tape as gradient-tracking leaves.
class ParamBinding {
 public:
  ParamBinding(ad::Tape& tape, const ParamStore& store) : tape_(&tape), store_(&store) {}

  ad::Tensor operator()(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    auto t = tape_->variable(store_->at(name));
    bound_.emplace(name, t);
    return t;
  }

  /// Uses an existing tape tensor for `name` instead of a fresh leaf.
  void bind(const std::string& name, const ad::Tensor& t) {
    if (!store_->contains(name)) throw UsageError("unknown parameter '" + name + "'");
    bound_.insert_or_assign(name, t);
  }

  ad::Tape& tape() { return *tape_; }
  const ParamStore& store() const { return *store_; }

  /// Adds the gradients of every bound parameter into `grads`.
  void accumulate_grads(ParamStore& grads) const {
    for (const auto& [name, t] : bound_) {
      if (tape_->has_grad(t.id())) grads.at(name) += tape_->grad(t.id());
    }
  }

 private:
  ad::Tape* tape_;
  const ParamStore* store_;
  std::unordered_map<std::string, ad::Tensor> bound_;
};

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamOptions {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  ParamStore m;
  ParamStore v;
  long step = 0;

  static AdamState for_params(const ParamStore& params) { return {params.zeros_like(), params.zeros_like(), 0}; }
};

/// One bias-corrected Adam update.
inline void adam_step(ParamStore& params, const ParamStore& grads, AdamState& state, const AdamOptions& opt = {}) {
  if (grads.size() != params.size() || state.m.size() != params.size()) {
    throw ShapeError("adam_step: parameter, gradient and state counts differ");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params.value(i);
    const auto& g = grads.value(i);
    if (g.rows() != p.rows() || g.cols() != p.cols()) {
      throw ShapeError("adam_step: gradient for '" + params.name(i) + "' is " + shape_str(g.rows(), g.cols()) +
                       ", parameter is " + shape_str(p.rows(), p.cols()));
    }
    auto& m = state.m.value(i);
    auto& v = state.v.value(i);
    m = opt.beta1 * m + (1.0 - opt.beta1) * g;
    v = opt.beta2 * v + (1.0 - opt.beta2) * g.cwiseProduct(g);
    p.array() -= opt.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + opt.eps);
  }
}

inline Matrix glorot_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix w(rows, cols);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-a, a);
  return w;
}

}  // namespace panda
