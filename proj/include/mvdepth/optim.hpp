// Parameter registry and Adam. Parameters are persistent tensors owned by a
// ParamStore; each training step attaches them to a fresh tape as leaves, and
// adam_step reads the leaf gradients and updates the persistent buffers in
// place.
#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <stdexcept>
#include <string>

#include "mvdepth/random.hpp"
#include "mvdepth/tensor.hpp"

namespace mvdepth {

template <typename S>
struct AdamConfig {
  S lr = S(3e-4);
  S beta1 = S(0.9);
  S beta2 = S(0.999);
  S eps = S(1e-8);
};

template <typename S>
class ParamStore;

// Lightweight handle to a store entry. t() yields the tape-attached tensor
// between attach() and detach(), and the raw parameter value otherwise, so
// forward code is identical for training and inference.
template <typename S>
class Param {
 public:
  Param() = default;

  const Tensor<S>& t() const { return entry_->attached ? entry_->tracked : entry_->value; }
  const Tensor<S>& value() const { return entry_->value; }
  std::span<const S> grad() const {
    if (!entry_->attached) throw std::logic_error("param not attached to a tape");
    return entry_->tracked.tape()->grad(entry_->tracked);
  }
  const std::string& name() const { return entry_->name; }

 private:
  friend class ParamStore<S>;
  struct Entry {
    std::string name;
    Tensor<S> value;
    Tensor<S> tracked;
    bool attached = false;
    std::vector<S> m, v;  // Adam moments
  };
  explicit Param(Entry* e) : entry_(e) {}
  Entry* entry_ = nullptr;
};

template <typename S>
class ParamStore {
 public:
  using Entry = typename Param<S>::Entry;

  Param<S> zeros(const std::string& name, Shape shape) {
    return add(name, Tensor<S>(std::move(shape)));
  }

  Param<S> constant(const std::string& name, Shape shape, S fill) {
    return add(name, Tensor<S>::full(std::move(shape), fill));
  }

  // Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  Param<S> uniform_fanin(const std::string& name, Shape shape, std::int64_t fan_in,
                         Rng& rng) {
    Tensor<S> t(std::move(shape));
    const double limit = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (S& v : t.values()) v = static_cast<S>(rng.uniform(-limit, limit));
    return add(name, std::move(t));
  }

  void attach(Tape<S>& tape) {
    for (Entry& e : entries_) {
      e.tracked = tape.leaf(e.value);
      e.attached = true;
    }
  }

  void detach() {
    for (Entry& e : entries_) {
      e.tracked = Tensor<S>();
      e.attached = false;
    }
  }

  // Bias-corrected Adam update from the gradients on the attached tape.
  void adam_step(const AdamConfig<S>& cfg) {
    ++step_;
    const S bc1 = S(1) - std::pow(cfg.beta1, static_cast<S>(step_));
    const S bc2 = S(1) - std::pow(cfg.beta2, static_cast<S>(step_));
    for (Entry& e : entries_) {
      if (!e.attached) throw std::logic_error("adam_step before attach");
      auto g = e.tracked.tape()->grad(e.tracked);
      auto& w = e.value.values();
      for (std::size_t i = 0; i < w.size(); ++i) {
        e.m[i] = cfg.beta1 * e.m[i] + (S(1) - cfg.beta1) * g[i];
        e.v[i] = cfg.beta2 * e.v[i] + (S(1) - cfg.beta2) * g[i] * g[i];
        const S mhat = e.m[i] / bc1;
        const S vhat = e.v[i] / bc2;
        w[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
      }
    }
  }

  std::int64_t step() const { return step_; }
  void set_step(std::int64_t s) { step_ = s; }

  std::size_t size() const { return entries_.size(); }
  std::int64_t total_values() const {
    std::int64_t n = 0;
    for (const Entry& e : entries_) n += e.value.size();
    return n;
  }

  // Creation-order iteration; used by checkpointing and gradient checks.
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  Entry& at(const std::string& name) {
    for (Entry& e : entries_)
      if (e.name == name) return e;
    throw std::out_of_range("no parameter named " + name);
  }

 private:
  Param<S> add(const std::string& name, Tensor<S> value) {
    for (const Entry& e : entries_)
      if (e.name == name) throw std::logic_error("duplicate parameter " + name);
    Entry e;
    e.name = name;
    e.value = std::move(value);
    e.m.assign(e.value.values().size(), S(0));
    e.v.assign(e.value.values().size(), S(0));
    entries_.push_back(std::move(e));
    return Param<S>(&entries_.back());
  }

  std::deque<Entry> entries_;  // deque: stable entry addresses for Param handles
  std::int64_t step_ = 0;
};

}  // namespace mvdepth
