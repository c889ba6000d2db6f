// Dense tensors with reverse-mode automatic differentiation.
//
// A Tensor is a shape plus a flat row-major buffer of scalars. Tensors are
// constants unless routed through a Tape: Tape::leaf turns a constant into a
// tracked tensor, every op whose inputs include a tracked tensor records a
// node with a backward closure, and Tape::backward replays the nodes in
// reverse creation order (which is a reverse topological order by
// construction). Gradient accumulation across fan-out is additive.
//
// Every forward op validates that its outputs are finite and throws
// NumericError otherwise, so NaN/Inf surface at the op that produced them.
#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvdepth/random.hpp"

namespace mvdepth {

using Shape = std::vector<std::int64_t>;

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

template <typename S>
class Tape;

template <typename S>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<S>>(shape_numel(shape_), S(0))) {}

  Tensor(Shape shape, std::vector<S> values)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<S>>(std::move(values))) {
    if (shape_numel(shape_) != static_cast<std::int64_t>(data_->size()))
      throw ShapeError("tensor data size does not match shape " + shape_str(shape_));
  }

  static Tensor scalar(S v) { return Tensor({1}, {v}); }

  static Tensor full(Shape shape, S v) {
    Tensor t(std::move(shape));
    std::fill(t.data_->begin(), t.data_->end(), v);
    return t;
  }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_->size()); }

  std::vector<S>& values() { return *data_; }
  const std::vector<S>& values() const { return *data_; }
  const std::shared_ptr<std::vector<S>>& data_ptr() const { return data_; }

  S value() const {
    if (size() != 1) throw ShapeError("value() requires a scalar tensor");
    return (*data_)[0];
  }

  S operator[](std::int64_t i) const { return (*data_)[static_cast<std::size_t>(i)]; }

  bool tracked() const { return tape_ != nullptr; }
  Tape<S>* tape() const { return tape_; }
  std::int64_t node() const { return node_; }

 private:
  friend class Tape<S>;

  Shape shape_;
  std::shared_ptr<std::vector<S>> data_;
  Tape<S>* tape_ = nullptr;
  std::int64_t node_ = -1;
};

template <typename S>
class Tape {
 public:
  struct Node {
    Shape shape;
    std::shared_ptr<std::vector<S>> value;
    std::vector<S> grad;
    // Pulls this node's grad and accumulates into parent grads.
    std::function<void(Tape&, const Node&)> backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Track a constant tensor as a leaf. The returned tensor shares the input's
  // buffer, so in-place updates to the underlying data (e.g. an optimizer
  // step after backward) remain visible through the original tensor.
  Tensor<S> leaf(const Tensor<S>& t) {
    Tensor<S> out = t;
    out.tape_ = this;
    out.node_ = add_node(t.shape(), t.data_ptr(), {});
    return out;
  }

  Tensor<S> record(Shape shape, std::vector<S> values,
                   std::function<void(Tape&, const Node&)> backward) {
    Tensor<S> out(std::move(shape), std::move(values));
    out.tape_ = this;
    out.node_ = add_node(out.shape(), out.data_ptr(), std::move(backward));
    ++op_count_;
    return out;
  }

  void backward(const Tensor<S>& loss) {
    if (loss.size() != 1) throw ShapeError("backward requires a scalar loss");
    if (loss.tape() != this || loss.node() < 0)
      throw std::logic_error("backward: loss is not tracked on this tape");
    nodes_[static_cast<std::size_t>(loss.node())].grad[0] += S(1);
    for (std::int64_t i = loss.node(); i >= 0; --i) {
      const Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.backward) n.backward(*this, n);
    }
  }

  std::span<const S> grad(const Tensor<S>& t) const {
    if (t.tape() != this || t.node() < 0)
      throw std::logic_error("grad: tensor is not tracked on this tape");
    return nodes_[static_cast<std::size_t>(t.node())].grad;
  }

  std::vector<S>& grad_buffer(std::int64_t node) {
    return nodes_[static_cast<std::size_t>(node)].grad;
  }

  std::size_t node_count() const { return nodes_.size(); }
  std::int64_t op_count() const { return op_count_; }

 private:
  std::int64_t add_node(const Shape& shape, std::shared_ptr<std::vector<S>> value,
                        std::function<void(Tape&, const Node&)> backward) {
    Node n;
    n.shape = shape;
    n.value = std::move(value);
    n.grad.assign(n.value->size(), S(0));
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return static_cast<std::int64_t>(nodes_.size()) - 1;
  }

  std::vector<Node> nodes_;
  std::int64_t op_count_ = 0;
};

namespace detail {

template <typename S>
void check_finite(const char* op, const std::vector<S>& v) {
  for (S x : v) {
    if (!std::isfinite(static_cast<double>(x)))
      throw NumericError(std::string(op) + " produced a non-finite value");
  }
}

template <typename S>
Tape<S>* common_tape(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.tape() && b.tape() && a.tape() != b.tape())
    throw std::logic_error("operands belong to different tapes");
  return a.tape() ? a.tape() : b.tape();
}

// Accumulate src into the grad buffer of `node` if it is a tracked node.
template <typename S>
void accumulate(Tape<S>& tape, std::int64_t node, const std::vector<S>& src) {
  if (node < 0) return;
  auto& dst = tape.grad_buffer(node);
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <typename S>
using MatMap = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename S>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops. add/sub/mul accept equal shapes, or one operand whose
// shape is a suffix of the other's; the smaller operand broadcasts across the
// leading (batch) extents. Anything else requires an explicit reshape.
// ---------------------------------------------------------------------------

namespace detail {

enum class Broadcast { None, BLeading, ALeading };

template <typename S>
Broadcast broadcast_kind(const Tensor<S>& a, const Tensor<S>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa == sb) return Broadcast::None;
  auto suffix = [](const Shape& big, const Shape& small) {
    if (small.size() >= big.size()) return false;
    return std::equal(small.rbegin(), small.rend(), big.rbegin());
  };
  if (suffix(sa, sb)) return Broadcast::BLeading;
  if (suffix(sb, sa)) return Broadcast::ALeading;
  throw ShapeError("incompatible shapes " + shape_str(sa) + " vs " + shape_str(sb));
}

// out[i] = f(a[i], b[i % nb]) with b tiled across leading dims.
template <typename S, typename F>
std::vector<S> zip_tiled(const std::vector<S>& a, const std::vector<S>& b, F f) {
  std::vector<S> out(a.size());
  const std::size_t nb = b.size();
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i % nb]);
  return out;
}

// Sum grad blocks of length `inner` down to a buffer of length `inner`.
template <typename S>
void reduce_leading(const std::vector<S>& g, std::vector<S>& out) {
  const std::size_t inner = out.size();
  for (std::size_t i = 0; i < g.size(); ++i) out[i % inner] += g[i];
}

template <typename S>
void accumulate_reduced(Tape<S>& tape, std::int64_t node, const std::vector<S>& g) {
  if (node < 0) return;
  auto& dst = tape.grad_buffer(node);
  for (std::size_t i = 0; i < g.size(); ++i) dst[i % dst.size()] += g[i];
}

}  // namespace detail

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  using detail::Broadcast;
  const Broadcast bc = detail::broadcast_kind(a, b);
  const Tensor<S>& big = (bc == Broadcast::ALeading) ? b : a;
  const Tensor<S>& small = (bc == Broadcast::ALeading) ? a : b;
  std::vector<S> out =
      detail::zip_tiled(big.values(), small.values(), [](S x, S y) { return x + y; });
  detail::check_finite("add", out);
  Tape<S>* tp = detail::common_tape(a, b);
  if (!tp) return Tensor<S>(big.shape(), std::move(out));
  const std::int64_t na = a.node(), nb = b.node();
  return tp->record(big.shape(), std::move(out),
                    [na, nb](Tape<S>& t, const typename Tape<S>::Node& n) {
                      detail::accumulate_reduced(t, na, n.grad);
                      detail::accumulate_reduced(t, nb, n.grad);
                    });
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  using detail::Broadcast;
  const Broadcast bc = detail::broadcast_kind(a, b);
  std::vector<S> out(std::max(a.size(), b.size()));
  const auto& va = a.values();
  const auto& vb = b.values();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = va[i % va.size()] - vb[i % vb.size()];
  detail::check_finite("sub", out);
  const Shape& shape = (bc == Broadcast::ALeading) ? b.shape() : a.shape();
  Tape<S>* tp = detail::common_tape(a, b);
  if (!tp) return Tensor<S>(shape, std::move(out));
  const std::int64_t na = a.node(), nb = b.node();
  return tp->record(shape, std::move(out),
                    [na, nb](Tape<S>& t, const typename Tape<S>::Node& n) {
                      if (na >= 0) {
                        auto& ga = t.grad_buffer(na);
                        for (std::size_t i = 0; i < n.grad.size(); ++i)
                          ga[i % ga.size()] += n.grad[i];
                      }
                      if (nb >= 0) {
                        auto& gb = t.grad_buffer(nb);
                        for (std::size_t i = 0; i < n.grad.size(); ++i)
                          gb[i % gb.size()] -= n.grad[i];
                      }
                    });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  using detail::Broadcast;
  const Broadcast bc = detail::broadcast_kind(a, b);
  const Shape& shape = (bc == Broadcast::ALeading) ? b.shape() : a.shape();
  std::vector<S> out(std::max(a.size(), b.size()));
  const auto& va = a.values();
  const auto& vb = b.values();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = va[i % va.size()] * vb[i % vb.size()];
  detail::check_finite("mul", out);
  Tape<S>* tp = detail::common_tape(a, b);
  if (!tp) return Tensor<S>(shape, std::move(out));
  const std::int64_t na = a.node(), nb = b.node();
  auto pa = a.data_ptr();
  auto pb = b.data_ptr();
  return tp->record(shape, std::move(out),
                    [na, nb, pa, pb](Tape<S>& t, const typename Tape<S>::Node& n) {
                      if (na >= 0) {
                        auto& ga = t.grad_buffer(na);
                        for (std::size_t i = 0; i < n.grad.size(); ++i)
                          ga[i % ga.size()] += n.grad[i] * (*pb)[i % pb->size()];
                      }
                      if (nb >= 0) {
                        auto& gb = t.grad_buffer(nb);
                        for (std::size_t i = 0; i < n.grad.size(); ++i)
                          gb[i % gb.size()] += n.grad[i] * (*pa)[i % pa->size()];
                      }
                    });
}

template <typename S>
Tensor<S> scale(const Tensor<S>& x, S c) {
  std::vector<S> out(x.values());
  for (S& v : out) v *= c;
  detail::check_finite("scale", out);
  if (!x.tape()) return Tensor<S>(x.shape(), std::move(out));
  const std::int64_t nx = x.node();
  return x.tape()->record(x.shape(), std::move(out),
                          [nx, c](Tape<S>& t, const typename Tape<S>::Node& n) {
                            if (nx < 0) return;
                            auto& g = t.grad_buffer(nx);
                            for (std::size_t i = 0; i < g.size(); ++i) g[i] += c * n.grad[i];
                          });
}

template <typename S>
Tensor<S> add_scalar(const Tensor<S>& x, S c) {
  std::vector<S> out(x.values());
  for (S& v : out) v += c;
  detail::check_finite("add_scalar", out);
  if (!x.tape()) return Tensor<S>(x.shape(), std::move(out));
  const std::int64_t nx = x.node();
  return x.tape()->record(x.shape(), std::move(out),
                          [nx](Tape<S>& t, const typename Tape<S>::Node& n) {
                            detail::accumulate(t, nx, n.grad);
                          });
}

namespace detail {

// Shared scaffolding for unary elementwise ops: dy/dx computed from x (and
// optionally y) inside the closure.
template <typename S, typename Fwd, typename Bwd>
Tensor<S> unary_op(const char* name, const Tensor<S>& x, Fwd fwd, Bwd dfdx) {
  const auto& vx = x.values();
  std::vector<S> out(vx.size());
  for (std::size_t i = 0; i < vx.size(); ++i) out[i] = fwd(vx[i]);
  check_finite(name, out);
  if (!x.tape()) return Tensor<S>(x.shape(), std::move(out));
  const std::int64_t nx = x.node();
  auto px = x.data_ptr();
  return x.tape()->record(x.shape(), std::move(out),
                          [nx, px, dfdx](Tape<S>& t, const typename Tape<S>::Node& n) {
                            if (nx < 0) return;
                            auto& g = t.grad_buffer(nx);
                            const auto& y = *n.value;
                            for (std::size_t i = 0; i < g.size(); ++i)
                              g[i] += n.grad[i] * dfdx((*px)[i], y[i]);
                          });
}

}  // namespace detail

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  return detail::unary_op(
      "sigmoid", x,
      [](S v) {
        return v >= S(0) ? S(1) / (S(1) + std::exp(-v))
                         : std::exp(v) / (S(1) + std::exp(v));
      },
      [](S, S y) { return y * (S(1) - y); });
}

// tanh-form GELU; 0.044715 is the cubic coefficient of the approximation.
template <typename S>
Tensor<S> gelu(const Tensor<S>& x) {
  constexpr double kSqrt2OverPi = 0.7978845608028654;
  constexpr double kCubic = 0.044715;
  return detail::unary_op(
      "gelu", x,
      [=](S v) {
        const double xv = static_cast<double>(v);
        const double u = kSqrt2OverPi * (xv + kCubic * xv * xv * xv);
        return static_cast<S>(0.5 * xv * (1.0 + std::tanh(u)));
      },
      [=](S v, S) {
        const double xv = static_cast<double>(v);
        const double u = kSqrt2OverPi * (xv + kCubic * xv * xv * xv);
        const double th = std::tanh(u);
        const double du = kSqrt2OverPi * (1.0 + 3.0 * kCubic * xv * xv);
        return static_cast<S>(0.5 * (1.0 + th) + 0.5 * xv * (1.0 - th * th) * du);
      });
}

template <typename S>
Tensor<S> log(const Tensor<S>& x) {
  for (S v : x.values())
    if (!(v > S(0))) throw NumericError("log requires strictly positive input");
  return detail::unary_op(
      "log", x, [](S v) { return std::log(v); },
      [](S v, S) { return S(1) / v; });
}

template <typename S>
Tensor<S> exp(const Tensor<S>& x) {
  return detail::unary_op(
      "exp", x, [](S v) { return std::exp(v); },
      [](S, S y) { return y; });
}

template <typename S>
Tensor<S> reciprocal(const Tensor<S>& x) {
  for (S v : x.values())
    if (v == S(0)) throw NumericError("reciprocal of zero");
  return detail::unary_op(
      "reciprocal", x, [](S v) { return S(1) / v; },
      [](S v, S) { return S(-1) / (v * v); });
}

template <typename S>
Tensor<S> square(const Tensor<S>& x) {
  return detail::unary_op(
      "square", x, [](S v) { return v * v; },
      [](S v, S) { return S(2) * v; });
}

template <typename S>
Tensor<S> abs(const Tensor<S>& x) {
  return detail::unary_op(
      "abs", x, [](S v) { return std::abs(v); },
      [](S v, S) { return v > S(0) ? S(1) : (v < S(0) ? S(-1) : S(0)); });
}

template <typename S>
Tensor<S> sum(const Tensor<S>& x) {
  S acc(0);
  for (S v : x.values()) acc += v;
  std::vector<S> out{acc};
  detail::check_finite("sum", out);
  if (!x.tape()) return Tensor<S>({1}, std::move(out));
  const std::int64_t nx = x.node();
  return x.tape()->record({1}, std::move(out),
                          [nx](Tape<S>& t, const typename Tape<S>::Node& n) {
                            if (nx < 0) return;
                            auto& g = t.grad_buffer(nx);
                            for (S& v : g) v += n.grad[0];
                          });
}

template <typename S>
Tensor<S> mean(const Tensor<S>& x) {
  return scale(sum(x), S(1) / static_cast<S>(x.size()));
}

// ---------------------------------------------------------------------------
// Structural ops.
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, Shape shape) {
  if (shape_numel(shape) != x.size())
    throw ShapeError("reshape to " + shape_str(shape) + " changes element count");
  std::vector<S> out(x.values());
  if (!x.tape()) return Tensor<S>(std::move(shape), std::move(out));
  const std::int64_t nx = x.node();
  return x.tape()->record(std::move(shape), std::move(out),
                          [nx](Tape<S>& t, const typename Tape<S>::Node& n) {
                            detail::accumulate(t, nx, n.grad);
                          });
}

template <typename S>
Tensor<S> concat(const std::vector<Tensor<S>>& xs, int axis) {
  if (xs.empty()) throw ShapeError("concat of zero tensors");
  const int rank = xs[0].rank();
  if (axis < 0 || axis >= rank) throw ShapeError("concat axis out of range");
  Shape shape = xs[0].shape();
  std::int64_t total_axis = 0;
  for (const auto& x : xs) {
    if (x.rank() != rank) throw ShapeError("concat rank mismatch");
    for (int d = 0; d < rank; ++d)
      if (d != axis && x.dim(d) != shape[static_cast<std::size_t>(d)])
        throw ShapeError("concat extent mismatch at dim " + std::to_string(d));
    total_axis += x.dim(axis);
  }
  shape[static_cast<std::size_t>(axis)] = total_axis;

  // outer = product of dims before axis, inner = product after.
  std::int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= shape[static_cast<std::size_t>(d)];
  for (int d = axis + 1; d < rank; ++d) inner *= shape[static_cast<std::size_t>(d)];

  std::vector<S> out(static_cast<std::size_t>(shape_numel(shape)));
  const std::int64_t out_row = total_axis * inner;
  std::vector<std::int64_t> offsets(xs.size());
  {
    std::int64_t off = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
      offsets[k] = off;
      const std::int64_t blk = xs[k].dim(axis) * inner;
      const auto& v = xs[k].values();
      for (std::int64_t o = 0; o < outer; ++o)
        std::copy_n(v.begin() + o * blk, blk, out.begin() + o * out_row + off);
      off += blk;
    }
  }
  detail::check_finite("concat", out);

  Tape<S>* tp = nullptr;
  for (const auto& x : xs)
    if (x.tape()) {
      if (tp && tp != x.tape()) throw std::logic_error("concat across tapes");
      tp = x.tape();
    }
  if (!tp) return Tensor<S>(std::move(shape), std::move(out));

  struct Piece {
    std::int64_t node, offset, block;
  };
  std::vector<Piece> pieces;
  for (std::size_t k = 0; k < xs.size(); ++k)
    pieces.push_back({xs[k].node(), offsets[k], xs[k].dim(axis) * inner});
  return tp->record(std::move(shape), std::move(out),
                    [pieces, outer, out_row](Tape<S>& t, const typename Tape<S>::Node& n) {
                      for (const Piece& p : pieces) {
                        if (p.node < 0) continue;
                        auto& g = t.grad_buffer(p.node);
                        for (std::int64_t o = 0; o < outer; ++o) {
                          const S* src = n.grad.data() + o * out_row + p.offset;
                          S* dst = g.data() + o * p.block;
                          for (std::int64_t i = 0; i < p.block; ++i) dst[i] += src[i];
                        }
                      }
                    });
}

template <typename S>
Tensor<S> slice(const Tensor<S>& x, int axis, std::int64_t start, std::int64_t len) {
  const int rank = x.rank();
  if (axis < 0 || axis >= rank) throw ShapeError("slice axis out of range");
  if (start < 0 || len < 0 || start + len > x.dim(axis))
    throw ShapeError("slice range out of bounds");
  Shape shape = x.shape();
  shape[static_cast<std::size_t>(axis)] = len;
  std::int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= x.dim(d);
  for (int d = axis + 1; d < rank; ++d) inner *= x.dim(d);
  const std::int64_t in_row = x.dim(axis) * inner;
  const std::int64_t out_row = len * inner;

  std::vector<S> out(static_cast<std::size_t>(outer * out_row));
  const auto& v = x.values();
  for (std::int64_t o = 0; o < outer; ++o)
    std::copy_n(v.begin() + o * in_row + start * inner, out_row, out.begin() + o * out_row);

  if (!x.tape()) return Tensor<S>(std::move(shape), std::move(out));
  const std::int64_t nx = x.node();
  return x.tape()->record(
      std::move(shape), std::move(out),
      [nx, outer, in_row, out_row, start, inner](Tape<S>& t, const typename Tape<S>::Node& n) {
        if (nx < 0) return;
        auto& g = t.grad_buffer(nx);
        for (std::int64_t o = 0; o < outer; ++o) {
          const S* src = n.grad.data() + o * out_row;
          S* dst = g.data() + o * in_row + start * inner;
          for (std::int64_t i = 0; i < out_row; ++i) dst[i] += src[i];
        }
      });
}

// Gather rows of a rank-2 tensor. Backward scatter-adds into the source rows.
template <typename S>
Tensor<S> take_rows(const Tensor<S>& x, const std::vector<std::int64_t>& rows) {
  if (x.rank() != 2) throw ShapeError("take_rows requires a rank-2 tensor");
  const std::int64_t cols = x.dim(1);
  for (auto r : rows)
    if (r < 0 || r >= x.dim(0)) throw ShapeError("take_rows index out of range");
  std::vector<S> out(rows.size() * static_cast<std::size_t>(cols));
  const auto& v = x.values();
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(v.begin() + rows[i] * cols, cols, out.begin() + static_cast<std::int64_t>(i) * cols);
  Shape shape{static_cast<std::int64_t>(rows.size()), cols};
  if (!x.tape()) return Tensor<S>(std::move(shape), std::move(out));
  const std::int64_t nx = x.node();
  return x.tape()->record(std::move(shape), std::move(out),
                          [nx, rows, cols](Tape<S>& t, const typename Tape<S>::Node& n) {
                            if (nx < 0) return;
                            auto& g = t.grad_buffer(nx);
                            for (std::size_t i = 0; i < rows.size(); ++i) {
                              const S* src = n.grad.data() + static_cast<std::int64_t>(i) * cols;
                              S* dst = g.data() + rows[i] * cols;
                              for (std::int64_t c = 0; c < cols; ++c) dst[c] += src[c];
                            }
                          });
}

template <typename S>
Tensor<S> transpose(const Tensor<S>& x) {
  if (x.rank() != 2) throw ShapeError("transpose requires a rank-2 tensor");
  const std::int64_t r = x.dim(0), c = x.dim(1);
  std::vector<S> out(static_cast<std::size_t>(r * c));
  const auto& v = x.values();
  for (std::int64_t i = 0; i < r; ++i)
    for (std::int64_t j = 0; j < c; ++j) out[j * r + i] = v[i * c + j];
  if (!x.tape()) return Tensor<S>({c, r}, std::move(out));
  const std::int64_t nx = x.node();
  return x.tape()->record({c, r}, std::move(out),
                          [nx, r, c](Tape<S>& t, const typename Tape<S>::Node& n) {
                            if (nx < 0) return;
                            auto& g = t.grad_buffer(nx);
                            for (std::int64_t i = 0; i < r; ++i)
                              for (std::int64_t j = 0; j < c; ++j)
                                g[i * c + j] += n.grad[j * r + i];
                          });
}

// ---------------------------------------------------------------------------
// matmul: [..,m,k] x [..,k,n] -> [..,m,n]. Batch extents must match exactly,
// or one operand may be rank-2 and broadcasts across the other's batch.
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.rank() < 2 || b.rank() < 2) throw ShapeError("matmul requires rank >= 2");
  const std::int64_t m = a.dim(a.rank() - 2), k = a.dim(a.rank() - 1);
  const std::int64_t kb = b.dim(b.rank() - 2), n = b.dim(b.rank() - 1);
  if (k != kb)
    throw ShapeError("matmul inner extents differ: " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  Shape batch_a(a.shape().begin(), a.shape().end() - 2);
  Shape batch_b(b.shape().begin(), b.shape().end() - 2);
  Shape batch;
  if (batch_a == batch_b) {
    batch = batch_a;
  } else if (batch_a.empty()) {
    batch = batch_b;
  } else if (batch_b.empty()) {
    batch = batch_a;
  } else {
    throw ShapeError("matmul batch extents not broadcastable");
  }
  const std::int64_t nbatch = shape_numel(batch);
  const bool a_bcast = batch_a.empty() && !batch.empty();
  const bool b_bcast = batch_b.empty() && !batch.empty();

  Shape shape = batch;
  shape.push_back(m);
  shape.push_back(n);
  std::vector<S> out(static_cast<std::size_t>(nbatch * m * n));
  {
    const auto& va = a.values();
    const auto& vb = b.values();
    for (std::int64_t i = 0; i < nbatch; ++i) {
      detail::ConstMatMap<S> ma(va.data() + (a_bcast ? 0 : i * m * k), m, k);
      detail::ConstMatMap<S> mb(vb.data() + (b_bcast ? 0 : i * k * n), k, n);
      detail::MatMap<S> mo(out.data() + i * m * n, m, n);
      mo.noalias() = ma * mb;
    }
  }
  detail::check_finite("matmul", out);

  Tape<S>* tp = detail::common_tape(a, b);
  if (!tp) return Tensor<S>(std::move(shape), std::move(out));
  const std::int64_t na = a.node(), nb = b.node();
  auto pa = a.data_ptr();
  auto pb = b.data_ptr();
  return tp->record(
      std::move(shape), std::move(out),
      [na, nb, pa, pb, m, k, n, nbatch, a_bcast, b_bcast](Tape<S>& t,
                                                          const typename Tape<S>::Node& node) {
        for (std::int64_t i = 0; i < nbatch; ++i) {
          detail::ConstMatMap<S> gy(node.grad.data() + i * m * n, m, n);
          if (na >= 0) {
            detail::ConstMatMap<S> mb(pb->data() + (b_bcast ? 0 : i * k * n), k, n);
            detail::MatMap<S> ga(t.grad_buffer(na).data() + (a_bcast ? 0 : i * m * k), m, k);
            ga.noalias() += gy * mb.transpose();
          }
          if (nb >= 0) {
            detail::ConstMatMap<S> ma(pa->data() + (a_bcast ? 0 : i * m * k), m, k);
            detail::MatMap<S> gb(t.grad_buffer(nb).data() + (b_bcast ? 0 : i * k * n), k, n);
            gb.noalias() += ma.transpose() * gy;
          }
        }
      });
}

// ---------------------------------------------------------------------------
// softmax over the last dim, max-subtracted for stability.
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> softmax_lastdim(const Tensor<S>& x) {
  if (x.rank() < 1 || x.dim(x.rank() - 1) < 1)
    throw ShapeError("softmax requires a non-empty last dim");
  const std::int64_t cols = x.dim(x.rank() - 1);
  const std::int64_t rows = x.size() / cols;
  std::vector<S> out(x.values().size());
  const auto& v = x.values();
  for (std::int64_t r = 0; r < rows; ++r) {
    const S* in = v.data() + r * cols;
    S* o = out.data() + r * cols;
    S mx = in[0];
    for (std::int64_t c = 1; c < cols; ++c) mx = std::max(mx, in[c]);
    S denom(0);
    for (std::int64_t c = 0; c < cols; ++c) {
      o[c] = std::exp(in[c] - mx);
      denom += o[c];
    }
    for (std::int64_t c = 0; c < cols; ++c) o[c] /= denom;
  }
  detail::check_finite("softmax", out);
  if (!x.tape()) return Tensor<S>(x.shape(), std::move(out));
  const std::int64_t nx = x.node();
  return x.tape()->record(x.shape(), std::move(out),
                          [nx, rows, cols](Tape<S>& t, const typename Tape<S>::Node& n) {
                            if (nx < 0) return;
                            auto& g = t.grad_buffer(nx);
                            const auto& y = *n.value;
                            for (std::int64_t r = 0; r < rows; ++r) {
                              const S* yr = y.data() + r * cols;
                              const S* gy = n.grad.data() + r * cols;
                              S dot(0);
                              for (std::int64_t c = 0; c < cols; ++c) dot += gy[c] * yr[c];
                              S* gx = g.data() + r * cols;
                              for (std::int64_t c = 0; c < cols; ++c)
                                gx[c] += yr[c] * (gy[c] - dot);
                            }
                          });
}

// ---------------------------------------------------------------------------
// layer_norm over the last dim with affine parameters; eps sits inside the
// variance sqrt.
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                     S eps = S(1e-5)) {
  const std::int64_t cols = x.dim(x.rank() - 1);
  if (gamma.size() != cols || beta.size() != cols)
    throw ShapeError("layer_norm affine params must match last dim");
  const std::int64_t rows = x.size() / cols;
  std::vector<S> out(x.values().size());
  std::vector<S> xhat(x.values().size());
  std::vector<S> rstd(static_cast<std::size_t>(rows));
  const auto& v = x.values();
  const auto& gv = gamma.values();
  const auto& bv = beta.values();
  for (std::int64_t r = 0; r < rows; ++r) {
    const S* in = v.data() + r * cols;
    S m(0);
    for (std::int64_t c = 0; c < cols; ++c) m += in[c];
    m /= static_cast<S>(cols);
    S var(0);
    for (std::int64_t c = 0; c < cols; ++c) var += (in[c] - m) * (in[c] - m);
    var /= static_cast<S>(cols);
    const S rs = S(1) / std::sqrt(var + eps);
    rstd[static_cast<std::size_t>(r)] = rs;
    for (std::int64_t c = 0; c < cols; ++c) {
      const S xh = (in[c] - m) * rs;
      xhat[r * cols + c] = xh;
      out[r * cols + c] = xh * gv[c] + bv[c];
    }
  }
  detail::check_finite("layer_norm", out);

  Tape<S>* tp = x.tape() ? x.tape() : (gamma.tape() ? gamma.tape() : beta.tape());
  if (!tp) return Tensor<S>(x.shape(), std::move(out));
  const std::int64_t nx = x.node(), ng = gamma.node(), nb = beta.node();
  auto pg = gamma.data_ptr();
  auto xh = std::make_shared<std::vector<S>>(std::move(xhat));
  auto rs = std::make_shared<std::vector<S>>(std::move(rstd));
  return tp->record(
      x.shape(), std::move(out),
      [nx, ng, nb, pg, xh, rs, rows, cols](Tape<S>& t, const typename Tape<S>::Node& n) {
        for (std::int64_t r = 0; r < rows; ++r) {
          const S* gy = n.grad.data() + r * cols;
          const S* xhr = xh->data() + r * cols;
          if (ng >= 0) {
            auto& gg = t.grad_buffer(ng);
            for (std::int64_t c = 0; c < cols; ++c) gg[c] += gy[c] * xhr[c];
          }
          if (nb >= 0) {
            auto& gb = t.grad_buffer(nb);
            for (std::int64_t c = 0; c < cols; ++c) gb[c] += gy[c];
          }
          if (nx >= 0) {
            auto& gx = t.grad_buffer(nx);
            // dx = rstd * (dxhat - mean(dxhat) - xhat * mean(dxhat .* xhat))
            S mean_dxh(0), mean_dxh_xh(0);
            const auto& gvv = *pg;
            for (std::int64_t c = 0; c < cols; ++c) {
              const S dxh = gy[c] * gvv[c];
              mean_dxh += dxh;
              mean_dxh_xh += dxh * xhr[c];
            }
            mean_dxh /= static_cast<S>(cols);
            mean_dxh_xh /= static_cast<S>(cols);
            const S rsr = (*rs)[static_cast<std::size_t>(r)];
            for (std::int64_t c = 0; c < cols; ++c) {
              const S dxh = gy[c] * gvv[c];
              gx[r * cols + c] += rsr * (dxh - mean_dxh - xhr[c] * mean_dxh_xh);
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Image-layout ops. Feature maps are stored row-major [H*W, C].
// ---------------------------------------------------------------------------

// Extract kxk patches at the given stride with zero padding; the result has
// one row per output pixel and k*k*C columns, so a convolution is a matmul
// against a [k*k*C, Cout] weight.
template <typename S>
Tensor<S> im2col(const Tensor<S>& x, std::int64_t h, std::int64_t w, std::int64_t k,
                 std::int64_t stride, std::int64_t pad) {
  if (x.rank() != 2 || x.dim(0) != h * w) throw ShapeError("im2col expects [H*W, C]");
  const std::int64_t c = x.dim(1);
  const std::int64_t ho = (h + 2 * pad - k) / stride + 1;
  const std::int64_t wo = (w + 2 * pad - k) / stride + 1;
  if (ho < 1 || wo < 1) throw ShapeError("im2col output would be empty");
  const std::int64_t patch = k * k * c;
  std::vector<S> out(static_cast<std::size_t>(ho * wo * patch), S(0));
  const auto& v = x.values();
  for (std::int64_t oy = 0; oy < ho; ++oy)
    for (std::int64_t ox = 0; ox < wo; ++ox) {
      S* dst = out.data() + (oy * wo + ox) * patch;
      for (std::int64_t ky = 0; ky < k; ++ky) {
        const std::int64_t iy = oy * stride + ky - pad;
        if (iy < 0 || iy >= h) continue;
        for (std::int64_t kx = 0; kx < k; ++kx) {
          const std::int64_t ix = ox * stride + kx - pad;
          if (ix < 0 || ix >= w) continue;
          std::copy_n(v.begin() + (iy * w + ix) * c, c, dst + (ky * k + kx) * c);
        }
      }
    }
  if (!x.tape()) return Tensor<S>({ho * wo, patch}, std::move(out));
  const std::int64_t nx = x.node();
  return x.tape()->record(
      {ho * wo, patch}, std::move(out),
      [nx, h, w, c, k, stride, pad, ho, wo, patch](Tape<S>& t,
                                                   const typename Tape<S>::Node& n) {
        if (nx < 0) return;
        auto& g = t.grad_buffer(nx);
        for (std::int64_t oy = 0; oy < ho; ++oy)
          for (std::int64_t ox = 0; ox < wo; ++ox) {
            const S* src = n.grad.data() + (oy * wo + ox) * patch;
            for (std::int64_t ky = 0; ky < k; ++ky) {
              const std::int64_t iy = oy * stride + ky - pad;
              if (iy < 0 || iy >= h) continue;
              for (std::int64_t kx = 0; kx < k; ++kx) {
                const std::int64_t ix = ox * stride + kx - pad;
                if (ix < 0 || ix >= w) continue;
                S* dst = g.data() + (iy * w + ix) * c;
                const S* s = src + (ky * k + kx) * c;
                for (std::int64_t cc = 0; cc < c; ++cc) dst[cc] += s[cc];
              }
            }
          }
      });
}

// Bilinear resize of an [h*w, C] map to [h2*w2, C], half-pixel centers,
// border-clamped. Backward scatters the same interpolation weights.
template <typename S>
Tensor<S> upsample_bilinear(const Tensor<S>& x, std::int64_t h, std::int64_t w,
                            std::int64_t h2, std::int64_t w2) {
  if (x.rank() != 2 || x.dim(0) != h * w) throw ShapeError("upsample expects [H*W, C]");
  const std::int64_t c = x.dim(1);

  struct Tap {
    std::int64_t y0, y1, x0, x1;
    S wy, wx;
  };
  std::vector<Tap> taps(static_cast<std::size_t>(h2 * w2));
  auto axis_tap = [](std::int64_t out_i, std::int64_t in_n, std::int64_t out_n,
                     std::int64_t& i0, std::int64_t& i1, S& frac) {
    const double src = (static_cast<double>(out_i) + 0.5) * static_cast<double>(in_n) /
                           static_cast<double>(out_n) -
                       0.5;
    const double f = std::floor(src);
    i0 = std::clamp<std::int64_t>(static_cast<std::int64_t>(f), 0, in_n - 1);
    i1 = std::clamp<std::int64_t>(i0 + 1, 0, in_n - 1);
    frac = static_cast<S>(std::clamp(src - f, 0.0, 1.0));
  };
  for (std::int64_t oy = 0; oy < h2; ++oy)
    for (std::int64_t ox = 0; ox < w2; ++ox) {
      Tap& tp = taps[static_cast<std::size_t>(oy * w2 + ox)];
      axis_tap(oy, h, h2, tp.y0, tp.y1, tp.wy);
      axis_tap(ox, w, w2, tp.x0, tp.x1, tp.wx);
    }

  std::vector<S> out(static_cast<std::size_t>(h2 * w2 * c));
  const auto& v = x.values();
  for (std::int64_t i = 0; i < h2 * w2; ++i) {
    const Tap& tp = taps[static_cast<std::size_t>(i)];
    const S* p00 = v.data() + (tp.y0 * w + tp.x0) * c;
    const S* p01 = v.data() + (tp.y0 * w + tp.x1) * c;
    const S* p10 = v.data() + (tp.y1 * w + tp.x0) * c;
    const S* p11 = v.data() + (tp.y1 * w + tp.x1) * c;
    S* o = out.data() + i * c;
    for (std::int64_t cc = 0; cc < c; ++cc)
      o[cc] = (S(1) - tp.wy) * ((S(1) - tp.wx) * p00[cc] + tp.wx * p01[cc]) +
              tp.wy * ((S(1) - tp.wx) * p10[cc] + tp.wx * p11[cc]);
  }
  detail::check_finite("upsample_bilinear", out);
  if (!x.tape()) return Tensor<S>({h2 * w2, c}, std::move(out));
  const std::int64_t nx = x.node();
  auto taps_p = std::make_shared<std::vector<Tap>>(std::move(taps));
  return x.tape()->record({h2 * w2, c}, std::move(out),
                          [nx, taps_p, w, c, h2, w2](Tape<S>& t,
                                                     const typename Tape<S>::Node& n) {
                            if (nx < 0) return;
                            auto& g = t.grad_buffer(nx);
                            for (std::int64_t i = 0; i < h2 * w2; ++i) {
                              const Tap& tp = (*taps_p)[static_cast<std::size_t>(i)];
                              const S* gy = n.grad.data() + i * c;
                              for (std::int64_t cc = 0; cc < c; ++cc) {
                                const S gv = gy[cc];
                                g[(tp.y0 * w + tp.x0) * c + cc] +=
                                    (S(1) - tp.wy) * (S(1) - tp.wx) * gv;
                                g[(tp.y0 * w + tp.x1) * c + cc] += (S(1) - tp.wy) * tp.wx * gv;
                                g[(tp.y1 * w + tp.x0) * c + cc] += tp.wy * (S(1) - tp.wx) * gv;
                                g[(tp.y1 * w + tp.x1) * c + cc] += tp.wy * tp.wx * gv;
                              }
                            }
                          });
}

}  // namespace mvdepth
