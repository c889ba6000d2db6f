// Shared helpers for the test suites: finite-difference gradient oracle and
// tolerance checks. The oracle is independent of the tape: it evaluates the
// forward function twice per input element with central differences.
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "mvdepth/random.hpp"
#include "mvdepth/tensor.hpp"

namespace mvtest {

inline bool close(double a, double b, double tol) { return std::abs(a - b) <= tol; }

// |a - b| <= tol * max(1, |b|), elementwise.
inline bool grad_close(const std::vector<double>& a, const std::vector<double>& b,
                       double tol) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::abs(a[i] - b[i]) > tol * std::max(1.0, std::abs(b[i]))) return false;
  return true;
}

inline std::vector<double> random_values(std::size_t n, mvdepth::Rng& rng, double lo = -1.0,
                                         double hi = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

// Central finite differences of a scalar-valued function of a flat vector.
inline std::vector<double> fd_gradient(
    const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
    double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double fp = f(x);
    x[i] = x0 - h;
    const double fm = f(x);
    x[i] = x0;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Gradient of loss(x) = sum(w .* op(x)) for a fixed random projection w,
// computed analytically through the tape. `op` must consume a tracked tensor.
inline std::vector<double> tape_gradient(
    const std::function<mvdepth::Tensor<double>(const mvdepth::Tensor<double>&)>& op,
    const mvdepth::Shape& shape, const std::vector<double>& values,
    const std::vector<double>& w) {
  mvdepth::Tape<double> tape;
  mvdepth::Tensor<double> x = tape.leaf(mvdepth::Tensor<double>(shape, values));
  mvdepth::Tensor<double> y = op(x);
  mvdepth::Tensor<double> proj(y.shape(), w);
  mvdepth::Tensor<double> loss = mvdepth::sum(mvdepth::mul(y, proj));
  tape.backward(loss);
  auto g = tape.grad(x);
  return {g.begin(), g.end()};
}

// Full check: analytic tape gradient vs finite differences of the projected
// loss, for one op on one input.
inline bool check_op_gradient(
    const std::function<mvdepth::Tensor<double>(const mvdepth::Tensor<double>&)>& op,
    const mvdepth::Shape& shape, std::vector<double> values, mvdepth::Rng& rng,
    double tol = 1e-4, double h = 1e-5) {
  // Fixed projection sized from a probe evaluation.
  mvdepth::Tensor<double> probe = op(mvdepth::Tensor<double>(shape, values));
  std::vector<double> w = random_values(probe.values().size(), rng);

  auto analytic = tape_gradient(op, shape, values, w);
  auto fd = fd_gradient(
      [&](const std::vector<double>& v) {
        mvdepth::Tensor<double> y = op(mvdepth::Tensor<double>(shape, v));
        double acc = 0;
        for (std::size_t i = 0; i < w.size(); ++i) acc += w[i] * y.values()[i];
        return acc;
      },
      values, h);
  return grad_close(analytic, fd, tol);
}

}  // namespace mvtest
