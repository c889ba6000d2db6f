// Training losses and evaluation metrics.
//
// Depth is supervised with an L1-log loss, view synthesis with an L2 loss,
// combined as L = L_d + ls*L_s + lv*(L_dv + ls*L_sv). Losses reduce as
// mean-per-valid-pixel; callers average across frames, so the weights are
// resolution-independent. Metrics are the standard depth-error set with
// optional median scaling for zero-shot evaluation.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvdepth/tensor.hpp"

namespace mvdepth {

struct LossWeights {
  double lambda_synthesis = 1.0;  // ls
  double lambda_virtual = 1.0;    // lv
};

// Mean over rows of |log(gt) - log(pred)|. Inputs are already restricted to
// pixels with ground truth.
template <typename S>
Tensor<S> depth_loss(const Tensor<S>& pred, const Tensor<S>& gt) {
  if (pred.size() == 0) throw std::invalid_argument("depth_loss: empty mask");
  if (pred.shape() != gt.shape()) throw ShapeError("depth_loss shape mismatch");
  return mean(abs(sub(log(gt), log(pred))));
}

// Mean over pixels of the channel-summed squared error; inputs [N, 3].
template <typename S>
Tensor<S> rgb_loss(const Tensor<S>& pred, const Tensor<S>& gt) {
  if (pred.size() == 0) throw std::invalid_argument("rgb_loss: empty mask");
  if (pred.shape() != gt.shape()) throw ShapeError("rgb_loss shape mismatch");
  const S pixels = static_cast<S>(pred.dim(0));
  return scale(sum(square(sub(pred, gt))), S(1) / pixels);
}

template <typename S>
Tensor<S> total_loss(const Tensor<S>& depth, const Tensor<S>& synthesis,
                     const Tensor<S>& virtual_depth, const Tensor<S>& virtual_synthesis,
                     const LossWeights& w) {
  const S ls = static_cast<S>(w.lambda_synthesis);
  const S lv = static_cast<S>(w.lambda_virtual);
  return add(add(depth, scale(synthesis, ls)),
             scale(add(virtual_depth, scale(virtual_synthesis, ls)), lv));
}

// ---------------------------------------------------------------------------
// Metrics (plain arithmetic, no tape).
// ---------------------------------------------------------------------------

struct DepthMetrics {
  double abs_rel = 0, sq_rel = 0, rmse = 0;
  double delta1 = 0, delta2 = 0, delta3 = 0;
  std::int64_t pixels = 0;
};

inline DepthMetrics compute_metrics(std::span<const double> pred,
                                    std::span<const double> gt,
                                    std::span<const std::uint8_t> mask = {}) {
  if (pred.size() != gt.size()) throw std::invalid_argument("metrics size mismatch");
  DepthMetrics m;
  double se = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    if (!(gt[i] > 0.0)) continue;
    const double d = gt[i], dh = pred[i];
    const double err = d - dh;
    m.abs_rel += std::abs(err) / d;
    m.sq_rel += err * err / d;
    se += err * err;
    const double ratio = std::max(dh / d, d / dh);
    m.delta1 += ratio < 1.25;
    m.delta2 += ratio < 1.25 * 1.25;
    m.delta3 += ratio < 1.25 * 1.25 * 1.25;
    ++m.pixels;
  }
  if (m.pixels == 0) throw std::invalid_argument("metrics: empty mask");
  const double n = static_cast<double>(m.pixels);
  m.abs_rel /= n;
  m.sq_rel /= n;
  m.rmse = std::sqrt(se / n);
  m.delta1 /= n;
  m.delta2 /= n;
  m.delta3 /= n;
  return m;
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of empty set");
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo =
      *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

// pred * (median(gt) / median(pred)) over the masked pixels; the scale is
// invariant to any positive rescaling of pred.
inline std::vector<double> median_scale(std::span<const double> pred,
                                        std::span<const double> gt,
                                        std::span<const std::uint8_t> mask = {}) {
  std::vector<double> mp, mg;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    if (!(gt[i] > 0.0)) continue;
    mp.push_back(pred[i]);
    mg.push_back(gt[i]);
  }
  if (mp.empty()) throw std::invalid_argument("median_scale: empty mask");
  const double s = median(std::move(mg)) / median(std::move(mp));
  std::vector<double> out(pred.begin(), pred.end());
  for (double& v : out) v *= s;
  return out;
}

// ---------------------------------------------------------------------------
// CSV emission: split, step, AbsRel, SqRel, RMSE, d1, d2, d3.
// ---------------------------------------------------------------------------

class MetricsCsv {
 public:
  explicit MetricsCsv(const std::string& path) : out_(path) {
    if (!out_) throw std::runtime_error("cannot open metrics csv " + path);
    out_ << "split,step,AbsRel,SqRel,RMSE,d1,d2,d3\n";
  }

  void row(const std::string& split, std::int64_t step, const DepthMetrics& m) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s,%lld,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n",
                  split.c_str(), static_cast<long long>(step), m.abs_rel, m.sq_rel, m.rmse,
                  m.delta1, m.delta2, m.delta3);
    out_ << buf;
    out_.flush();
  }

 private:
  std::ofstream out_;
};

}  // namespace mvdepth
