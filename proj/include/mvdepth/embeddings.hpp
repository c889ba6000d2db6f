// Per-pixel input embeddings.
//
// Encoder tokens are the concatenation of learned image features (a small
// strided conv pyramid at 1/4 resolution) and a fixed camera embedding built
// from the Fourier-encoded viewing-ray origin and direction. Decoder queries
// are camera embeddings only, so any calibrated viewpoint can be queried
// without image input.
//
// The camera embedding of a pixel is [o, F(o), r, F(r)] where F maps each
// scalar to [x, sin(f_1 pi x), cos(f_1 pi x), ..., sin(f_K pi x),
// cos(f_K pi x)] with K frequencies equally spaced in [1, mu/2]. Each block
// is 6(K+1) wide, giving a total width of 6(K_o + K_r + 2).
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "mvdepth/geometry.hpp"
#include "mvdepth/optim.hpp"
#include "mvdepth/tensor.hpp"

namespace mvdepth {

struct EmbeddingConfig {
  int k_origin = 8;
  int k_ray = 8;
  double mu_origin = 64.0;  // origins span meters-scale scenes
  double mu_ray = 2.0;
  bool global_rays = true;
};

inline int camera_embedding_width(const EmbeddingConfig& cfg) {
  return 6 * (cfg.k_origin + cfg.k_ray + 2);
}

inline std::vector<double> fourier_frequencies(int k, double mu) {
  std::vector<double> f(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i)
    f[static_cast<std::size_t>(i)] =
        (k == 1) ? 1.0 : 1.0 + (mu / 2.0 - 1.0) * static_cast<double>(i) / (k - 1);
  return f;
}

// Per-scalar Fourier features, length 2K+1.
template <typename S>
void fourier_encode_scalar(S x, const std::vector<double>& freqs, std::vector<S>& out) {
  out.push_back(x);
  for (double f : freqs) {
    const double fx = f * std::numbers::pi * static_cast<double>(x);
    out.push_back(static_cast<S>(std::sin(fx)));
    out.push_back(static_cast<S>(std::cos(fx)));
  }
}

template <typename S>
std::vector<S> fourier_encode(S x, int k, double mu) {
  std::vector<S> out;
  out.reserve(static_cast<std::size_t>(2 * k + 1));
  fourier_encode_scalar(x, fourier_frequencies(k, mu), out);
  return out;
}

template <typename S>
std::vector<S> fourier_encode(const Vec3<S>& v, int k, double mu) {
  std::vector<S> out;
  out.reserve(static_cast<std::size_t>(3 * (2 * k + 1)));
  const auto freqs = fourier_frequencies(k, mu);
  for (int c = 0; c < 3; ++c) fourier_encode_scalar(v[c], freqs, out);
  return out;
}

// One camera-embedding block: the raw 3-vector followed by its per-component
// Fourier features; 6(K+1) values.
template <typename S>
void embed_vector(const Vec3<S>& v, const std::vector<double>& freqs, std::vector<S>& out) {
  out.push_back(v.x());
  out.push_back(v.y());
  out.push_back(v.z());
  for (int c = 0; c < 3; ++c) fourier_encode_scalar(v[c], freqs, out);
}

// Camera embeddings for every pixel of an h x w grid, row-major, one row per
// pixel: [N, 6(K_o + K_r + 2)]. The intrinsics must already be scaled to the
// grid resolution. Always an untracked constant.
template <typename S>
Tensor<S> camera_embedding_grid(const Camera<S>& cam, int h, int w,
                                const EmbeddingConfig& cfg) {
  const auto fo = fourier_frequencies(cfg.k_origin, cfg.mu_origin);
  const auto fr = fourier_frequencies(cfg.k_ray, cfg.mu_ray);
  const int width = camera_embedding_width(cfg);
  std::vector<S> data;
  data.reserve(static_cast<std::size_t>(h) * w * static_cast<std::size_t>(width));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Ray<S> ray = compute_ray(cam.intrinsics, cam.pose, static_cast<S>(x),
                                     static_cast<S>(y), cfg.global_rays);
      embed_vector(ray.origin, fo, data);
      embed_vector(ray.direction, fr, data);
    }
  return Tensor<S>({static_cast<std::int64_t>(h) * w, width}, std::move(data));
}

// ---------------------------------------------------------------------------
// Image encoder: three stride-2 3x3 convs; the 1/8 map is bilinearly
// upsampled back to 1/4 and concatenated channel-wise with the 1/4 map.
// ---------------------------------------------------------------------------

struct ImageEncoderConfig {
  std::array<int, 3> stage_channels{32, 32, 32};

  int out_channels() const { return stage_channels[1] + stage_channels[2]; }
};

template <typename S>
struct ConvParams {
  Param<S> w;  // [k*k*Cin, Cout]
  Param<S> b;  // [Cout]
};

template <typename S>
struct ImageEncoderParams {
  ImageEncoderConfig cfg;
  ConvParams<S> conv1, conv2, conv3;
};

template <typename S>
ImageEncoderParams<S> make_image_encoder(const ImageEncoderConfig& cfg, ParamStore<S>& store,
                                         Rng& rng, const std::string& prefix = "img") {
  auto make_conv = [&](const std::string& name, int cin, int cout) {
    ConvParams<S> c;
    c.w = store.uniform_fanin(prefix + "." + name + ".w", {9 * cin, cout}, 9 * cin, rng);
    c.b = store.zeros(prefix + "." + name + ".b", {cout});
    return c;
  };
  ImageEncoderParams<S> p;
  p.cfg = cfg;
  p.conv1 = make_conv("conv1", 3, cfg.stage_channels[0]);
  p.conv2 = make_conv("conv2", cfg.stage_channels[0], cfg.stage_channels[1]);
  p.conv3 = make_conv("conv3", cfg.stage_channels[1], cfg.stage_channels[2]);
  return p;
}

template <typename S>
Tensor<S> conv3x3_s2(const Tensor<S>& x, std::int64_t h, std::int64_t w,
                     const ConvParams<S>& p) {
  return add(matmul(im2col(x, h, w, 3, 2, 1), p.w.t()), p.b.t());
}

// rgb is [H*W, 3]; result is [H/4*W/4, out_channels], fully trainable.
template <typename S>
Tensor<S> image_encoder(const ImageEncoderParams<S>& p, const Tensor<S>& rgb, int h, int w) {
  if (h % 4 != 0 || w % 4 != 0)
    throw ShapeError("image extents must be divisible by 4, got " + std::to_string(h) + "x" +
                     std::to_string(w));
  const std::int64_t h2 = h / 2, w2 = w / 2;
  const std::int64_t h4 = h / 4, w4 = w / 4;
  const std::int64_t h8 = (h4 + 1) / 2, w8 = (w4 + 1) / 2;
  auto a1 = gelu(conv3x3_s2(rgb, h, w, p.conv1));
  auto a2 = gelu(conv3x3_s2(a1, h2, w2, p.conv2));
  auto a3 = gelu(conv3x3_s2(a2, h4, w4, p.conv3));
  auto up = upsample_bilinear(a3, h8, w8, h4, w4);
  return concat<S>({a2, up}, 1);
}

// ---------------------------------------------------------------------------
// Token assembly.
// ---------------------------------------------------------------------------

// One input view: an RGB tensor in [H*W, 3] layout plus its camera.
template <typename S>
struct ViewInput {
  Tensor<S> rgb;
  Camera<S> camera;
};

// Encoder tokens for a set of posed views: per view, image features and
// camera embeddings at quarter resolution, concatenated per pixel; views are
// stacked along the token axis in input order (frame-major, row-major).
template <typename S>
Tensor<S> assemble_encoder_tokens(const std::vector<ViewInput<S>>& views,
                                  const ImageEncoderParams<S>& img,
                                  const EmbeddingConfig& cfg) {
  if (views.empty()) throw ShapeError("assemble_encoder_tokens: no views");
  const int h = views[0].camera.height, w = views[0].camera.width;
  std::vector<Tensor<S>> per_view;
  per_view.reserve(views.size());
  for (const auto& view : views) {
    if (view.camera.height != h || view.camera.width != w)
      throw ShapeError("mixed resolutions in one token batch");
    auto feats = image_encoder(img, view.rgb, h, w);
    auto cam4 = view.camera.scaled_down(S(4));
    auto emb = camera_embedding_grid(cam4, h / 4, w / 4, cfg);
    per_view.push_back(concat<S>({feats, emb}, 1));
  }
  return per_view.size() == 1 ? per_view[0] : concat<S>(per_view, 0);
}

// Decoder queries: camera embeddings only, at any resolution. An optional
// pixel subset restricts rows to the given row-major pixel indices.
template <typename S>
Tensor<S> assemble_decoder_queries(const Camera<S>& cam, int h, int w,
                                   const EmbeddingConfig& cfg,
                                   const std::vector<std::int64_t>* pixel_subset = nullptr) {
  Tensor<S> full = camera_embedding_grid(cam, h, w, cfg);
  if (!pixel_subset) return full;
  for (auto i : *pixel_subset)
    if (i < 0 || i >= full.dim(0)) throw ShapeError("pixel subset index out of range");
  return take_rows(full, *pixel_subset);
}

}  // namespace mvdepth
