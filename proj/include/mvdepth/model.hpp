// Attention encoder/decoder around a fixed-size latent.
//
// Encoding cross-attends the learned [N_l, C_l] latent onto the input tokens
// once, then runs a stack of pre-norm self-attention blocks on the latent,
// so the conditioned latent has the same shape for any number of input
// frames. Task decoders are a single cross-attention from the query
// embeddings onto the latent followed by a linear head and a sigmoid; depth
// is mapped into [d_min, d_max].
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mvdepth/embeddings.hpp"
#include "mvdepth/optim.hpp"
#include "mvdepth/tensor.hpp"

namespace mvdepth {

struct ModelConfig {
  int latent_slots = 128;  // N_l
  int latent_dim = 128;    // C_l
  int blocks = 4;          // latent self-attention blocks
  int heads = 4;
  int head_dim = 32;
  int mlp_ratio = 2;
  double d_min = 0.1;
  double d_max = 10.0;
  bool inverse_depth = false;  // sigmoid maps inverse depth instead of depth
  ImageEncoderConfig image;
  EmbeddingConfig embedding;

  int attention_width() const { return heads * head_dim; }
  int token_width() const { return image.out_channels() + camera_embedding_width(embedding); }
  int query_width() const { return camera_embedding_width(embedding); }

  void validate() const {
    if (d_min <= 0 || d_max <= d_min)
      throw std::invalid_argument("depth range requires 0 < d_min < d_max");
    if (latent_slots < 1 || latent_dim < 1 || heads < 1 || head_dim < 1 || blocks < 0)
      throw std::invalid_argument("model dimensions must be positive");
  }
};

template <typename S>
struct LinearParams {
  Param<S> w, b;
};

template <typename S>
LinearParams<S> make_linear(ParamStore<S>& store, const std::string& name, int in, int out,
                            Rng& rng) {
  return {store.uniform_fanin(name + ".w", {in, out}, in, rng), store.zeros(name + ".b", {out})};
}

template <typename S>
Tensor<S> linear(const LinearParams<S>& p, const Tensor<S>& x) {
  return add(matmul(x, p.w.t()), p.b.t());
}

template <typename S>
struct LayerNormParams {
  Param<S> gamma, beta;
};

template <typename S>
LayerNormParams<S> make_layer_norm(ParamStore<S>& store, const std::string& name, int dim) {
  return {store.constant(name + ".gamma", {dim}, S(1)), store.zeros(name + ".beta", {dim})};
}

template <typename S>
Tensor<S> normed(const LayerNormParams<S>& p, const Tensor<S>& x) {
  return layer_norm(x, p.gamma.t(), p.beta.t());
}

// Multi-head scaled dot-product cross-attention with pre-norm on both
// inputs. Heads are channel slices of the projected width.
template <typename S>
struct AttentionParams {
  LayerNormParams<S> q_norm, kv_norm;
  LinearParams<S> q, k, v, out;
  int heads = 1, head_dim = 1;
};

template <typename S>
AttentionParams<S> make_attention(ParamStore<S>& store, const std::string& name, int q_width,
                                  int kv_width, int out_width, int heads, int head_dim,
                                  Rng& rng) {
  AttentionParams<S> p;
  p.heads = heads;
  p.head_dim = head_dim;
  const int aw = heads * head_dim;
  p.q_norm = make_layer_norm(store, name + ".q_norm", q_width);
  p.kv_norm = make_layer_norm(store, name + ".kv_norm", kv_width);
  p.q = make_linear(store, name + ".q", q_width, aw, rng);
  p.k = make_linear(store, name + ".k", kv_width, aw, rng);
  p.v = make_linear(store, name + ".v", kv_width, aw, rng);
  p.out = make_linear(store, name + ".out", aw, out_width, rng);
  return p;
}

template <typename S>
Tensor<S> attention(const AttentionParams<S>& p, const Tensor<S>& queries,
                    const Tensor<S>& keyvals) {
  const auto qn = normed(p.q_norm, queries);
  const auto kn = normed(p.kv_norm, keyvals);
  const auto q = linear(p.q, qn);
  const auto k = linear(p.k, kn);
  const auto v = linear(p.v, kn);
  const S inv_sqrt_d = S(1) / std::sqrt(static_cast<S>(p.head_dim));
  std::vector<Tensor<S>> heads;
  heads.reserve(static_cast<std::size_t>(p.heads));
  for (int h = 0; h < p.heads; ++h) {
    const auto qh = slice(q, 1, h * p.head_dim, p.head_dim);
    const auto kh = slice(k, 1, h * p.head_dim, p.head_dim);
    const auto vh = slice(v, 1, h * p.head_dim, p.head_dim);
    const auto weights = softmax_lastdim(scale(matmul(qh, transpose(kh)), inv_sqrt_d));
    heads.push_back(matmul(weights, vh));
  }
  return linear(p.out, p.heads == 1 ? heads[0] : concat<S>(heads, 1));
}

template <typename S>
struct MlpParams {
  LayerNormParams<S> norm;
  LinearParams<S> fc1, fc2;
};

template <typename S>
MlpParams<S> make_mlp(ParamStore<S>& store, const std::string& name, int dim, int ratio,
                      Rng& rng) {
  MlpParams<S> p;
  p.norm = make_layer_norm(store, name + ".norm", dim);
  p.fc1 = make_linear(store, name + ".fc1", dim, dim * ratio, rng);
  p.fc2 = make_linear(store, name + ".fc2", dim * ratio, dim, rng);
  return p;
}

template <typename S>
Tensor<S> mlp(const MlpParams<S>& p, const Tensor<S>& x) {
  return linear(p.fc2, gelu(linear(p.fc1, normed(p.norm, x))));
}

template <typename S>
struct SelfBlockParams {
  AttentionParams<S> attn;
  MlpParams<S> ff;
};

template <typename S>
struct EncoderParams {
  Param<S> latent;  // [N_l, C_l]
  AttentionParams<S> cross;
  MlpParams<S> cross_ff;
  std::vector<SelfBlockParams<S>> blocks;
};

template <typename S>
struct DecoderParams {
  AttentionParams<S> attn;
  LinearParams<S> head;
};

// The conditioned latent produced by encoding; shape [N_l, C_l] regardless
// of how many tokens went in.
template <typename S>
using LatentState = Tensor<S>;

template <typename S>
struct Model {
  ModelConfig cfg;
  ParamStore<S> store;
  ImageEncoderParams<S> image_enc;
  EncoderParams<S> encoder;
  DecoderParams<S> depth_dec;
  DecoderParams<S> rgb_dec;

  Model(const ModelConfig& config, Rng& rng) : cfg(config) {
    cfg.validate();
    const int cl = cfg.latent_dim;
    const int ce = cfg.token_width();
    const int cd = cfg.query_width();
    const int aw = cfg.attention_width();

    image_enc = make_image_encoder(cfg.image, store, rng);

    encoder.latent = store.uniform_fanin("enc.latent", {cfg.latent_slots, cl}, cl, rng);
    encoder.cross =
        make_attention(store, "enc.cross", cl, ce, cl, cfg.heads, cfg.head_dim, rng);
    encoder.cross_ff = make_mlp(store, "enc.cross_ff", cl, cfg.mlp_ratio, rng);
    for (int b = 0; b < cfg.blocks; ++b) {
      SelfBlockParams<S> blk;
      const std::string name = "enc.block" + std::to_string(b);
      blk.attn = make_attention(store, name + ".attn", cl, cl, cl, cfg.heads, cfg.head_dim,
                                rng);
      blk.ff = make_mlp(store, name + ".ff", cl, cfg.mlp_ratio, rng);
      encoder.blocks.push_back(std::move(blk));
    }

    auto make_decoder = [&](const std::string& name, int out_channels) {
      DecoderParams<S> d;
      d.attn = make_attention(store, name + ".attn", cd, cl, aw, cfg.heads, cfg.head_dim, rng);
      d.head = make_linear(store, name + ".head", aw, out_channels, rng);
      return d;
    };
    depth_dec = make_decoder("dec.depth", 1);
    rgb_dec = make_decoder("dec.rgb", 3);
  }

  LatentState<S> encode(const Tensor<S>& tokens) const {
    if (tokens.dim(1) != cfg.token_width())
      throw ShapeError("token width " + std::to_string(tokens.dim(1)) +
                       " does not match config width " + std::to_string(cfg.token_width()));
    Tensor<S> lat = encoder.latent.t();
    lat = add(lat, attention(encoder.cross, lat, tokens));
    lat = add(lat, mlp(encoder.cross_ff, lat));
    for (const auto& blk : encoder.blocks) {
      lat = add(lat, attention(blk.attn, lat, lat));
      lat = add(lat, mlp(blk.ff, lat));
    }
    return lat;
  }

  // Pre-activation decoder output [N_d, C_o].
  Tensor<S> decode_raw(const DecoderParams<S>& dec, const LatentState<S>& latent,
                       const Tensor<S>& queries) const {
    return linear(dec.head, attention(dec.attn, queries, latent));
  }

  Tensor<S> decode_depth(const LatentState<S>& latent, const Tensor<S>& queries) const {
    const auto s = sigmoid(decode_raw(depth_dec, latent, queries));
    const S dmin = static_cast<S>(cfg.d_min), dmax = static_cast<S>(cfg.d_max);
    if (!cfg.inverse_depth) return add_scalar(scale(s, dmax - dmin), dmin);
    // 1/d interpolates between 1/d_max and 1/d_min.
    return reciprocal(add_scalar(scale(s, S(1) / dmin - S(1) / dmax), S(1) / dmax));
  }

  Tensor<S> decode_rgb(const LatentState<S>& latent, const Tensor<S>& queries) const {
    return sigmoid(decode_raw(rgb_dec, latent, queries));
  }
};

}  // namespace mvdepth
