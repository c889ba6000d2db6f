#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mvdepth/model.hpp"
#include "test_util.hpp"

using namespace mvdepth;
using Td = Tensor<double>;
using V3 = Vec3<double>;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.latent_slots = 8;
  cfg.latent_dim = 16;
  cfg.blocks = 1;
  cfg.heads = 2;
  cfg.head_dim = 8;
  cfg.mlp_ratio = 1;
  cfg.image.stage_channels = {2, 2, 2};
  cfg.embedding.k_origin = 1;
  cfg.embedding.k_ray = 1;
  return cfg;
}

Camera<double> camera_at(int w, int h, V3 t) {
  Camera<double> c;
  c.width = w;
  c.height = h;
  c.intrinsics = {double(w), double(w), w / 2.0, h / 2.0};
  c.pose.translation = t;
  return c;
}

ViewInput<double> random_view(int w, int h, V3 t, Rng& rng) {
  ViewInput<double> v;
  v.rgb = Td({static_cast<std::int64_t>(w) * h, 3},
             mvtest::random_values(static_cast<std::size_t>(w) * h * 3, rng, 0, 1));
  v.camera = camera_at(w, h, t);
  return v;
}

Td random_tokens(const ModelConfig& cfg, std::int64_t n, Rng& rng) {
  return Td({n, cfg.token_width()},
            mvtest::random_values(static_cast<std::size_t>(n * cfg.token_width()), rng));
}

}  // namespace

TEST_CASE("latent shape is fixed for any token count") {
  Rng rng(1);
  ModelConfig cfg = tiny_config();
  Model<double> model(cfg, rng);
  for (std::int64_t n : {16, 64, 256}) {
    auto lat = model.encode(random_tokens(cfg, n, rng));
    CHECK(lat.shape() == Shape{cfg.latent_slots, cfg.latent_dim});
  }
}

TEST_CASE("latent shape is fixed across 1..6 input frames") {
  Rng rng(2);
  ModelConfig cfg = tiny_config();
  Model<double> model(cfg, rng);
  std::vector<ViewInput<double>> views;
  for (int f = 1; f <= 6; ++f) {
    views.push_back(random_view(8, 8, V3(0.1 * f, 0, 0), rng));
    auto tokens = assemble_encoder_tokens(views, model.image_enc, cfg.embedding);
    CHECK(tokens.dim(0) == 4 * f);
    auto lat = model.encode(tokens);
    CHECK(lat.shape() == Shape{cfg.latent_slots, cfg.latent_dim});
  }
}

TEST_CASE("token width mismatch is rejected") {
  Rng rng(3);
  Model<double> model(tiny_config(), rng);
  CHECK_THROWS_AS(model.encode(Td({16, 5})), ShapeError);
}

TEST_CASE("duplicating every token leaves the encoded latent unchanged") {
  Rng rng(5);
  ModelConfig cfg = tiny_config();
  Model<double> model(cfg, rng);
  auto tokens = random_tokens(cfg, 32, rng);
  auto doubled = concat<double>({tokens, tokens}, 0);
  auto a = model.encode(tokens);
  auto b = model.encode(doubled);
  double diff = 0;
  for (std::size_t i = 0; i < a.values().size(); ++i)
    diff = std::max(diff, std::abs(a.values()[i] - b.values()[i]));
  CHECK(diff < 1e-9);
}

TEST_CASE("permuting input frames leaves the latent unchanged") {
  Rng rng(6);
  ModelConfig cfg = tiny_config();
  Model<double> model(cfg, rng);
  auto v1 = random_view(8, 8, V3(0, 0, 0), rng);
  auto v2 = random_view(8, 8, V3(0.4, 0.1, 0), rng);
  auto v3 = random_view(8, 8, V3(-0.2, 0.3, 0.1), rng);
  auto a = model.encode(assemble_encoder_tokens<double>({v1, v2, v3}, model.image_enc, cfg.embedding));
  auto b = model.encode(assemble_encoder_tokens<double>({v3, v1, v2}, model.image_enc, cfg.embedding));
  double diff = 0;
  for (std::size_t i = 0; i < a.values().size(); ++i)
    diff = std::max(diff, std::abs(a.values()[i] - b.values()[i]));
  CHECK(diff < 1e-6);
}

TEST_CASE("depth decodes strictly inside the configured range") {
  Rng rng(7);
  ModelConfig cfg = tiny_config();
  Model<double> model(cfg, rng);
  auto lat = model.encode(random_tokens(cfg, 16, rng));
  auto queries = assemble_decoder_queries(camera_at(8, 8, V3(0.2, 0, 0)), 8, 8, cfg.embedding);
  auto d = model.decode_depth(lat, queries);
  CHECK(d.shape() == Shape{64, 1});
  for (double v : d.values()) {
    CHECK(v > cfg.d_min);
    CHECK(v < cfg.d_max);
  }
  auto rgb = model.decode_rgb(lat, queries);
  CHECK(rgb.shape() == Shape{64, 3});
  for (double v : rgb.values()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("zero pre-activation decodes to the middle of the depth range") {
  Rng rng(8);
  ModelConfig cfg = tiny_config();
  Model<double> model(cfg, rng);
  auto& head_w = model.store.at("dec.depth.head.w").value.values();
  std::fill(head_w.begin(), head_w.end(), 0.0);
  auto lat = model.encode(random_tokens(cfg, 16, rng));
  auto queries = assemble_decoder_queries(camera_at(4, 4, V3(0, 0, 0)), 4, 4, cfg.embedding);
  auto d = model.decode_depth(lat, queries);
  for (double v : d.values())
    CHECK(v == doctest::Approx((cfg.d_min + cfg.d_max) / 2).epsilon(1e-12));
}

TEST_CASE("inverse-depth variant also stays inside the range") {
  Rng rng(9);
  ModelConfig cfg = tiny_config();
  cfg.inverse_depth = true;
  Model<double> model(cfg, rng);
  auto lat = model.encode(random_tokens(cfg, 16, rng));
  auto queries = assemble_decoder_queries(camera_at(4, 4, V3(0, 0, 0)), 4, 4, cfg.embedding);
  const auto d = model.decode_depth(lat, queries);
  for (double v : d.values()) {
    CHECK(v > cfg.d_min);
    CHECK(v < cfg.d_max);
  }
}

TEST_CASE("decoders are pure functions of latent and queries") {
  Rng rng(10);
  ModelConfig cfg = tiny_config();
  Model<double> model(cfg, rng);
  auto lat = model.encode(random_tokens(cfg, 24, rng));
  auto queries = assemble_decoder_queries(camera_at(8, 8, V3(0.1, 0.2, 0)), 8, 8, cfg.embedding);
  auto a = model.decode_depth(lat, queries);
  auto b = model.decode_depth(lat, queries);
  CHECK(a.values() == b.values());  // bit-identical
}

TEST_CASE("sparse decode equals row-gathered dense decode") {
  Rng rng(11);
  ModelConfig cfg = tiny_config();
  Model<double> model(cfg, rng);
  auto lat = model.encode(random_tokens(cfg, 24, rng));
  Camera<double> cam = camera_at(8, 8, V3(0.3, -0.1, 0.2));
  auto dense = model.decode_depth(lat, assemble_decoder_queries(cam, 8, 8, cfg.embedding));
  std::vector<std::int64_t> subset{3, 17, 42, 63, 0};
  auto sparse =
      model.decode_depth(lat, assemble_decoder_queries(cam, 8, 8, cfg.embedding, &subset));
  REQUIRE(sparse.dim(0) == 5);
  for (std::size_t i = 0; i < subset.size(); ++i)
    CHECK(std::abs(sparse.values()[i] -
                   dense.values()[static_cast<std::size_t>(subset[i])]) < 1e-12);

  auto rgb_dense = model.decode_rgb(lat, assemble_decoder_queries(cam, 8, 8, cfg.embedding));
  auto rgb_sparse =
      model.decode_rgb(lat, assemble_decoder_queries(cam, 8, 8, cfg.embedding, &subset));
  for (std::size_t i = 0; i < subset.size(); ++i)
    for (int c = 0; c < 3; ++c)
      CHECK(std::abs(rgb_sparse.values()[3 * i + c] -
                     rgb_dense.values()[static_cast<std::size_t>(3 * subset[i] + c)]) < 1e-12);
}

TEST_CASE("gradient reaches every parameter") {
  Rng rng(12);
  ModelConfig cfg = tiny_config();
  Model<double> model(cfg, rng);
  auto v1 = random_view(8, 8, V3(0, 0, 0), rng);
  auto v2 = random_view(8, 8, V3(0.2, 0, 0), rng);

  Tape<double> tape;
  model.store.attach(tape);
  auto tokens = assemble_encoder_tokens<double>({v1, v2}, model.image_enc, cfg.embedding);
  auto lat = model.encode(tokens);
  auto queries = assemble_decoder_queries(v1.camera, 8, 8, cfg.embedding);
  auto loss =
      add(mean(model.decode_depth(lat, queries)), mean(model.decode_rgb(lat, queries)));
  tape.backward(loss);

  for (auto& entry : model.store) {
    auto g = tape.grad(entry.tracked);
    double asum = 0;
    for (double x : g) asum += std::abs(x);
    CAPTURE(entry.name);
    CHECK(asum > 0.0);
  }
  model.store.detach();
}

TEST_CASE("end-to-end gradients match finite differences") {
  Rng rng(13);
  ModelConfig cfg = tiny_config();
  Model<double> model(cfg, rng);
  // 4x4 input image: a single token per frame.
  auto view = random_view(4, 4, V3(0.1, -0.1, 0), rng);
  auto queries = assemble_decoder_queries(view.camera, 4, 4, cfg.embedding);
  Td target({16, 1}, mvtest::random_values(16, rng, 0.5, 5.0));

  auto forward = [&]() {
    auto tokens = assemble_encoder_tokens<double>({view}, model.image_enc, cfg.embedding);
    auto lat = model.encode(tokens);
    auto d = model.decode_depth(lat, queries);
    auto r = model.decode_rgb(lat, queries);
    return add(mean(square(sub(d, target))), mean(r));
  };

  Tape<double> tape;
  model.store.attach(tape);
  tape.backward(forward());
  std::vector<std::vector<double>> analytic;
  for (auto& entry : model.store) {
    auto g = tape.grad(entry.tracked);
    analytic.emplace_back(g.begin(), g.end());
  }
  model.store.detach();

  std::size_t idx = 0;
  for (auto& entry : model.store) {
    auto& vals = entry.value.values();
    auto fd = mvtest::fd_gradient(
        [&](const std::vector<double>& v) {
          auto saved = vals;
          vals = v;
          const double out = forward().value();
          vals = saved;
          return out;
        },
        vals);
    CAPTURE(entry.name);
    CHECK_MESSAGE(mvtest::grad_close(analytic[idx], fd, 1e-3), "param " << entry.name);
    ++idx;
  }
}

TEST_CASE("encoding cost does not depend on decode count and vice versa") {
  Rng rng(14);
  ModelConfig cfg = tiny_config();
  Model<double> model(cfg, rng);
  Camera<double> cam = camera_at(8, 8, V3(0, 0, 0));
  auto queries = assemble_decoder_queries(cam, 8, 8, cfg.embedding);

  auto count_ops = [&](std::int64_t tokens, int decodes) {
    Tape<double> tape;
    model.store.attach(tape);
    auto lat = model.encode(tape.leaf(random_tokens(cfg, tokens, rng)));
    const std::int64_t encode_ops = tape.op_count();
    for (int i = 0; i < decodes; ++i) (void)model.decode_depth(lat, queries);
    model.store.detach();
    return std::pair(encode_ops, tape.op_count() - encode_ops);
  };

  auto [enc_a, dec_a1] = count_ops(16, 1);
  auto [enc_b, dec_b3] = count_ops(16, 3);
  CHECK(enc_a == enc_b);
  CHECK(dec_b3 == 3 * dec_a1);  // decode-many costs scale linearly

  // Number of recorded decode ops is independent of how many tokens were
  // encoded.
  auto [enc_c, dec_c1] = count_ops(128, 1);
  CHECK(dec_c1 == dec_a1);
  CHECK(enc_c == enc_a);
}
