#include <doctest.h>

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <vector>

#include "spax/kernels.hpp"
#include "spax/model.hpp"
#include "spax/rng.hpp"
#include "spax/triaxial.hpp"

using namespace spax;

namespace {

void randomize(Param& p, Rng& rng, double scale = 0.3) {
  for (auto& v : p.value.v) v = rng.gaussian() * scale;
}

void randomize_attention(AttentionParams& p, Rng& rng) {
  randomize(p.wq.w, rng);
  randomize(p.wq.b, rng, 0.05);
  randomize(p.wk.w, rng);
  randomize(p.wk.b, rng, 0.05);
  randomize(p.wv.w, rng);
  randomize(p.wv.b, rng, 0.05);
  randomize(p.wo.w, rng);
  randomize(p.wo.b, rng, 0.05);
  for (auto& v : p.norm.gain.value.v) v = rng.uniform(0.6, 1.4);
}

Tensor random_grid(std::size_t c, std::size_t t, std::size_t n, std::size_t d,
                   std::uint64_t seed) {
  Tensor z({c, t, n, d});
  Rng rng(seed);
  for (auto& v : z.v) v = rng.gaussian();
  return z;
}

// ----- independent naive reimplementation (plain loops, no kernels) -----

using Vec = std::vector<double>;

Vec naive_rmsnorm(const Vec& x, const Vec& gain, double eps) {
  double ss = 0.0;
  for (double v : x) ss += v * v;
  const double u = 1.0 / std::sqrt(ss / static_cast<double>(x.size()) + eps);
  Vec y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = gain[i] * x[i] * u;
  return y;
}

Vec naive_linear(const Vec& x, const Param& w, const Param& b,
                 std::size_t in, std::size_t out) {
  Vec y(out);
  for (std::size_t o = 0; o < out; ++o) {
    double acc = b.value[o];
    for (std::size_t i = 0; i < in; ++i) acc += w.value[o * in + i] * x[i];
    y[o] = acc;
  }
  return y;
}

void naive_rope(Vec& v, std::size_t pos, std::size_t head_dim, double theta) {
  for (std::size_t i = 0; i < head_dim / 2; ++i) {
    const double ang =
        static_cast<double>(pos) *
        std::pow(theta, -2.0 * static_cast<double>(i) /
                             static_cast<double>(head_dim));
    const double c = std::cos(ang), s = std::sin(ang);
    const double a = v[2 * i], b = v[2 * i + 1];
    v[2 * i] = a * c - b * s;
    v[2 * i + 1] = a * s + b * c;
  }
}

// one attention pass over a sequence of D-vectors (single folded lane)
std::vector<Vec> naive_attention_lane(const std::vector<Vec>& xs,
                                      const AttentionParams& p,
                                      std::size_t d_model) {
  const std::size_t S = xs.size();
  const std::size_t A = p.heads * p.head_dim;
  std::vector<Vec> q(S), k(S), v(S);
  for (std::size_t s = 0; s < S; ++s) {
    const Vec normed = naive_rmsnorm(xs[s], p.norm.gain.value.v, p.norm.eps);
    q[s] = naive_linear(normed, p.wq.w, p.wq.b, d_model, A);
    k[s] = naive_linear(normed, p.wk.w, p.wk.b, d_model, A);
    v[s] = naive_linear(normed, p.wv.w, p.wv.b, d_model, A);
    if (p.rope) {
      for (std::size_t h = 0; h < p.heads; ++h) {
        Vec qh(q[s].begin() + h * p.head_dim,
               q[s].begin() + (h + 1) * p.head_dim);
        Vec kh(k[s].begin() + h * p.head_dim,
               k[s].begin() + (h + 1) * p.head_dim);
        naive_rope(qh, s, p.head_dim, p.theta);
        naive_rope(kh, s, p.head_dim, p.theta);
        std::copy(qh.begin(), qh.end(), q[s].begin() + h * p.head_dim);
        std::copy(kh.begin(), kh.end(), k[s].begin() + h * p.head_dim);
      }
    }
  }
  std::vector<Vec> out(S, Vec(d_model));
  for (std::size_t s = 0; s < S; ++s) {
    Vec ctx(A, 0.0);
    for (std::size_t h = 0; h < p.heads; ++h) {
      Vec logits(S);
      double mx = -1e300;
      for (std::size_t t = 0; t < S; ++t) {
        double acc = 0.0;
        for (std::size_t dd = 0; dd < p.head_dim; ++dd)
          acc += q[s][h * p.head_dim + dd] * k[t][h * p.head_dim + dd];
        logits[t] = acc / std::sqrt(static_cast<double>(p.head_dim));
        mx = std::max(mx, logits[t]);
      }
      double z = 0.0;
      for (std::size_t t = 0; t < S; ++t) {
        logits[t] = std::exp(logits[t] - mx);
        z += logits[t];
      }
      for (std::size_t t = 0; t < S; ++t)
        for (std::size_t dd = 0; dd < p.head_dim; ++dd)
          ctx[h * p.head_dim + dd] += logits[t] / z * v[t][h * p.head_dim + dd];
    }
    const Vec y = naive_linear(ctx, p.wo.w, p.wo.b, A, d_model);
    for (std::size_t dd = 0; dd < d_model; ++dd) out[s][dd] = xs[s][dd] + y[dd];
  }
  return out;
}

double naive_gelu(double x) {
  return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
}

Tensor naive_block(const Tensor& zin, const BlockParams& p,
                   const GridDims& g) {
  Tensor z = zin;
  auto at = [&](Tensor& zz, std::size_t c, std::size_t t, std::size_t n) {
    return zz.data() + ((c * g.frames + t) * g.bands + n) * g.features;
  };
  auto run_axis = [&](const AttentionParams& ap, Axis axis) {
    Tensor next = z;
    auto lane_loop = [&](auto&& get_xs, auto&& put_ys, std::size_t lanes,
                         std::size_t S) {
      for (std::size_t lane = 0; lane < lanes; ++lane) {
        std::vector<Vec> xs(S);
        for (std::size_t s = 0; s < S; ++s) xs[s] = get_xs(lane, s);
        const auto ys = naive_attention_lane(xs, ap, g.features);
        for (std::size_t s = 0; s < S; ++s) put_ys(lane, s, ys[s]);
      }
    };
    if (axis == Axis::time) {
      lane_loop(
          [&](std::size_t lane, std::size_t s) {
            const std::size_t c = lane / g.bands, n = lane % g.bands;
            return Vec(at(z, c, s, n), at(z, c, s, n) + g.features);
          },
          [&](std::size_t lane, std::size_t s, const Vec& y) {
            const std::size_t c = lane / g.bands, n = lane % g.bands;
            std::copy(y.begin(), y.end(), at(next, c, s, n));
          },
          g.channels * g.bands, g.frames);
    } else if (axis == Axis::band) {
      lane_loop(
          [&](std::size_t lane, std::size_t s) {
            const std::size_t c = lane / g.frames, t = lane % g.frames;
            return Vec(at(z, c, t, s), at(z, c, t, s) + g.features);
          },
          [&](std::size_t lane, std::size_t s, const Vec& y) {
            const std::size_t c = lane / g.frames, t = lane % g.frames;
            std::copy(y.begin(), y.end(), at(next, c, t, s));
          },
          g.channels * g.frames, g.bands);
    } else {
      lane_loop(
          [&](std::size_t lane, std::size_t s) {
            const std::size_t t = lane / g.bands, n = lane % g.bands;
            return Vec(at(z, s, t, n), at(z, s, t, n) + g.features);
          },
          [&](std::size_t lane, std::size_t s, const Vec& y) {
            const std::size_t t = lane / g.bands, n = lane % g.bands;
            std::copy(y.begin(), y.end(), at(next, s, t, n));
          },
          g.frames * g.bands, g.channels);
    }
    z = std::move(next);
  };
  run_axis(p.time_attn, Axis::time);
  run_axis(p.band_attn, Axis::band);
  run_axis(p.chan_attn, Axis::channel);

  // feedforward per position
  const std::size_t rows = g.channels * g.frames * g.bands;
  for (std::size_t r = 0; r < rows; ++r) {
    Vec x(z.data() + r * g.features, z.data() + (r + 1) * g.features);
    Vec normed = naive_rmsnorm(x, p.ff.norm.gain.value.v, p.ff.norm.eps);
    Vec h = naive_linear(normed, p.ff.fc1.w, p.ff.fc1.b, g.features,
                         4 * g.features);
    for (auto& v : h) v = naive_gelu(v);
    Vec y = naive_linear(h, p.ff.fc2.w, p.ff.fc2.b, 4 * g.features,
                         g.features);
    for (std::size_t d = 0; d < g.features; ++d)
      z[r * g.features + d] = x[d] + y[d];
  }
  return z;
}

}  // namespace

TEST_CASE("rotation at position zero is the identity") {
  Rng rng(1);
  std::vector<double> v(8);
  for (auto& x : v) x = rng.gaussian();
  std::vector<double> rotated = v;
  const std::int64_t pos = 0;
  rope_rotate(rotated.data(), 1, 8, &pos, 10000.0);
  for (std::size_t i = 0; i < 8; ++i) CHECK(rotated[i] == v[i]);
}

TEST_CASE("two-dimensional rotation matches the closed form") {
  for (const std::int64_t m : {1, 3, 10}) {
    std::vector<double> v{0.8, -0.4};
    std::vector<double> rotated = v;
    rope_rotate(rotated.data(), 1, 2, &m, 12345.0);  // theta^0 = 1 at i = 0
    const double c = std::cos(static_cast<double>(m));
    const double s = std::sin(static_cast<double>(m));
    CHECK(rotated[0] == doctest::Approx(v[0] * c - v[1] * s).epsilon(1e-12));
    CHECK(rotated[1] == doctest::Approx(v[0] * s + v[1] * c).epsilon(1e-12));
  }
}

TEST_CASE("rotated dot products depend only on relative position") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> q(16), k(16);
    for (auto& x : q) x = rng.gaussian();
    for (auto& x : k) x = rng.gaussian();
    const std::int64_t m = static_cast<std::int64_t>(rng.index(50));
    const std::int64_t n = static_cast<std::int64_t>(rng.index(50));
    const std::int64_t shift = static_cast<std::int64_t>(rng.index(30));

    auto dot_at = [&](std::int64_t pq, std::int64_t pk) {
      std::vector<double> qr = q, kr = k;
      rope_rotate(qr.data(), 1, 16, &pq, 10000.0);
      rope_rotate(kr.data(), 1, 16, &pk, 10000.0);
      double acc = 0.0;
      for (std::size_t i = 0; i < 16; ++i) acc += qr[i] * kr[i];
      return acc;
    };
    CHECK(dot_at(m, n) ==
          doctest::Approx(dot_at(m + shift, n + shift)).epsilon(1e-10));
  }
}

TEST_CASE("odd head width is rejected") {
  std::vector<double> v(3);
  CHECK_THROWS_AS(rope_rotate(v.data(), 1, 3, nullptr, 10000.0),
                  std::invalid_argument);
}

TEST_CASE("singleton axis reduces to projection plus residual") {
  // channel attention with C = 1: softmax over one logit is 1
  const GridDims g{1, 2, 3, 4};
  AttentionParams p;
  p.build("attn", 4, 2, 2);
  Rng rng(3);
  randomize_attention(p, rng);

  Tensor z = random_grid(1, 2, 3, 4, 4);
  Tensor out = z;
  axial_attention(out, Axis::channel, p, g, nullptr);

  for (std::size_t r = 0; r < 6; ++r) {
    const Vec x(z.data() + r * 4, z.data() + (r + 1) * 4);
    const Vec normed = naive_rmsnorm(x, p.norm.gain.value.v, p.norm.eps);
    const Vec v = naive_linear(normed, p.wv.w, p.wv.b, 4, 4);
    const Vec y = naive_linear(v, p.wo.w, p.wo.b, 4, 4);
    for (std::size_t d = 0; d < 4; ++d)
      CHECK(out[r * 4 + d] == doctest::Approx(x[d] + y[d]).epsilon(1e-12));
  }
}

TEST_CASE("uniform values make attention ignore the scores") {
  const GridDims g{2, 5, 3, 4};
  AttentionParams p;
  p.build("attn", 4, 2, 2);
  Rng rng(5);
  randomize_attention(p, rng);
  p.wv.w.value.zero();  // value projection collapses to its bias
  for (auto& v : p.wv.b.value.v) v = rng.gaussian();

  Tensor z = random_grid(2, 5, 3, 4, 6);
  Tensor out = z;
  axial_attention(out, Axis::time, p, g, nullptr);

  // attention emits bias -> wo(bias), the same delta at every grid point
  const Vec y = naive_linear(p.wv.b.value.v, p.wo.w, p.wo.b, 4, 4);
  for (std::size_t r = 0; r < z.numel() / 4; ++r)
    for (std::size_t d = 0; d < 4; ++d)
      CHECK(out[r * 4 + d] ==
            doctest::Approx(z[r * 4 + d] + y[d]).epsilon(1e-10));
}

TEST_CASE("two-position attention matches a hand computation") {
  const GridDims g{1, 2, 1, 4};  // sequence of length 2 on the time axis
  AttentionParams p;
  p.build("attn", 4, 1, 4);
  Rng rng(7);
  randomize_attention(p, rng);

  Tensor z = random_grid(1, 2, 1, 4, 8);
  Tensor out = z;
  axial_attention(out, Axis::time, p, g, nullptr);

  std::vector<Vec> xs{Vec(z.data(), z.data() + 4), Vec(z.data() + 4, z.data() + 8)};
  const auto expect = naive_attention_lane(xs, p, 4);
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t d = 0; d < 4; ++d)
      CHECK(out[s * 4 + d] == doctest::Approx(expect[s][d]).epsilon(1e-12));
}

TEST_CASE("zero output projections make the block an identity") {
  BlockParams p;
  p.build("block", 8, 2, 4, 10000.0, true);
  Rng rng(9);
  randomize_attention(p.time_attn, rng);
  randomize_attention(p.band_attn, rng);
  randomize_attention(p.chan_attn, rng);
  randomize(p.ff.fc1.w, rng);
  randomize(p.ff.fc1.b, rng);
  p.time_attn.wo.w.value.zero();
  p.time_attn.wo.b.value.zero();
  p.band_attn.wo.w.value.zero();
  p.band_attn.wo.b.value.zero();
  p.chan_attn.wo.w.value.zero();
  p.chan_attn.wo.b.value.zero();
  p.ff.fc2.w.value.zero();
  p.ff.fc2.b.value.zero();

  const GridDims g{4, 3, 2, 8};
  const Tensor z = random_grid(4, 3, 2, 8, 10);
  Tensor out = z;
  transformer_block(out, p, g, nullptr);
  double max_dev = 0.0;
  for (std::size_t i = 0; i < z.numel(); ++i)
    max_dev = std::max(max_dev, std::abs(out[i] - z[i]));
  CHECK(max_dev == 0.0);
}

TEST_CASE("transformer block matches the naive reimplementation") {
  const GridDims g{2, 3, 2, 6};
  BlockParams p;
  p.build("block", 6, 2, 4, 10000.0, true);
  Rng rng(11);
  randomize_attention(p.time_attn, rng);
  randomize_attention(p.band_attn, rng);
  randomize_attention(p.chan_attn, rng);
  randomize(p.ff.fc1.w, rng);
  randomize(p.ff.fc1.b, rng, 0.05);
  randomize(p.ff.fc2.w, rng);
  randomize(p.ff.fc2.b, rng, 0.05);
  for (auto& v : p.ff.norm.gain.value.v) v = rng.uniform(0.6, 1.4);

  const Tensor z = random_grid(2, 3, 2, 6, 12);
  Tensor got = z;
  transformer_block(got, p, g, nullptr);
  const Tensor expect = naive_block(z, p, g);
  REQUIRE(got.numel() == expect.numel());
  for (std::size_t i = 0; i < got.numel(); ++i)
    CHECK(got[i] == doctest::Approx(expect[i]).epsilon(1e-10));
}

TEST_CASE("with other axes silenced, time attention stays inside its lane") {
  BlockParams p;
  p.build("block", 6, 2, 2, 10000.0, true);
  Rng rng(13);
  randomize_attention(p.time_attn, rng);
  randomize_attention(p.band_attn, rng);
  randomize_attention(p.chan_attn, rng);
  randomize(p.ff.fc1.w, rng);
  randomize(p.ff.fc2.w, rng);
  p.band_attn.wo.w.value.zero();
  p.band_attn.wo.b.value.zero();
  p.chan_attn.wo.w.value.zero();
  p.chan_attn.wo.b.value.zero();

  const GridDims g{2, 4, 3, 6};
  const Tensor z1 = random_grid(2, 4, 3, 6, 14);
  Tensor z2 = z1;
  // bump one frame of lane (c=1, n=2)
  for (std::size_t d = 0; d < 6; ++d)
    z2[((1 * 4 + 2) * 3 + 2) * 6 + d] += 0.25;

  Tensor o1 = z1, o2 = z2;
  transformer_block(o1, p, g, nullptr);
  transformer_block(o2, p, g, nullptr);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t t = 0; t < 4; ++t)
      for (std::size_t n = 0; n < 3; ++n) {
        if (c == 1 && n == 2) continue;
        for (std::size_t d = 0; d < 6; ++d) {
          const std::size_t i = ((c * 4 + t) * 3 + n) * 6 + d;
          CHECK(o1[i] == o2[i]);
        }
      }
}

TEST_CASE("channel attention commutes with channel permutations") {
  AttentionParams p;
  p.build("attn", 6, 2, 2);
  p.rope = false;  // positions would otherwise distinguish the channels
  Rng rng(15);
  randomize_attention(p, rng);

  const GridDims g{4, 2, 3, 6};
  const Tensor z = random_grid(4, 2, 3, 6, 16);
  const std::size_t perm[4] = {2, 0, 3, 1};
  Tensor zp({4, 2, 3, 6});
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t t = 0; t < 2; ++t)
      for (std::size_t n = 0; n < 3; ++n)
        for (std::size_t d = 0; d < 6; ++d)
          zp[((perm[c] * 2 + t) * 3 + n) * 6 + d] =
              z[((c * 2 + t) * 3 + n) * 6 + d];

  Tensor out = z, outp = zp;
  axial_attention(out, Axis::channel, p, g, nullptr);
  axial_attention(outp, Axis::channel, p, g, nullptr);
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t t = 0; t < 2; ++t)
      for (std::size_t n = 0; n < 3; ++n)
        for (std::size_t d = 0; d < 6; ++d)
          CHECK(outp[((perm[c] * 2 + t) * 3 + n) * 6 + d] ==
                doctest::Approx(out[((c * 2 + t) * 3 + n) * 6 + d])
                    .epsilon(1e-12));
}

TEST_CASE("attention logits are invariant under a common position shift") {
  Rng rng(17);
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t hd = 8;
    std::vector<double> q(hd), k(hd);
    for (auto& x : q) x = rng.gaussian();
    for (auto& x : k) x = rng.gaussian();
    const std::int64_t m = static_cast<std::int64_t>(rng.index(100));
    const std::int64_t n = static_cast<std::int64_t>(rng.index(100));
    const std::int64_t s = static_cast<std::int64_t>(rng.index(64));

    auto logit = [&](std::int64_t pq, std::int64_t pk) {
      std::vector<double> qr = q, kr = k;
      rope_rotate(qr.data(), 1, hd, &pq, 10000.0);
      rope_rotate(kr.data(), 1, hd, &pk, 10000.0);
      double acc = 0.0;
      for (std::size_t i = 0; i < hd; ++i) acc += qr[i] * kr[i];
      return acc / std::sqrt(static_cast<double>(hd));
    };
    const std::int64_t ms = m + s, ns = n + s;
    CHECK(std::abs(logit(m, n) - logit(ms, ns)) < 1e-8);
    ++checked;
  }
  CHECK(checked == 100);
}

TEST_CASE("empty backbone is just the first modulation site") {
  ModelConfig cfg;
  cfg.blocks = 0;
  Model model;
  model.build(cfg);
  model.init_weights(21);

  Rng rng(22);
  QueryEmbedding e;
  e.v = random_unit_vector(rng, cfg.query_dim);

  const Tensor z = random_grid(cfg.channels, 3, model.band_scheme.bands(),
                               cfg.hidden, 23);
  PipelineCache cache;
  const Tensor out = backbone(model, z, e, cache);

  const FilmParams p = film_params(e, model.films[0], nullptr);
  Tensor expect;
  film_apply(z, p, expect);
  REQUIRE(out.numel() == expect.numel());
  for (std::size_t i = 0; i < out.numel(); ++i) CHECK(out[i] == expect[i]);
}

TEST_CASE("identity modulation plus zero-residual blocks preserve the grid") {
  ModelConfig cfg;
  cfg.blocks = 2;
  Model model;
  model.build(cfg);  // weights stay zero
  for (auto& film : model.films) {
    const std::size_t dm = film.fc2.out / 2;
    for (std::size_t i = 0; i < dm; ++i) film.fc2.b.value[i] = 1.0;
  }

  Rng rng(24);
  QueryEmbedding e;
  e.v = random_unit_vector(rng, cfg.query_dim);
  const Tensor z = random_grid(cfg.channels, 4, model.band_scheme.bands(),
                               cfg.hidden, 25);
  PipelineCache cache;
  const Tensor out = backbone(model, z, e, cache);
  for (std::size_t i = 0; i < z.numel(); ++i) CHECK(out[i] == z[i]);
}

TEST_CASE("the query embedding actually steers the backbone") {
  ModelConfig cfg;
  Model model;
  model.build(cfg);
  model.init_weights(31);

  Rng rng(32);
  QueryEmbedding e1, e2;
  e1.v = random_unit_vector(rng, cfg.query_dim);
  e2.v = random_unit_vector(rng, cfg.query_dim);

  const Tensor z = random_grid(cfg.channels, 3, model.band_scheme.bands(),
                               cfg.hidden, 33);
  PipelineCache c1, c2;
  const Tensor o1 = backbone(model, z, e1, c1);
  const Tensor o2 = backbone(model, z, e2, c2);
  CHECK(o1.shape == z.shape);
  double max_diff = 0.0;
  for (std::size_t i = 0; i < o1.numel(); ++i)
    max_diff = std::max(max_diff, std::abs(o1[i] - o2[i]));
  CHECK(max_diff > 0.0);
}
