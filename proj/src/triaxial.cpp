#include "spax/triaxial.hpp"

#include <stdexcept>

#include "spax/kernels.hpp"

namespace spax {

namespace {

struct AxisShape {
  std::size_t batch;  // folded lanes
  std::size_t seq;    // attention length
};

AxisShape axis_shape(Axis axis, const GridDims& g) {
  switch (axis) {
    case Axis::time:
      return {g.channels * g.bands, g.frames};
    case Axis::band:
      return {g.channels * g.frames, g.bands};
    case Axis::channel:
      return {g.frames * g.bands, g.channels};
  }
  throw std::invalid_argument("bad axis");
}

// Copy the grid (C,T,N,D) into lane-major (B,S,D) order for the given axis.
void gather_axis(const Tensor& z, Axis axis, const GridDims& g, Tensor& buf) {
  const std::size_t D = g.features;
  const AxisShape sh = axis_shape(axis, g);
  if (buf.numel() != z.numel()) buf = Tensor({sh.batch, sh.seq, D});
  const double* src = z.data();
  double* dst = buf.data();
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t t = 0; t < g.frames; ++t)
      for (std::size_t n = 0; n < g.bands; ++n) {
        std::size_t lane, s;
        switch (axis) {
          case Axis::time:
            lane = c * g.bands + n;
            s = t;
            break;
          case Axis::band:
            lane = c * g.frames + t;
            s = n;
            break;
          default:
            lane = t * g.bands + n;
            s = c;
            break;
        }
        const double* zi = src + ((c * g.frames + t) * g.bands + n) * D;
        double* bo = dst + (lane * sh.seq + s) * D;
        for (std::size_t d = 0; d < D; ++d) bo[d] = zi[d];
      }
}

void scatter_axis(const Tensor& buf, Axis axis, const GridDims& g, Tensor& z) {
  const std::size_t D = g.features;
  const AxisShape sh = axis_shape(axis, g);
  const double* src = buf.data();
  double* dst = z.data();
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t t = 0; t < g.frames; ++t)
      for (std::size_t n = 0; n < g.bands; ++n) {
        std::size_t lane, s;
        switch (axis) {
          case Axis::time:
            lane = c * g.bands + n;
            s = t;
            break;
          case Axis::band:
            lane = c * g.frames + t;
            s = n;
            break;
          default:
            lane = t * g.bands + n;
            s = c;
            break;
        }
        const double* bi = src + (lane * sh.seq + s) * D;
        double* zo = dst + ((c * g.frames + t) * g.bands + n) * D;
        for (std::size_t d = 0; d < D; ++d) zo[d] = bi[d];
      }
}

}  // namespace

void rope_rotate(double* vecs, std::size_t count, std::size_t head_dim,
                 const std::int64_t* positions, double theta_base,
                 bool inverse) {
  if (head_dim % 2 != 0)
    throw std::invalid_argument("rope requires an even head_dim");
  // treat the run as one lane of `count` single-head vectors
  kernels::rope_forward(vecs, positions, 1, count, 1, head_dim, theta_base,
                        inverse);
}

void AttentionParams::build(const std::string& prefix, std::size_t d_model,
                            std::size_t n_heads, std::size_t hd) {
  if (hd % 2 != 0)
    throw std::invalid_argument("head_dim must be even for rope");
  heads = n_heads;
  head_dim = hd;
  const std::size_t width = n_heads * hd;
  norm.build(prefix + ".norm", d_model);
  wq.build(prefix + ".wq", d_model, width);
  wk.build(prefix + ".wk", d_model, width);
  wv.build(prefix + ".wv", d_model, width);
  wo.build(prefix + ".wo", width, d_model);
}

void AttentionParams::collect(ParamList& into) {
  norm.collect(into);
  wq.collect(into);
  wk.collect(into);
  wv.collect(into);
  wo.collect(into);
}

void FeedForwardParams::build(const std::string& prefix, std::size_t d_model) {
  norm.build(prefix + ".norm", d_model);
  fc1.build(prefix + ".fc1", d_model, 4 * d_model);
  fc2.build(prefix + ".fc2", 4 * d_model, d_model);
}

void FeedForwardParams::collect(ParamList& into) {
  norm.collect(into);
  fc1.collect(into);
  fc2.collect(into);
}

void BlockParams::build(const std::string& prefix, std::size_t d_model,
                        std::size_t heads, std::size_t head_dim, double theta,
                        bool rope_channel_axis) {
  time_attn.build(prefix + ".time", d_model, heads, head_dim);
  band_attn.build(prefix + ".band", d_model, heads, head_dim);
  chan_attn.build(prefix + ".channel", d_model, heads, head_dim);
  time_attn.theta = band_attn.theta = chan_attn.theta = theta;
  chan_attn.rope = rope_channel_axis;
  ff.build(prefix + ".ff", d_model);
}

void BlockParams::collect(ParamList& into) {
  time_attn.collect(into);
  band_attn.collect(into);
  chan_attn.collect(into);
  ff.collect(into);
}

void axial_attention(Tensor& z, Axis axis, const AttentionParams& p,
                     const GridDims& dims, AttnCache* cache) {
  const AxisShape sh = axis_shape(axis, dims);
  const std::size_t D = dims.features;
  const std::size_t width = p.heads * p.head_dim;
  const std::size_t rows = sh.batch * sh.seq;

  AttnCache local;
  AttnCache& c = cache ? *cache : local;
  gather_axis(z, axis, dims, c.x);
  c.x.shape = {sh.batch, sh.seq, D};

  c.normed = Tensor({sh.batch, sh.seq, D});
  c.inv_rms = Tensor({rows});
  p.norm.forward(c.x.data(), c.normed.data(), c.inv_rms.data(), rows);

  c.q = Tensor({sh.batch, sh.seq, width});
  c.k = Tensor({sh.batch, sh.seq, width});
  c.v = Tensor({sh.batch, sh.seq, width});
  p.wq.forward(c.normed.data(), c.q.data(), rows);
  p.wk.forward(c.normed.data(), c.k.data(), rows);
  p.wv.forward(c.normed.data(), c.v.data(), rows);
  if (p.rope) {
    kernels::rope_forward(c.q.data(), nullptr, sh.batch, sh.seq, p.heads,
                          p.head_dim, p.theta, false);
    kernels::rope_forward(c.k.data(), nullptr, sh.batch, sh.seq, p.heads,
                          p.head_dim, p.theta, false);
  }

  c.probs = Tensor({sh.batch * p.heads, sh.seq, sh.seq});
  c.ctx = Tensor({sh.batch, sh.seq, width});
  kernels::attention_forward(c.q.data(), c.k.data(), c.v.data(),
                             c.probs.data(), c.ctx.data(), sh.batch, sh.seq,
                             p.heads, p.head_dim);

  Tensor y({sh.batch, sh.seq, D});
  p.wo.forward(c.ctx.data(), y.data(), rows);
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] += c.x[i];  // residual
  scatter_axis(y, axis, dims, z);
}

void axial_attention_backward(Tensor& dz, Axis axis, AttentionParams& p,
                              const GridDims& dims, const AttnCache& c) {
  const AxisShape sh = axis_shape(axis, dims);
  const std::size_t D = dims.features;
  const std::size_t width = p.heads * p.head_dim;
  const std::size_t rows = sh.batch * sh.seq;

  Tensor dout({sh.batch, sh.seq, D});
  gather_axis(dz, axis, dims, dout);

  Tensor dctx({sh.batch, sh.seq, width});
  p.wo.backward(c.ctx.data(), dout.data(), dctx.data(), rows);

  Tensor dq({sh.batch, sh.seq, width});
  Tensor dk({sh.batch, sh.seq, width});
  Tensor dv({sh.batch, sh.seq, width});
  kernels::attention_backward(c.q.data(), c.k.data(), c.v.data(),
                              c.probs.data(), dctx.data(), dq.data(),
                              dk.data(), dv.data(), sh.batch, sh.seq, p.heads,
                              p.head_dim);
  if (p.rope) {
    kernels::rope_forward(dq.data(), nullptr, sh.batch, sh.seq, p.heads,
                          p.head_dim, p.theta, true);
    kernels::rope_forward(dk.data(), nullptr, sh.batch, sh.seq, p.heads,
                          p.head_dim, p.theta, true);
  }

  Tensor dnormed({sh.batch, sh.seq, D});
  Tensor tmp({sh.batch, sh.seq, D});
  p.wq.backward(c.normed.data(), dq.data(), dnormed.data(), rows);
  p.wk.backward(c.normed.data(), dk.data(), tmp.data(), rows);
  for (std::size_t i = 0; i < dnormed.numel(); ++i) dnormed[i] += tmp[i];
  p.wv.backward(c.normed.data(), dv.data(), tmp.data(), rows);
  for (std::size_t i = 0; i < dnormed.numel(); ++i) dnormed[i] += tmp[i];

  Tensor dx({sh.batch, sh.seq, D});
  p.norm.backward(c.x.data(), c.inv_rms.data(), dnormed.data(), dx.data(),
                  rows);
  for (std::size_t i = 0; i < dx.numel(); ++i) dx[i] += dout[i];  // residual
  scatter_axis(dx, axis, dims, dz);
}

void feed_forward(Tensor& z, const FeedForwardParams& p, FfCache* cache) {
  const std::size_t D = p.norm.dim;
  const std::size_t rows = z.numel() / D;
  FfCache local;
  FfCache& c = cache ? *cache : local;
  c.x = z;
  c.normed = Tensor({rows, D});
  c.inv_rms = Tensor({rows});
  p.norm.forward(c.x.data(), c.normed.data(), c.inv_rms.data(), rows);
  c.h_pre = Tensor({rows, p.fc1.out});
  c.h_act = Tensor({rows, p.fc1.out});
  p.fc1.forward(c.normed.data(), c.h_pre.data(), rows);
  kernels::gelu_forward(c.h_pre.data(), c.h_act.data(), c.h_pre.numel());
  Tensor y({rows, D});
  p.fc2.forward(c.h_act.data(), y.data(), rows);
  for (std::size_t i = 0; i < z.numel(); ++i) z[i] = c.x[i] + y[i];
}

void feed_forward_backward(Tensor& dz, FeedForwardParams& p,
                           const FfCache& c) {
  const std::size_t D = p.norm.dim;
  const std::size_t rows = dz.numel() / D;
  Tensor dh_act({rows, p.fc1.out});
  p.fc2.backward(c.h_act.data(), dz.data(), dh_act.data(), rows);
  Tensor dh_pre({rows, p.fc1.out});
  kernels::gelu_backward(c.h_pre.data(), dh_act.data(), dh_pre.data(),
                         dh_pre.numel());
  Tensor dnormed({rows, D});
  p.fc1.backward(c.normed.data(), dh_pre.data(), dnormed.data(), rows);
  Tensor dx({rows, D});
  p.norm.backward(c.x.data(), c.inv_rms.data(), dnormed.data(), dx.data(),
                  rows);
  for (std::size_t i = 0; i < dz.numel(); ++i) dz[i] += dx[i];
}

void transformer_block(Tensor& z, const BlockParams& p, const GridDims& dims,
                       BlockCache* cache) {
  axial_attention(z, Axis::time, p.time_attn, dims,
                  cache ? &cache->time : nullptr);
  axial_attention(z, Axis::band, p.band_attn, dims,
                  cache ? &cache->band : nullptr);
  axial_attention(z, Axis::channel, p.chan_attn, dims,
                  cache ? &cache->channel : nullptr);
  feed_forward(z, p.ff, cache ? &cache->ff : nullptr);
}

void transformer_block_backward(Tensor& dz, BlockParams& p,
                                const GridDims& dims, const BlockCache& c) {
  feed_forward_backward(dz, p.ff, c.ff);
  axial_attention_backward(dz, Axis::channel, p.chan_attn, dims, c.channel);
  axial_attention_backward(dz, Axis::band, p.band_attn, dims, c.band);
  axial_attention_backward(dz, Axis::time, p.time_attn, dims, c.time);
}

}  // namespace spax
