#include "spax/estimator.hpp"

#include <stdexcept>
#include <string>

#include "spax/error.hpp"
#include "spax/kernels.hpp"
#include "spax/model.hpp"

namespace spax {

void BandDecoderParams::build(const std::string& prefix,
                              const BandScheme& scheme, std::size_t d_model) {
  fc1.resize(scheme.bands());
  fc2.resize(scheme.bands());
  for (std::size_t n = 0; n < scheme.bands(); ++n) {
    const std::string base = prefix + ".band" + std::to_string(n);
    fc1[n].build(base + ".fc1", d_model, 4 * d_model);
    fc2[n].build(base + ".fc2", 4 * d_model, 2 * (2 * scheme.widths[n]));
  }
}

void BandDecoderParams::collect(ParamList& into) {
  for (std::size_t n = 0; n < fc1.size(); ++n) {
    fc1[n].collect(into);
    fc2[n].collect(into);
  }
}

Tensor decode_band(const Tensor& zn, const Linear& fc1, const Linear& fc2,
                   DecBandCache* cache) {
  if (zn.shape.size() != 2 || zn.shape[1] != fc1.in)
    throw std::invalid_argument("decode_band: input shape mismatch");
  const std::size_t rows = zn.shape[0];
  const std::size_t width = fc2.out / 2;  // 2Fn
  DecBandCache local;
  DecBandCache& c = cache ? *cache : local;
  c.x = zn;
  c.h_pre = Tensor({rows, fc1.out});
  c.h_act = Tensor({rows, fc1.out});
  fc1.forward(c.x.data(), c.h_pre.data(), rows);
  kernels::gelu_forward(c.h_pre.data(), c.h_act.data(), c.h_pre.numel());
  c.glu_pre = Tensor({rows, fc2.out});
  fc2.forward(c.h_act.data(), c.glu_pre.data(), rows);
  Tensor out({rows, width});
  kernels::glu_forward(c.glu_pre.data(), out.data(), rows, width);
  return out;
}

void decode_band_backward(Linear& fc1, Linear& fc2, const DecBandCache& c,
                          const Tensor& dout, Tensor& dx) {
  const std::size_t rows = c.x.shape[0];
  const std::size_t width = fc2.out / 2;
  Tensor dglu_pre({rows, fc2.out});
  kernels::glu_backward(c.glu_pre.data(), dout.data(), dglu_pre.data(), rows,
                        width);
  Tensor dh_act({rows, fc1.out});
  fc2.backward(c.h_act.data(), dglu_pre.data(), dh_act.data(), rows);
  Tensor dh_pre({rows, fc1.out});
  kernels::gelu_backward(c.h_pre.data(), dh_act.data(), dh_pre.data(),
                         dh_pre.numel());
  if (dx.numel() != c.x.numel()) dx = Tensor(c.x.shape);
  fc1.backward(c.x.data(), dh_pre.data(), dx.data(), rows);
}

ComplexSpectrogram assemble_spectrum(const std::vector<Tensor>& bands,
                                     const BandScheme& scheme,
                                     std::size_t channels,
                                     std::size_t frames) {
  if (bands.size() != scheme.bands())
    throw std::invalid_argument("assemble_spectrum: band count mismatch");
  const std::size_t rows = channels * frames;
  const std::size_t bins = scheme.total_bins();
  const auto offsets = scheme.offsets();
  ComplexSpectrogram spec(channels, frames, bins);
  for (std::size_t n = 0; n < bands.size(); ++n) {
    const std::size_t fn = scheme.widths[n];
    if (bands[n].shape.size() != 2 || bands[n].shape[0] != rows ||
        bands[n].shape[1] != 2 * fn)
      throw std::invalid_argument("assemble_spectrum: band " +
                                  std::to_string(n) + " width mismatch");
    for (std::size_t r = 0; r < rows; ++r) {
      const double* src = bands[n].data() + r * 2 * fn;
      std::complex<double>* dst = spec.data.data() + r * bins + offsets[n];
      for (std::size_t j = 0; j < fn; ++j) dst[j] = {src[j], src[fn + j]};
    }
  }
  return spec;
}

void ChannelMergeParams::build(const std::string& prefix,
                               std::size_t channels, std::size_t n_layers) {
  if (n_layers != 1 && n_layers != 2)
    throw std::invalid_argument("channel merge supports 1 or 2 layers");
  layers.clear();
  layers.resize(n_layers);
  if (n_layers == 1) {
    layers[0].build(prefix + ".fc1", 2 * channels, 2);
  } else {
    layers[0].build(prefix + ".fc1", 2 * channels, 4 * channels);
    layers[1].build(prefix + ".fc2", 4 * channels, 2);
  }
}

void ChannelMergeParams::collect(ParamList& into) {
  for (auto& layer : layers) layer.collect(into);
}

ComplexSpectrogram channel_merge(const ComplexSpectrogram& multi,
                                 const ChannelMergeParams& p,
                                 MergeCache* cache) {
  const std::size_t C = multi.channels;
  if (p.layers.empty() || p.layers.front().in != 2 * C)
    throw std::invalid_argument("channel_merge: channel count mismatch");
  const std::size_t rows = multi.frames * multi.bins;
  MergeCache local;
  MergeCache& c = cache ? *cache : local;
  c.x = Tensor({rows, 2 * C});
  for (std::size_t ch = 0; ch < C; ++ch) {
    const std::complex<double>* src = multi.data.data() + ch * rows;
    for (std::size_t r = 0; r < rows; ++r) {
      c.x[r * 2 * C + 2 * ch] = src[r].real();
      c.x[r * 2 * C + 2 * ch + 1] = src[r].imag();
    }
  }
  Tensor y({rows, 2});
  if (p.layers.size() == 1) {
    p.layers[0].forward(c.x.data(), y.data(), rows);
  } else {
    c.h_pre = Tensor({rows, p.layers[0].out});
    c.h_act = Tensor({rows, p.layers[0].out});
    p.layers[0].forward(c.x.data(), c.h_pre.data(), rows);
    kernels::relu_forward(c.h_pre.data(), c.h_act.data(), c.h_pre.numel());
    p.layers[1].forward(c.h_act.data(), y.data(), rows);
  }
  ComplexSpectrogram out(1, multi.frames, multi.bins);
  out.frame_hop = multi.frame_hop;
  out.fft_size = multi.fft_size;
  out.sample_rate = multi.sample_rate;
  for (std::size_t r = 0; r < rows; ++r)
    out.data[r] = {y[r * 2], y[r * 2 + 1]};
  return out;
}

void channel_merge_backward(ChannelMergeParams& p, const MergeCache& c,
                            const ComplexSpectrogram& dmerged,
                            ComplexSpectrogram& dmulti) {
  const std::size_t rows = dmerged.frames * dmerged.bins;
  const std::size_t C = p.layers.front().in / 2;
  Tensor dy({rows, 2});
  for (std::size_t r = 0; r < rows; ++r) {
    dy[r * 2] = dmerged.data[r].real();
    dy[r * 2 + 1] = dmerged.data[r].imag();
  }
  Tensor dx({rows, 2 * C});
  if (p.layers.size() == 1) {
    p.layers[0].backward(c.x.data(), dy.data(), dx.data(), rows);
  } else {
    Tensor dh_act({rows, p.layers[0].out});
    p.layers[1].backward(c.h_act.data(), dy.data(), dh_act.data(), rows);
    Tensor dh_pre({rows, p.layers[0].out});
    kernels::relu_backward(c.h_pre.data(), dh_act.data(), dh_pre.data(),
                           dh_pre.numel());
    p.layers[0].backward(c.x.data(), dh_pre.data(), dx.data(), rows);
  }
  dmulti = ComplexSpectrogram(C, dmerged.frames, dmerged.bins);
  dmulti.frame_hop = dmerged.frame_hop;
  dmulti.fft_size = dmerged.fft_size;
  dmulti.sample_rate = dmerged.sample_rate;
  for (std::size_t ch = 0; ch < C; ++ch) {
    std::complex<double>* dst = dmulti.data.data() + ch * rows;
    for (std::size_t r = 0; r < rows; ++r)
      dst[r] = {dx[r * 2 * C + 2 * ch], dx[r * 2 * C + 2 * ch + 1]};
  }
}

FoaWaveform extract(const FoaWaveform& mix, const QueryEmbedding& query,
                    const Model& model) {
  PipelineCache cache;
  const std::vector<double> est = model_forward(model, mix, query, cache);
  FoaWaveform out(1, est.size(), mix.sample_rate);
  std::copy(est.begin(), est.end(), out.channel(0));
  return out;
}

}  // namespace spax
