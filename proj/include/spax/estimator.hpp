#pragma once

#include <string>
#include <vector>

#include "spax/bandsplit.hpp"
#include "spax/conditioning.hpp"
#include "spax/dsp.hpp"
#include "spax/nn.hpp"
#include "spax/tensor.hpp"

namespace spax {

struct Model;

// Per band: D -> 4D -> 2*(2Fn), gelu after the first layer, gated linear
// unit on the last (value half times sigmoid of the gate half), leaving 2Fn
// real/imaginary outputs per (channel, frame).
struct BandDecoderParams {
  std::vector<Linear> fc1;
  std::vector<Linear> fc2;

  void build(const std::string& prefix, const BandScheme& scheme,
             std::size_t d_model);
  void collect(ParamList& into);
};

struct DecBandCache {
  Tensor x;        // (C*T, D) input slice
  Tensor h_pre;    // (C*T, 4D)
  Tensor h_act;
  Tensor glu_pre;  // (C*T, 2*2Fn)
};

Tensor decode_band(const Tensor& zn, const Linear& fc1, const Linear& fc2,
                   DecBandCache* cache);

void decode_band_backward(Linear& fc1, Linear& fc2, const DecBandCache& cache,
                          const Tensor& dout, Tensor& dx);

// Exact inverse of split_bands' layout: per-band [re | im] halves interleave
// back into complex bins at the scheme's offsets.
ComplexSpectrogram assemble_spectrum(const std::vector<Tensor>& bands,
                                     const BandScheme& scheme,
                                     std::size_t channels, std::size_t frames);

// 1x1 map over the channel axis: per (t,f), the C re/im pairs map to a single
// re/im pair. merge_layers = 2 inserts a 4C-wide ReLU hidden layer.
struct ChannelMergeParams {
  std::vector<Linear> layers;

  void build(const std::string& prefix, std::size_t channels,
             std::size_t n_layers);
  void collect(ParamList& into);
};

struct MergeCache {
  Tensor x;  // (T*F, 2C)
  Tensor h_pre, h_act;
};

ComplexSpectrogram channel_merge(const ComplexSpectrogram& multi,
                                 const ChannelMergeParams& p,
                                 MergeCache* cache);

void channel_merge_backward(ChannelMergeParams& p, const MergeCache& cache,
                            const ComplexSpectrogram& dmerged,
                            ComplexSpectrogram& dmulti);

// Full inference path: stft, band split/encode, conditioned backbone, band
// decode, assembly, channel merge, istft. Output length equals input length.
FoaWaveform extract(const FoaWaveform& mix, const QueryEmbedding& query,
                    const Model& model);

}  // namespace spax
