#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spax/bandsplit.hpp"
#include "spax/conditioning.hpp"
#include "spax/dsp.hpp"
#include "spax/estimator.hpp"
#include "spax/nn.hpp"
#include "spax/triaxial.hpp"

namespace spax {

struct ModelConfig {
  std::size_t channels = 4;
  std::size_t sample_rate = 8000;
  std::size_t fft_size = 256;
  std::size_t hop = 128;
  std::size_t hidden = 8;      // D
  std::size_t blocks = 1;      // L
  std::size_t heads = 2;
  std::size_t head_dim = 4;
  std::size_t query_dim = 16;  // d
  std::size_t film_hidden = 0;  // 0 -> 2*hidden
  std::vector<std::size_t> bands;  // empty -> default scheme for fft_size
  double rope_theta = 10000.0;
  bool rope_channel_axis = true;
  std::size_t merge_layers = 1;

  void validate() const;
  std::size_t film_h() const { return film_hidden ? film_hidden : 2 * hidden; }
  BandScheme scheme() const;

  // full-scale configuration: 32 kHz, 2048/1024 analysis, D=128, 8 blocks,
  // 4 heads of 64, d=512
  static ModelConfig full_scale();

  // canonical text form embedded in checkpoints
  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);
};

struct Model {
  ModelConfig cfg;
  BandScheme band_scheme;
  BandEncoderParams encoder;
  std::vector<FilmGenerator> films;  // blocks + 1 injection sites
  std::vector<BlockParams> blocks;
  BandDecoderParams decoder;
  ChannelMergeParams merge;

  void build(const ModelConfig& config);
  void init_weights(std::uint64_t seed);

  // Fresh pointer collection in a deterministic order; safe after copies.
  ParamList param_list();
  std::size_t param_count();
  void zero_grads();
};

// Single-file checkpoint: magic, config text header, then (path, shape,
// float32 payload) per parameter. Loading rebuilds the model from the header
// and validates every tensor shape.
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

struct PipelineCache {
  GridDims dims;
  std::size_t input_len = 0;
  QueryEmbedding query;
  BandEncoderCache encoder;
  struct FilmSite {
    Tensor z_in;
    FilmGenCache gen;
    FilmParams params;
  };
  std::vector<FilmSite> films;
  std::vector<BlockCache> blocks;
  Tensor z_final;
  std::vector<DecBandCache> dec;
  ComplexSpectrogram s_multi;  // assembled estimate, C x T x F
  MergeCache merge;
  ComplexSpectrogram merged;  // 1 x T x F
  std::vector<double> est;    // output waveform
};

// Query-conditioned backbone: modulation site 0 after the encoder, then per
// block another modulation site followed by the block itself. Shape in ==
// shape out.
Tensor backbone(const Model& model, Tensor z, const QueryEmbedding& query,
                PipelineCache& cache);

// Differentiable forward pass; mix must match cfg.channels/sample_rate.
// Returns the estimated single-channel waveform (input length). Raises
// NumericError naming the stage if activations go non-finite.
std::vector<double> model_forward(const Model& model, const FoaWaveform& mix,
                                  const QueryEmbedding& query,
                                  PipelineCache& cache);

// Accumulates parameter gradients for d(loss)/d(est) = grad_est.
void model_backward(Model& model, const PipelineCache& cache,
                    const std::vector<double>& grad_est);

}  // namespace spax
