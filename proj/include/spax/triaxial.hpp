#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spax/nn.hpp"
#include "spax/tensor.hpp"

namespace spax {

enum class Axis { time, band, channel };

struct GridDims {
  std::size_t channels = 0;
  std::size_t frames = 0;
  std::size_t bands = 0;
  std::size_t features = 0;
};

// Rotary transform on a flat run of head_dim vectors: coordinate pair
// (2i, 2i+1) of vector j rotates by positions[j] * theta^(-2i/head_dim).
void rope_rotate(double* vecs, std::size_t count, std::size_t head_dim,
                 const std::int64_t* positions, double theta_base,
                 bool inverse = false);

struct AttentionParams {
  RmsNorm norm;
  Linear wq, wk, wv, wo;
  std::size_t heads = 0;
  std::size_t head_dim = 0;
  double theta = 10000.0;
  bool rope = true;

  void build(const std::string& prefix, std::size_t d_model, std::size_t heads,
             std::size_t head_dim);
  void collect(ParamList& into);
};

struct FeedForwardParams {
  RmsNorm norm;
  Linear fc1, fc2;  // D -> 4D -> D, gelu between

  void build(const std::string& prefix, std::size_t d_model);
  void collect(ParamList& into);
};

struct BlockParams {
  AttentionParams time_attn, band_attn, chan_attn;
  FeedForwardParams ff;

  void build(const std::string& prefix, std::size_t d_model, std::size_t heads,
             std::size_t head_dim, double theta, bool rope_channel_axis);
  void collect(ParamList& into);
};

struct AttnCache {
  Tensor x;        // gathered input (B, S, D)
  Tensor normed;   // (B, S, D)
  Tensor inv_rms;  // (B*S)
  Tensor q, k, v;  // (B, S, heads*head_dim); q,k are post-rotation
  Tensor probs;    // (B*heads, S, S)
  Tensor ctx;      // (B, S, heads*head_dim)
};

struct FfCache {
  Tensor x;        // (rows, D)
  Tensor normed;
  Tensor inv_rms;  // (rows)
  Tensor h_pre, h_act;
};

struct BlockCache {
  AttnCache time, band, channel;
  FfCache ff;
};

// One axial pass: pre-norm, rotary q/k, softmax attention along `axis` with
// the other grid axes folded into the batch, output projection, residual add.
// Updates z in place.
void axial_attention(Tensor& z, Axis axis, const AttentionParams& p,
                     const GridDims& dims, AttnCache* cache);

void axial_attention_backward(Tensor& dz, Axis axis, AttentionParams& p,
                              const GridDims& dims, const AttnCache& cache);

void feed_forward(Tensor& z, const FeedForwardParams& p, FfCache* cache);
void feed_forward_backward(Tensor& dz, FeedForwardParams& p,
                           const FfCache& cache);

// time attention, band attention, channel attention, then feedforward
void transformer_block(Tensor& z, const BlockParams& p, const GridDims& dims,
                       BlockCache* cache);
void transformer_block_backward(Tensor& dz, BlockParams& p,
                                const GridDims& dims, const BlockCache& cache);

}  // namespace spax
