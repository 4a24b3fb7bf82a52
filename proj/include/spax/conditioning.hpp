#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "spax/nn.hpp"
#include "spax/rng.hpp"
#include "spax/tensor.hpp"

namespace spax {

enum class Modality : std::uint8_t { audio = 0, text = 1, pseudo = 2 };

// Opaque unit-norm conditioning vector. In the real system this comes from a
// contrastive audio-text encoder; the toolkit accepts embedding files or uses
// the synthetic generator below.
struct QueryEmbedding {
  std::vector<double> v;
  Modality modality = Modality::audio;

  std::size_t dim() const { return v.size(); }
};

// unit norm within 1e-5, all finite
void validate_embedding(const QueryEmbedding& e);

// e' = normalize(e + sigma * g), g standard normal per coordinate.
QueryEmbedding perturb_embedding(const QueryEmbedding& e, double sigma,
                                 Rng& rng);

// Binary embedding file: magic "QEMB", u32 version, u32 dim, dim float32
// values, one modality byte. Little endian.
void save_embedding(const QueryEmbedding& e, const std::string& path);
QueryEmbedding load_embedding(const std::string& path);

// Synthetic stand-in for a pretrained audio-text encoder: each class label
// hashes to a fixed unit vector (the "text" anchor); audio clips of the class
// sit near it with a per-clip offset emulating the modality gap.
QueryEmbedding class_embedding(std::string_view label, std::size_t dim);
QueryEmbedding audio_embedding(std::string_view label, std::string_view clip_id,
                               std::size_t dim, double modality_gap);

// "tone_low_03" -> "tone_low" (trailing _digits stripped)
std::string class_label(std::string_view file_stem);

struct FilmParams {
  std::vector<double> gamma;
  std::vector<double> beta;
};

// Two-layer map d -> h -> 2D with a ReLU between; first D outputs are gamma,
// last D are beta. One independent generator per injection site.
struct FilmGenerator {
  Linear fc1;
  Linear fc2;

  void build(const std::string& prefix, std::size_t query_dim, std::size_t h,
             std::size_t d_model);
  void collect(ParamList& into) {
    fc1.collect(into);
    fc2.collect(into);
  }
};

struct FilmGenCache {
  std::vector<double> h_pre;
  std::vector<double> h_act;
};

FilmParams film_params(const QueryEmbedding& e, const FilmGenerator& g,
                       FilmGenCache* cache);

void film_params_backward(FilmGenerator& g, const QueryEmbedding& e,
                          const FilmGenCache& cache,
                          const std::vector<double>& dgamma,
                          const std::vector<double>& dbeta);

// Elementwise over the last axis of z, broadcast across the rest.
void film_apply(const Tensor& z, const FilmParams& p, Tensor& out);

void film_apply_backward(const Tensor& z_in, const FilmParams& p,
                         const Tensor& dout, Tensor& dz,
                         std::vector<double>& dgamma,
                         std::vector<double>& dbeta);

}  // namespace spax
