#include "spax/conditioning.hpp"

#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "spax/error.hpp"
#include "spax/kernels.hpp"

namespace spax {

namespace {

constexpr char kMagic[4] = {'Q', 'E', 'M', 'B'};
constexpr std::uint32_t kVersion = 1;

double norm2(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

void renormalize(std::vector<double>& v) {
  const double n = norm2(v);
  if (n <= 0.0)
    throw std::invalid_argument("embedding has zero norm");
  for (double& x : v) x /= n;
}

void wr_u32(std::ofstream& f, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t rd_u32(std::ifstream& f) {
  unsigned char b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void validate_embedding(const QueryEmbedding& e) {
  if (e.v.empty()) throw std::invalid_argument("embedding is empty");
  for (double x : e.v)
    if (!std::isfinite(x))
      throw std::invalid_argument("embedding contains non-finite values");
  const double n = norm2(e.v);
  if (std::abs(n - 1.0) > 1e-5)
    throw std::invalid_argument("embedding must be unit-norm, got " +
                                std::to_string(n));
}

QueryEmbedding perturb_embedding(const QueryEmbedding& e, double sigma,
                                 Rng& rng) {
  if (sigma < 0.0) throw std::invalid_argument("sigma must be >= 0");
  validate_embedding(e);
  QueryEmbedding out;
  out.modality = Modality::pseudo;
  out.v = e.v;
  if (sigma > 0.0) {
    for (double& x : out.v) x += sigma * rng.gaussian();
  }
  renormalize(out.v);
  return out;
}

void save_embedding(const QueryEmbedding& e, const std::string& path) {
  validate_embedding(e);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write embedding file: " + path);
  f.write(kMagic, 4);
  wr_u32(f, kVersion);
  wr_u32(f, static_cast<std::uint32_t>(e.dim()));
  for (double x : e.v) {
    const float fx = static_cast<float>(x);
    std::uint32_t bits;
    std::memcpy(&bits, &fx, 4);
    wr_u32(f, bits);
  }
  const char tag = static_cast<char>(e.modality);
  f.write(&tag, 1);
  if (!f) throw IoError("short write to embedding file: " + path);
}

QueryEmbedding load_embedding(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open embedding file: " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("bad embedding magic in " + path);
  const std::uint32_t version = rd_u32(f);
  if (!f || version != kVersion)
    throw FormatError("unsupported embedding version in " + path);
  const std::uint32_t dim = rd_u32(f);
  if (!f || dim == 0 || dim > (1u << 20))
    throw FormatError("bad embedding dimension in " + path);
  QueryEmbedding e;
  e.v.resize(dim);
  for (std::uint32_t i = 0; i < dim; ++i) {
    const std::uint32_t bits = rd_u32(f);
    if (!f) throw FormatError("truncated embedding file: " + path);
    float fx;
    std::memcpy(&fx, &bits, 4);
    e.v[i] = static_cast<double>(fx);
  }
  char tag;
  f.read(&tag, 1);
  if (!f) throw FormatError("truncated embedding file: " + path);
  if (tag < 0 || tag > 2)
    throw FormatError("bad modality tag in " + path);
  e.modality = static_cast<Modality>(tag);
  // float32 storage perturbs the norm below the validation tolerance
  validate_embedding(e);
  return e;
}

QueryEmbedding class_embedding(std::string_view label, std::size_t dim) {
  Rng rng(derive_seed(fnv1a64(label), 0x7ca5));
  QueryEmbedding e;
  e.v = random_unit_vector(rng, dim);
  e.modality = Modality::text;
  return e;
}

QueryEmbedding audio_embedding(std::string_view label,
                               std::string_view clip_id, std::size_t dim,
                               double modality_gap) {
  QueryEmbedding anchor = class_embedding(label, dim);
  Rng rng(derive_seed(fnv1a64(clip_id), 0xa0d10));
  QueryEmbedding e;
  e.v = anchor.v;
  for (double& x : e.v) x += modality_gap * rng.gaussian();
  renormalize(e.v);
  e.modality = Modality::audio;
  return e;
}

std::string class_label(std::string_view file_stem) {
  std::size_t end = file_stem.size();
  while (end > 0 && std::isdigit(static_cast<unsigned char>(file_stem[end - 1])))
    --end;
  if (end > 0 && end < file_stem.size() && file_stem[end - 1] == '_') --end;
  return std::string(file_stem.substr(0, end ? end : file_stem.size()));
}

void FilmGenerator::build(const std::string& prefix, std::size_t query_dim,
                          std::size_t h, std::size_t d_model) {
  fc1.build(prefix + ".fc1", query_dim, h);
  fc2.build(prefix + ".fc2", h, 2 * d_model);
}

FilmParams film_params(const QueryEmbedding& e, const FilmGenerator& g,
                       FilmGenCache* cache) {
  if (e.dim() != g.fc1.in)
    throw std::invalid_argument(
        "query embedding dimension " + std::to_string(e.dim()) +
        " does not match generator input " + std::to_string(g.fc1.in));
  const std::size_t h = g.fc1.out;
  const std::size_t d2 = g.fc2.out;
  std::vector<double> h_pre(h), h_act(h), out(d2);
  g.fc1.forward(e.v.data(), h_pre.data(), 1);
  kernels::relu_forward(h_pre.data(), h_act.data(), h);
  g.fc2.forward(h_act.data(), out.data(), 1);
  FilmParams p;
  const std::size_t d_model = d2 / 2;
  p.gamma.assign(out.begin(), out.begin() + d_model);
  p.beta.assign(out.begin() + d_model, out.end());
  if (cache) {
    cache->h_pre = std::move(h_pre);
    cache->h_act = std::move(h_act);
  }
  return p;
}

void film_params_backward(FilmGenerator& g, const QueryEmbedding& e,
                          const FilmGenCache& cache,
                          const std::vector<double>& dgamma,
                          const std::vector<double>& dbeta) {
  const std::size_t h = g.fc1.out;
  std::vector<double> dout(dgamma.size() + dbeta.size());
  std::copy(dgamma.begin(), dgamma.end(), dout.begin());
  std::copy(dbeta.begin(), dbeta.end(), dout.begin() + dgamma.size());
  std::vector<double> dh_act(h), dh_pre(h);
  g.fc2.backward(cache.h_act.data(), dout.data(), dh_act.data(), 1);
  kernels::relu_backward(cache.h_pre.data(), dh_act.data(), dh_pre.data(), h);
  g.fc1.backward(e.v.data(), dh_pre.data(), nullptr, 1);
}

void film_apply(const Tensor& z, const FilmParams& p, Tensor& out) {
  const std::size_t d = p.gamma.size();
  if (p.beta.size() != d || d == 0 || z.numel() % d != 0)
    throw std::invalid_argument("film_apply: feature width mismatch");
  if (out.numel() != z.numel()) out = Tensor(z.shape);
  const std::size_t rows = z.numel() / d;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = z.data() + r * d;
    double* dst = out.data() + r * d;
    for (std::size_t i = 0; i < d; ++i)
      dst[i] = p.gamma[i] * src[i] + p.beta[i];
  }
}

void film_apply_backward(const Tensor& z_in, const FilmParams& p,
                         const Tensor& dout, Tensor& dz,
                         std::vector<double>& dgamma,
                         std::vector<double>& dbeta) {
  const std::size_t d = p.gamma.size();
  const std::size_t rows = z_in.numel() / d;
  if (dz.numel() != z_in.numel()) dz = Tensor(z_in.shape);
  dgamma.assign(d, 0.0);
  dbeta.assign(d, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* zi = z_in.data() + r * d;
    const double* go = dout.data() + r * d;
    double* dzi = dz.data() + r * d;
    for (std::size_t i = 0; i < d; ++i) {
      dzi[i] = p.gamma[i] * go[i];
      dgamma[i] += go[i] * zi[i];
      dbeta[i] += go[i];
    }
  }
}

}  // namespace spax
