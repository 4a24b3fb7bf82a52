#include "spax/model.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "spax/error.hpp"
#include "spax/kv.hpp"

namespace spax {

namespace {

void check_finite(const Tensor& t, const std::string& stage) {
  if (!t.all_finite())
    throw NumericError("non-finite values after stage '" + stage + "'");
}

void check_finite(const std::vector<double>& v, const std::string& stage) {
  for (double x : v)
    if (!std::isfinite(x))
      throw NumericError("non-finite values after stage '" + stage + "'");
}

void check_finite(const ComplexSpectrogram& s, const std::string& stage) {
  for (const auto& z : s.data)
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
      throw NumericError("non-finite values after stage '" + stage + "'");
}

// (C*T, D) slice of band n from the (C,T,N,D) grid
Tensor band_slice(const Tensor& z, std::size_t n, const GridDims& g) {
  const std::size_t rows = g.channels * g.frames;
  Tensor out({rows, g.features});
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = z.data() + (r * g.bands + n) * g.features;
    double* dst = out.data() + r * g.features;
    for (std::size_t d = 0; d < g.features; ++d) dst[d] = src[d];
  }
  return out;
}

void band_slice_add(Tensor& z, const Tensor& slice, std::size_t n,
                    const GridDims& g) {
  const std::size_t rows = g.channels * g.frames;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = slice.data() + r * g.features;
    double* dst = z.data() + (r * g.bands + n) * g.features;
    for (std::size_t d = 0; d < g.features; ++d) dst[d] += src[d];
  }
}

void wr_u32(std::ofstream& f, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

void wr_u64(std::ofstream& f, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    const unsigned char b = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    f.write(reinterpret_cast<const char*>(&b), 1);
  }
}

std::uint32_t rd_u32(std::ifstream& f) {
  unsigned char b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t rd_u64(std::ifstream& f) {
  unsigned char b[8];
  f.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

constexpr char kCkptMagic[8] = {'S', 'P', 'A', 'X', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCkptVersion = 1;

}  // namespace

void ModelConfig::validate() const {
  if (channels != 1 && channels != 4)
    throw std::invalid_argument("channels must be 1 or 4");
  if (sample_rate < 8000 || sample_rate > 48000)
    throw std::invalid_argument("sample_rate must be within 8000..48000");
  if (fft_size < 16 || (fft_size & (fft_size - 1)) != 0)
    throw std::invalid_argument("fft_size must be a power of two >= 16");
  if (hop == 0 || hop > fft_size)
    throw std::invalid_argument("hop must satisfy 1 <= hop <= fft_size");
  if (hidden == 0) throw std::invalid_argument("hidden must be positive");
  if (heads == 0) throw std::invalid_argument("heads must be positive");
  if (head_dim < 2 || head_dim % 2 != 0)
    throw std::invalid_argument("head_dim must be even and >= 2");
  if (query_dim == 0) throw std::invalid_argument("query_dim must be positive");
  if (merge_layers != 1 && merge_layers != 2)
    throw std::invalid_argument("merge_layers must be 1 or 2");
  if (rope_theta <= 0.0)
    throw std::invalid_argument("rope_theta must be positive");
  if (!bands.empty()) {
    BandScheme s{bands};
    validate_scheme(s, fft_size / 2 + 1);
  }
}

BandScheme ModelConfig::scheme() const {
  if (bands.empty()) return default_band_scheme(fft_size);
  return BandScheme{bands};
}

ModelConfig ModelConfig::full_scale() {
  ModelConfig cfg;
  cfg.channels = 4;
  cfg.sample_rate = 32000;
  cfg.fft_size = 2048;
  cfg.hop = 1024;
  cfg.hidden = 128;
  cfg.blocks = 8;
  cfg.heads = 4;
  cfg.head_dim = 64;
  cfg.query_dim = 512;
  cfg.film_hidden = 0;
  cfg.bands.clear();
  cfg.rope_theta = 10000.0;
  cfg.rope_channel_axis = true;
  cfg.merge_layers = 1;
  return cfg;
}

std::string ModelConfig::to_text() const {
  std::ostringstream out;
  out << "channels = " << channels << "\n";
  out << "sample_rate = " << sample_rate << "\n";
  out << "fft_size = " << fft_size << "\n";
  out << "hop = " << hop << "\n";
  out << "hidden = " << hidden << "\n";
  out << "blocks = " << blocks << "\n";
  out << "heads = " << heads << "\n";
  out << "head_dim = " << head_dim << "\n";
  out << "query_dim = " << query_dim << "\n";
  out << "film_hidden = " << film_hidden << "\n";
  out << "bands = ";
  if (bands.empty()) {
    out << "default";
  } else {
    for (std::size_t i = 0; i < bands.size(); ++i)
      out << (i ? "," : "") << bands[i];
  }
  out << "\n";
  std::ostringstream theta;
  theta.precision(17);
  theta << rope_theta;
  out << "rope_theta = " << theta.str() << "\n";
  out << "rope_channel_axis = " << (rope_channel_axis ? "true" : "false")
      << "\n";
  out << "merge_layers = " << merge_layers << "\n";
  return out.str();
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  const KvFile kv = parse_kv(text);
  ModelConfig cfg;
  auto want = [&](const char* key) {
    if (!kv.has(key)) throw FormatError(std::string("missing model key ") + key);
    return kv.get(key);
  };
  cfg.channels = parse_size(want("channels"), "channels");
  cfg.sample_rate = parse_size(want("sample_rate"), "sample_rate");
  cfg.fft_size = parse_size(want("fft_size"), "fft_size");
  cfg.hop = parse_size(want("hop"), "hop");
  cfg.hidden = parse_size(want("hidden"), "hidden");
  cfg.blocks = parse_size(want("blocks"), "blocks");
  cfg.heads = parse_size(want("heads"), "heads");
  cfg.head_dim = parse_size(want("head_dim"), "head_dim");
  cfg.query_dim = parse_size(want("query_dim"), "query_dim");
  cfg.film_hidden = parse_size(want("film_hidden"), "film_hidden");
  const std::string bands = want("bands");
  cfg.bands = bands == "default" ? std::vector<std::size_t>{}
                                 : parse_size_list(bands, "bands");
  cfg.rope_theta = parse_real(want("rope_theta"), "rope_theta");
  cfg.rope_channel_axis =
      parse_bool(want("rope_channel_axis"), "rope_channel_axis");
  cfg.merge_layers = parse_size(want("merge_layers"), "merge_layers");
  cfg.validate();
  return cfg;
}

void Model::build(const ModelConfig& config) {
  config.validate();
  cfg = config;
  band_scheme = cfg.scheme();
  validate_scheme(band_scheme, cfg.fft_size / 2 + 1);
  encoder = BandEncoderParams();
  encoder.build("encoder", band_scheme, cfg.hidden);
  films.assign(cfg.blocks + 1, FilmGenerator());
  for (std::size_t i = 0; i < films.size(); ++i)
    films[i].build("film.site" + std::to_string(i), cfg.query_dim,
                   cfg.film_h(), cfg.hidden);
  blocks.assign(cfg.blocks, BlockParams());
  for (std::size_t i = 0; i < blocks.size(); ++i)
    blocks[i].build("block" + std::to_string(i), cfg.hidden, cfg.heads,
                    cfg.head_dim, cfg.rope_theta, cfg.rope_channel_axis);
  decoder = BandDecoderParams();
  decoder.build("decoder", band_scheme, cfg.hidden);
  merge = ChannelMergeParams();
  merge.build("merge", cfg.channels, cfg.merge_layers);
}

void Model::init_weights(std::uint64_t seed) {
  Rng rng(seed);
  constexpr double kStd = 0.02;
  for (std::size_t n = 0; n < encoder.proj.size(); ++n)
    init_normal(encoder.proj[n].w, rng, kStd);
  for (auto& film : films) {
    init_normal(film.fc1.w, rng, kStd);
    init_normal(film.fc2.w, rng, kStd);
    // start at the identity modulation: gamma = 1, beta = 0
    const std::size_t d_model = film.fc2.out / 2;
    for (std::size_t i = 0; i < d_model; ++i) film.fc2.b.value[i] = 1.0;
  }
  for (auto& block : blocks) {
    for (AttentionParams* attn :
         {&block.time_attn, &block.band_attn, &block.chan_attn}) {
      init_normal(attn->wq.w, rng, kStd);
      init_normal(attn->wk.w, rng, kStd);
      init_normal(attn->wv.w, rng, kStd);
      // wo stays zero so every block starts as the identity
    }
    init_normal(block.ff.fc1.w, rng, kStd);
    // ff fc2 stays zero for the same reason
  }
  for (std::size_t n = 0; n < decoder.fc1.size(); ++n) {
    init_normal(decoder.fc1[n].w, rng, kStd);
    init_normal(decoder.fc2[n].w, rng, kStd);
  }
  for (auto& layer : merge.layers) init_normal(layer.w, rng, kStd);
}

ParamList Model::param_list() {
  ParamList out;
  encoder.collect(out);
  for (auto& f : films) f.collect(out);
  for (auto& b : blocks) b.collect(out);
  decoder.collect(out);
  merge.collect(out);
  return out;
}

std::size_t Model::param_count() {
  std::size_t n = 0;
  for (const Param* p : param_list()) n += p->value.numel();
  return n;
}

void Model::zero_grads() {
  for (Param* p : param_list()) p->grad.zero();
}

void save_checkpoint(const Model& model, const std::string& path) {
  Model& m = const_cast<Model&>(model);  // parameter access only
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write checkpoint: " + path);
  f.write(kCkptMagic, 8);
  wr_u32(f, kCkptVersion);
  const std::string header = model.cfg.to_text();
  wr_u64(f, header.size());
  f.write(header.data(), static_cast<std::streamsize>(header.size()));
  const ParamList params = m.param_list();
  wr_u32(f, static_cast<std::uint32_t>(params.size()));
  for (const Param* p : params) {
    wr_u32(f, static_cast<std::uint32_t>(p->path.size()));
    f.write(p->path.data(), static_cast<std::streamsize>(p->path.size()));
    wr_u32(f, static_cast<std::uint32_t>(p->value.shape.size()));
    for (auto d : p->value.shape) wr_u64(f, d);
    for (double x : p->value.v) {
      const float fx = static_cast<float>(x);
      std::uint32_t bits;
      std::memcpy(&bits, &fx, 4);
      wr_u32(f, bits);
    }
  }
  if (!f) throw IoError("short write to checkpoint: " + path);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kCkptMagic, 8) != 0)
    throw FormatError("not a checkpoint file: " + path);
  const std::uint32_t version = rd_u32(f);
  if (!f || version != kCkptVersion)
    throw FormatError("unsupported checkpoint version in " + path);
  const std::uint64_t header_len = rd_u64(f);
  if (!f || header_len > (1u << 20))
    throw FormatError("bad checkpoint header in " + path);
  std::string header(header_len, '\0');
  f.read(header.data(), static_cast<std::streamsize>(header_len));
  if (!f) throw FormatError("truncated checkpoint header in " + path);

  Model model;
  model.build(ModelConfig::from_text(header));
  const ParamList params = model.param_list();

  const std::uint32_t n_tensors = rd_u32(f);
  if (!f || n_tensors != params.size())
    throw FormatError("checkpoint tensor count does not match config in " +
                      path);
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    const std::uint32_t path_len = rd_u32(f);
    if (!f || path_len > 4096)
      throw FormatError("bad tensor path in " + path);
    std::string tensor_path(path_len, '\0');
    f.read(tensor_path.data(), path_len);
    Param* p = params[i];
    if (!f || tensor_path != p->path)
      throw FormatError("unexpected tensor '" + tensor_path + "' in " + path);
    const std::uint32_t ndim = rd_u32(f);
    if (!f || ndim != p->value.shape.size())
      throw FormatError("tensor rank mismatch for '" + tensor_path + "' in " +
                        path);
    for (std::uint32_t d = 0; d < ndim; ++d) {
      const std::uint64_t dim = rd_u64(f);
      if (!f || dim != p->value.shape[d])
        throw FormatError("tensor shape mismatch for '" + tensor_path +
                          "' in " + path);
    }
    for (double& x : p->value.v) {
      const std::uint32_t bits = rd_u32(f);
      if (!f) throw FormatError("truncated tensor data in " + path);
      float fx;
      std::memcpy(&fx, &bits, 4);
      x = static_cast<double>(fx);
    }
  }
  return model;
}

Tensor backbone(const Model& model, Tensor z, const QueryEmbedding& query,
                PipelineCache& cache) {
  const ModelConfig& cfg = model.cfg;
  if (z.shape.size() != 4)
    throw std::invalid_argument("backbone expects a (C,T,N,D) grid");
  cache.dims = GridDims{z.shape[0], z.shape[1], z.shape[2], z.shape[3]};
  cache.query = query;
  cache.films.resize(cfg.blocks + 1);
  cache.blocks.resize(cfg.blocks);
  auto apply_site = [&](std::size_t site) {
    PipelineCache::FilmSite& fs = cache.films[site];
    fs.z_in = z;
    fs.params = film_params(query, model.films[site], &fs.gen);
    Tensor modulated;
    film_apply(fs.z_in, fs.params, modulated);
    z = std::move(modulated);
    check_finite(z, "film.site" + std::to_string(site));
  };

  apply_site(0);
  for (std::size_t i = 0; i < cfg.blocks; ++i) {
    apply_site(i + 1);
    transformer_block(z, model.blocks[i], cache.dims, &cache.blocks[i]);
    check_finite(z, "block" + std::to_string(i));
  }
  return z;
}

std::vector<double> model_forward(const Model& model, const FoaWaveform& mix,
                                  const QueryEmbedding& query,
                                  PipelineCache& cache) {
  const ModelConfig& cfg = model.cfg;
  if (mix.channels != cfg.channels)
    throw std::invalid_argument(
        "mixture has " + std::to_string(mix.channels) +
        " channels but the model expects " + std::to_string(cfg.channels));
  if (mix.sample_rate != cfg.sample_rate)
    throw std::invalid_argument(
        "mixture sample rate " + std::to_string(mix.sample_rate) +
        " does not match model sample rate " + std::to_string(cfg.sample_rate));
  if (mix.length() == 0) throw std::invalid_argument("mixture is empty");
  if (query.dim() != cfg.query_dim)
    throw std::invalid_argument(
        "query embedding dimension " + std::to_string(query.dim()) +
        " does not match model query_dim " + std::to_string(cfg.query_dim));
  validate_embedding(query);

  const StftConfig stft_cfg = make_stft_config(cfg.fft_size, cfg.hop);
  const ComplexSpectrogram spec = stft(mix, stft_cfg);
  check_finite(spec, "stft");

  const std::vector<Tensor> bands = split_bands(spec, model.band_scheme);
  Tensor z = encode_bands(bands, model.encoder, spec.channels, spec.frames,
                          &cache.encoder);
  check_finite(z, "band_encode");

  cache.input_len = mix.length();
  z = backbone(model, std::move(z), query, cache);
  cache.z_final = z;

  cache.dec.resize(model.band_scheme.bands());
  std::vector<Tensor> band_outs(model.band_scheme.bands());
  for (std::size_t n = 0; n < model.band_scheme.bands(); ++n) {
    const Tensor zn = band_slice(z, n, cache.dims);
    band_outs[n] = decode_band(zn, model.decoder.fc1[n], model.decoder.fc2[n],
                               &cache.dec[n]);
  }
  cache.s_multi = assemble_spectrum(band_outs, model.band_scheme,
                                    spec.channels, spec.frames);
  cache.s_multi.frame_hop = spec.frame_hop;
  cache.s_multi.fft_size = spec.fft_size;
  cache.s_multi.sample_rate = spec.sample_rate;
  check_finite(cache.s_multi, "decode");

  cache.merged = channel_merge(cache.s_multi, model.merge, &cache.merge);
  check_finite(cache.merged, "merge");

  const FoaWaveform wave = istft(cache.merged, stft_cfg, mix.length());
  cache.est.assign(wave.channel(0), wave.channel(0) + wave.length());
  check_finite(cache.est, "istft");
  return cache.est;
}

void model_backward(Model& model, const PipelineCache& cache,
                    const std::vector<double>& grad_est) {
  const ModelConfig& cfg = model.cfg;
  if (grad_est.size() != cache.input_len)
    throw std::invalid_argument("model_backward: gradient length mismatch");
  const StftConfig stft_cfg = make_stft_config(cfg.fft_size, cfg.hop);
  const GridDims& dims = cache.dims;

  FoaWaveform dwave(1, grad_est.size(), cfg.sample_rate);
  std::copy(grad_est.begin(), grad_est.end(), dwave.channel(0));
  ComplexSpectrogram dmerged = istft_adjoint(dwave, stft_cfg, dims.frames);

  ComplexSpectrogram dmulti;
  channel_merge_backward(model.merge, cache.merge, dmerged, dmulti);

  const std::vector<Tensor> dbands = split_bands(dmulti, model.band_scheme);
  Tensor dz({dims.channels, dims.frames, dims.bands, dims.features});
  Tensor dxn;
  for (std::size_t n = 0; n < model.band_scheme.bands(); ++n) {
    decode_band_backward(model.decoder.fc1[n], model.decoder.fc2[n],
                         cache.dec[n], dbands[n], dxn);
    band_slice_add(dz, dxn, n, dims);
  }

  auto site_backward = [&](std::size_t site) {
    const PipelineCache::FilmSite& fs = cache.films[site];
    Tensor dz_in;
    std::vector<double> dgamma, dbeta;
    film_apply_backward(fs.z_in, fs.params, dz, dz_in, dgamma, dbeta);
    film_params_backward(model.films[site], cache.query, fs.gen, dgamma,
                         dbeta);
    dz = std::move(dz_in);
  };

  for (std::size_t i = cfg.blocks; i-- > 0;) {
    transformer_block_backward(dz, model.blocks[i], dims, cache.blocks[i]);
    site_backward(i + 1);
  }
  site_backward(0);

  encode_bands_backward(model.encoder, cache.encoder, dz, dims.channels,
                        dims.frames);
}

}  // namespace spax
