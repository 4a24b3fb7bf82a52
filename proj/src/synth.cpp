#include "spax/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "spax/error.hpp"
#include "spax/wav.hpp"

namespace fs = std::filesystem;

namespace spax {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

double db_to_gain(double db) {
  if (std::isinf(db) && db < 0.0) return 0.0;
  return std::pow(10.0, db / 20.0);
}

double mean_power(const FoaWaveform& w) {
  double acc = 0.0;
  for (double x : w.samples) acc += x * x;
  return w.samples.empty() ? 0.0 : acc / static_cast<double>(w.samples.size());
}

std::string stem_of(const std::string& id) {
  return fs::path(id).stem().string();
}

Rir resolve_rir(const std::string& rir_id, const Corpus& corpus,
                std::size_t sample_rate, const RirShape& shape) {
  if (rir_id.rfind("synth:", 0) == 0) {
    const std::uint64_t seed = std::stoull(rir_id.substr(6));
    return synth_rir(sample_rate, seed, shape);
  }
  const CorpusEntry* entry = corpus.find(rir_id);
  if (!entry) throw NotFoundError("rir not found in corpus: " + rir_id);
  const FoaWaveform wav = read_wav((fs::path(corpus.root) / rir_id).string());
  Rir rir;
  rir.channels = wav.channels;
  rir.sample_rate = wav.sample_rate;
  rir.taps = wav.samples;
  return rir;
}

FoaWaveform load_source(const std::string& id, const Corpus& corpus) {
  const CorpusEntry* entry = corpus.find(id);
  if (!entry) throw NotFoundError("source not found in corpus: " + id);
  return read_wav((fs::path(corpus.root) / id).string());
}

// wet events only; shared by mix_scene and the noise-gain resolution pass
FoaWaveform render_events(const SceneSpec& spec, const Corpus& corpus,
                          std::vector<std::vector<double>>* dry_targets) {
  FoaWaveform mix(4, spec.duration, corpus.sample_rate);
  if (dry_targets) dry_targets->assign(spec.events.size(), {});
  for (std::size_t e = 0; e < spec.events.size(); ++e) {
    const SceneEvent& ev = spec.events[e];
    const FoaWaveform src = load_source(ev.source_id, corpus);
    if (src.channels != 1)
      throw std::invalid_argument("dry source must be mono: " + ev.source_id);
    if (ev.onset + src.length() > spec.duration)
      throw std::invalid_argument("event extends past scene end: " +
                                  ev.source_id);
    const double gain = db_to_gain(ev.gain_db);
    FoaWaveform placed(1, spec.duration, src.sample_rate);
    for (std::size_t i = 0; i < src.length(); ++i)
      placed.channel(0)[ev.onset + i] = gain * src.channel(0)[i];
    const Rir rir = resolve_rir(ev.rir_id, corpus, src.sample_rate, RirShape{});
    if (rir.sample_rate != src.sample_rate)
      throw std::invalid_argument("rir sample rate mismatch for " + ev.rir_id);
    const FoaWaveform wet = convolve_rir(placed, rir, spec.duration);
    for (std::size_t i = 0; i < mix.samples.size(); ++i)
      mix.samples[i] += wet.samples[i];
    if (dry_targets)
      (*dry_targets)[e].assign(placed.channel(0),
                               placed.channel(0) + spec.duration);
  }
  return mix;
}

}  // namespace

Rir synth_rir(std::size_t sample_rate, std::uint64_t seed,
              const RirShape& shape) {
  Rng rng(derive_seed(seed, 0x5157));
  const double az = rng.uniform(0.0, 2.0 * kPi);
  const double el = rng.uniform(-kPi / 4.0, kPi / 4.0);
  const double dir[4] = {1.0, std::cos(el) * std::cos(az),
                         std::cos(el) * std::sin(az), std::sin(el)};
  const std::size_t direct = static_cast<std::size_t>(
      rng.uniform(shape.direct_min_s, shape.direct_max_s) *
      static_cast<double>(sample_rate));
  const std::size_t tail_len = static_cast<std::size_t>(
      shape.tail_s * static_cast<double>(sample_rate));
  const double tau = shape.decay_s * static_cast<double>(sample_rate);
  const std::size_t len = direct + tail_len + 1;

  Rir rir;
  rir.channels = 4;
  rir.sample_rate = sample_rate;
  rir.taps.assign(4 * len, 0.0);
  for (std::size_t c = 0; c < 4; ++c) rir.channel(c)[direct] = dir[c];
  for (std::size_t c = 0; c < 4; ++c) {
    double* h = rir.channel(c);
    for (std::size_t k = 0; k < tail_len; ++k) {
      const double env = std::exp(-static_cast<double>(k + 1) / tau);
      h[direct + 1 + k] += shape.tail_gain * env * rng.gaussian();
    }
  }
  return rir;
}

FoaWaveform convolve_rir(const FoaWaveform& dry, const Rir& rir,
                         std::size_t out_len) {
  if (dry.channels != 1)
    throw std::invalid_argument("convolve_rir expects a mono dry signal");
  if (dry.sample_rate != rir.sample_rate)
    throw std::invalid_argument("convolve_rir: sample rate mismatch");
  const std::size_t L = dry.length();
  const std::size_t K = rir.length();
  if (L == 0 || K == 0) throw std::invalid_argument("convolve_rir: empty input");
  const std::size_t full = L + K - 1;
  const std::size_t n = out_len ? out_len : full;

  FoaWaveform out(rir.channels, n, dry.sample_rate);
  const double* s = dry.channel(0);
  const std::ptrdiff_t chans = static_cast<std::ptrdiff_t>(rir.channels);
#pragma omp parallel for
  for (std::ptrdiff_t c = 0; c < chans; ++c) {
    const double* h = rir.channel(static_cast<std::size_t>(c));
    double* y = out.channel(static_cast<std::size_t>(c));
    for (std::size_t i = 0; i < n && i < full; ++i) {
      const std::size_t k_lo = i >= L - 1 ? i - (L - 1) : 0;
      const std::size_t k_hi = std::min(i, K - 1);
      double acc = 0.0;
      for (std::size_t k = k_lo; k <= k_hi; ++k) acc += s[i - k] * h[k];
      y[i] = acc;
    }
  }
  return out;
}

const CorpusEntry* Corpus::find(const std::string& id) const {
  for (const auto* list : {&sources, &rirs, &noises})
    for (const auto& e : *list)
      if (e.id == id) return &e;
  return nullptr;
}

Corpus corpus_scan(const std::string& root) {
  Corpus corpus;
  corpus.root = root;
  if (!fs::exists(root)) throw IoError("corpus directory not found: " + root);

  struct Category {
    const char* dir;
    std::vector<CorpusEntry>* list;
    std::size_t want_channels;  // 0 = mono or 4
  };
  const Category cats[] = {{"sources", &corpus.sources, 1},
                           {"rirs", &corpus.rirs, 4},
                           {"noises", &corpus.noises, 0}};

  for (const auto& cat : cats) {
    const fs::path dir = fs::path(root) / cat.dir;
    std::vector<fs::path> files;
    if (fs::exists(dir))
      for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".wav")
          files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty())
      corpus.warnings.push_back(std::string(cat.dir) + ": no wav files");
    for (const auto& file : files) {
      const std::string id =
          (fs::path(cat.dir) / file.filename()).generic_string();
      FoaWaveform wav;
      try {
        wav = read_wav(file.string());
      } catch (const FormatError& err) {
        corpus.warnings.push_back(id + ": " + err.what());
        continue;
      }
      if (corpus.sample_rate == 0) corpus.sample_rate = wav.sample_rate;
      if (wav.sample_rate != corpus.sample_rate) {
        corpus.warnings.push_back(
            id + ": sample rate " + std::to_string(wav.sample_rate) +
            " differs from corpus rate " + std::to_string(corpus.sample_rate));
        continue;
      }
      if (cat.want_channels == 1 && wav.channels != 1) {
        corpus.warnings.push_back(id + ": expected mono, got " +
                                  std::to_string(wav.channels) + " channels");
        continue;
      }
      if (cat.want_channels == 4 && wav.channels != 4) {
        corpus.warnings.push_back(id + ": expected 4 channels, got " +
                                  std::to_string(wav.channels));
        continue;
      }
      if (cat.want_channels == 0 && wav.channels != 1 && wav.channels != 4) {
        corpus.warnings.push_back(id + ": expected 1 or 4 channels, got " +
                                  std::to_string(wav.channels));
        continue;
      }
      CorpusEntry entry;
      entry.id = id;
      entry.label = class_label(stem_of(id));
      entry.channels = wav.channels;
      entry.sample_rate = wav.sample_rate;
      entry.length = wav.length();
      cat.list->push_back(std::move(entry));
    }
  }
  return corpus;
}

std::size_t max_simultaneous_events(const SceneSpec& spec,
                                    const Corpus& corpus) {
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  for (const auto& ev : spec.events) {
    const CorpusEntry* entry = corpus.find(ev.source_id);
    if (!entry) throw NotFoundError("source not found: " + ev.source_id);
    spans.emplace_back(ev.onset, ev.onset + entry->length);
  }
  std::size_t peak = 0;
  for (const auto& [b, e] : spans) {
    (void)e;
    std::size_t active = 0;
    for (const auto& [b2, e2] : spans)
      if (b2 <= b && b < e2) ++active;
    peak = std::max(peak, active);
  }
  return peak;
}

SceneRender mix_scene(const SceneSpec& spec, const Corpus& corpus) {
  if (spec.duration == 0)
    throw std::invalid_argument("scene duration must be positive");
  if (max_simultaneous_events(spec, corpus) > 3)
    throw std::invalid_argument("more than 3 events overlap simultaneously");

  SceneRender out;
  out.mixture = render_events(spec, corpus, &out.dry_targets);

  if (!spec.noise_id.empty()) {
    const CorpusEntry* entry = corpus.find(spec.noise_id);
    if (!entry) throw NotFoundError("noise not found: " + spec.noise_id);
    const FoaWaveform noise =
        read_wav((fs::path(corpus.root) / spec.noise_id).string());
    const double gain = db_to_gain(spec.noise_gain_db);
    for (std::size_t c = 0; c < 4; ++c) {
      const double* src = noise.channel(noise.channels == 4 ? c : 0);
      double* dst = out.mixture.channel(c);
      for (std::size_t i = 0; i < spec.duration; ++i)
        dst[i] += gain * src[i % noise.length()];
    }
  }
  return out;
}

SceneSpec sample_scene(const Corpus& corpus, const SynthConfig& cfg,
                       std::uint64_t seed) {
  if (corpus.sources.empty())
    throw std::invalid_argument("corpus has no dry sources");
  if (corpus.noises.empty())
    throw std::invalid_argument("corpus has no noise beds");

  Rng rng(seed);
  SceneSpec spec;
  spec.seed = seed;
  spec.duration = static_cast<std::size_t>(
      cfg.duration_s * static_cast<double>(cfg.sample_rate));

  const std::size_t span = cfg.max_events - cfg.min_events + 1;
  const std::size_t n_events = cfg.min_events + rng.index(span);
  for (std::size_t e = 0; e < n_events; ++e) {
    SceneEvent ev;
    for (int attempt = 0; attempt < 64 && ev.source_id.empty(); ++attempt) {
      const CorpusEntry& src =
          corpus.sources[rng.index(corpus.sources.size())];
      if (src.length <= spec.duration) {
        ev.source_id = src.id;
        ev.onset = rng.index(spec.duration - src.length + 1);
      }
    }
    if (ev.source_id.empty())
      throw std::invalid_argument("no corpus source fits the scene duration");
    if (corpus.rirs.empty()) {
      ev.rir_id = "synth:" + std::to_string(derive_seed(seed, 100 + e));
    } else {
      ev.rir_id = corpus.rirs[rng.index(corpus.rirs.size())].id;
    }
    ev.gain_db = rng.uniform(cfg.gain_db_min, cfg.gain_db_max);
    spec.events.push_back(std::move(ev));
  }
  spec.events[rng.index(spec.events.size())].is_target = true;

  for (int attempt = 0; attempt < 100; ++attempt) {
    if (max_simultaneous_events(spec, corpus) <= cfg.max_overlap) break;
    for (auto& ev : spec.events) {
      const CorpusEntry* src = corpus.find(ev.source_id);
      ev.onset = rng.index(spec.duration - src->length + 1);
    }
  }

  spec.noise_id = corpus.noises[rng.index(corpus.noises.size())].id;
  const double snr_db = rng.uniform(cfg.snr_db_min, cfg.snr_db_max);

  // resolve the noise gain against the rendered event power so manifests
  // capture an absolute value
  const FoaWaveform wet = render_events(spec, corpus, nullptr);
  const FoaWaveform noise =
      read_wav((fs::path(corpus.root) / spec.noise_id).string());
  FoaWaveform bed(4, spec.duration, noise.sample_rate);
  for (std::size_t c = 0; c < 4; ++c) {
    const double* src = noise.channel(noise.channels == 4 ? c : 0);
    for (std::size_t i = 0; i < spec.duration; ++i)
      bed.channel(c)[i] = src[i % noise.length()];
  }
  const double p_events = mean_power(wet);
  const double p_noise = mean_power(bed);
  if (p_events <= 0.0 || p_noise <= 0.0) {
    spec.noise_gain_db = -60.0;
  } else {
    spec.noise_gain_db = 10.0 * std::log10(p_events / p_noise) - snr_db;
  }
  return spec;
}

TrainingExample render_example(const SceneSpec& spec, const Corpus& corpus,
                               const SynthConfig& cfg) {
  SceneRender render = mix_scene(spec, corpus);
  TrainingExample ex;
  ex.scene = spec;
  ex.mixture = std::move(render.mixture);

  std::size_t target = 0;
  for (std::size_t e = 0; e < spec.events.size(); ++e)
    if (spec.events[e].is_target) target = e;
  ex.target_event = target;
  ex.target = std::move(render.dry_targets[target]);

  const std::string stem = stem_of(spec.events[target].source_id);
  ex.target_label = class_label(stem);
  const QueryEmbedding audio =
      audio_embedding(ex.target_label, stem, cfg.query_dim, cfg.modality_gap);
  Rng rng(derive_seed(spec.seed, 0x9e));
  ex.query = perturb_embedding(audio, cfg.sigma, rng);
  return ex;
}

std::vector<TrainingExample> generate_batch(const Corpus& corpus,
                                            const SynthConfig& cfg,
                                            std::uint64_t master_seed,
                                            std::uint64_t first_index,
                                            std::size_t count) {
  std::vector<TrainingExample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t seed = derive_seed(master_seed, first_index + i);
    const SceneSpec spec = sample_scene(corpus, cfg, seed);
    out.push_back(render_example(spec, corpus, cfg));
  }
  return out;
}

void write_manifest(const std::string& path, const Manifest& manifest) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write manifest: " + path);
  f << "# scene manifest v1\n";
  f << "corpus " << manifest.corpus_root << "\n";
  f << "sample_rate " << manifest.sample_rate << "\n";
  f << "scenes " << manifest.scenes.size() << "\n";
  f.precision(17);
  for (std::size_t i = 0; i < manifest.scenes.size(); ++i) {
    const SceneSpec& s = manifest.scenes[i];
    f << "scene " << i << " seed " << s.seed << " duration " << s.duration
      << "\n";
    if (!s.noise_id.empty())
      f << "noise " << s.noise_id << " gain_db " << s.noise_gain_db << "\n";
    for (const auto& ev : s.events) {
      f << "event " << ev.source_id << " rir " << ev.rir_id << " gain_db "
        << ev.gain_db << " onset " << ev.onset;
      if (ev.is_target) f << " target";
      f << "\n";
    }
    f << "end\n";
  }
  if (!f) throw IoError("short write to manifest: " + path);
}

Manifest read_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open manifest: " + path);
  Manifest manifest;
  std::string line;
  SceneSpec current;
  bool in_scene = false;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream in(line);
    std::string tag;
    in >> tag;
    if (tag == "corpus") {
      in >> manifest.corpus_root;
    } else if (tag == "sample_rate") {
      in >> manifest.sample_rate;
    } else if (tag == "scenes") {
      // informative count only
    } else if (tag == "scene") {
      std::size_t index;
      std::string kw;
      current = SceneSpec{};
      in >> index >> kw >> current.seed >> kw >> current.duration;
      if (!in) throw FormatError("bad scene line in " + path);
      in_scene = true;
    } else if (tag == "noise") {
      std::string kw;
      in >> current.noise_id >> kw >> current.noise_gain_db;
      if (!in) throw FormatError("bad noise line in " + path);
    } else if (tag == "event") {
      SceneEvent ev;
      std::string kw;
      in >> ev.source_id >> kw >> ev.rir_id >> kw >> ev.gain_db >> kw >>
          ev.onset;
      if (!in) throw FormatError("bad event line in " + path);
      std::string maybe_target;
      if (in >> maybe_target && maybe_target == "target") ev.is_target = true;
      current.events.push_back(std::move(ev));
    } else if (tag == "end") {
      if (!in_scene) throw FormatError("stray 'end' in manifest " + path);
      manifest.scenes.push_back(current);
      in_scene = false;
    } else {
      throw FormatError("unknown manifest line '" + tag + "' in " + path);
    }
  }
  if (in_scene) throw FormatError("unterminated scene in manifest " + path);
  return manifest;
}

void write_demo_corpus(const std::string& root, std::uint64_t seed,
                       const SynthConfig& cfg) {
  const std::size_t rate = cfg.sample_rate;
  fs::create_directories(fs::path(root) / "sources");
  fs::create_directories(fs::path(root) / "rirs");
  fs::create_directories(fs::path(root) / "noises");

  struct ClassDef {
    const char* name;
    double f0, f1;
    double amp;
    bool noise;
  };
  const ClassDef classes[] = {
      {"tone_a", 330.0, 330.0, 0.40, false},
      {"tone_b", 523.0, 523.0, 0.40, false},
      {"chirp_up", 200.0, 1400.0, 0.35, false},
      {"chirp_down", 1600.0, 300.0, 0.35, false},
      {"am_noise", 0.0, 0.0, 0.30, true},
      {"pulse_train", 30.0, 30.0, 0.45, false},
  };

  std::size_t class_index = 0;
  for (const auto& cls : classes) {
    for (std::size_t k = 1; k <= 2; ++k) {
      Rng rng(derive_seed(seed, class_index * 16 + k));
      const double dur_s = 0.35 + 0.05 * static_cast<double>(k);
      const std::size_t len =
          static_cast<std::size_t>(dur_s * static_cast<double>(rate));
      FoaWaveform clip(1, len, rate);
      double* x = clip.channel(0);
      if (cls.noise) {
        for (std::size_t i = 0; i < len; ++i) {
          const double t = static_cast<double>(i) / static_cast<double>(rate);
          const double am = 0.5 + 0.5 * std::sin(2.0 * kPi * 8.0 * t);
          x[i] = cls.amp * am * rng.gaussian() * 0.5;
        }
      } else if (std::string(cls.name) == "pulse_train") {
        const std::size_t period =
            static_cast<std::size_t>(static_cast<double>(rate) / cls.f0);
        for (std::size_t i = 0; i < len; i += period)
          for (std::size_t j = 0; j < 8 && i + j < len; ++j)
            x[i + j] += cls.amp * (1.0 - static_cast<double>(j) / 8.0);
      } else {
        const double detune = 1.0 + 0.01 * static_cast<double>(k - 1);
        for (std::size_t i = 0; i < len; ++i) {
          const double t = static_cast<double>(i) / static_cast<double>(rate);
          const double u = static_cast<double>(i) / static_cast<double>(len);
          const double f = (cls.f0 + (cls.f1 - cls.f0) * u * 0.5) * detune;
          x[i] = cls.amp * (std::sin(2.0 * kPi * f * t) +
                            0.35 * std::sin(2.0 * kPi * 2.0 * f * t));
        }
      }
      const std::size_t fade = std::min<std::size_t>(rate / 100, len / 2);
      for (std::size_t i = 0; i < fade; ++i) {
        const double g = static_cast<double>(i) / static_cast<double>(fade);
        x[i] *= g;
        x[len - 1 - i] *= g;
      }
      const std::string name =
          std::string(cls.name) + "_" + std::to_string(k) + ".wav";
      write_wav((fs::path(root) / "sources" / name).string(), clip,
                WavFormat::pcm16);
    }
    ++class_index;
  }

  for (std::size_t r = 0; r < 5; ++r) {
    const Rir rir = synth_rir(rate, derive_seed(seed, 1000 + r), cfg.rir);
    FoaWaveform wav(4, rir.length(), rate);
    wav.samples = rir.taps;
    const std::string name = "rir_" + std::to_string(r) + ".wav";
    write_wav((fs::path(root) / "rirs" / name).string(), wav,
              WavFormat::float32);
  }

  for (std::size_t n = 0; n < 2; ++n) {
    Rng rng(derive_seed(seed, 2000 + n));
    const std::size_t len = static_cast<std::size_t>(
        1.25 * cfg.duration_s * static_cast<double>(rate));
    FoaWaveform bed(1, len, rate);
    double state = 0.0;
    const double pole = n == 0 ? 0.95 : 0.8;
    for (std::size_t i = 0; i < len; ++i) {
      state = pole * state + (1.0 - pole) * rng.gaussian();
      bed.channel(0)[i] = 0.6 * state;
    }
    const std::string name = "bed_" + std::to_string(n) + ".wav";
    write_wav((fs::path(root) / "noises" / name).string(), bed,
              WavFormat::pcm16);
  }
}

}  // namespace spax
