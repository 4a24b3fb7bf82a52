#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spax/conditioning.hpp"
#include "spax/dsp.hpp"
#include "spax/rng.hpp"

namespace spax {

// Multichannel room impulse response, channel-major (C x K).
struct Rir {
  std::size_t channels = 0;
  std::size_t sample_rate = 0;
  std::vector<double> taps;

  std::size_t length() const { return channels ? taps.size() / channels : 0; }
  double* channel(std::size_t c) { return taps.data() + c * length(); }
  const double* channel(std::size_t c) const {
    return taps.data() + c * length();
  }
};

struct RirShape {
  double direct_min_s = 0.001;
  double direct_max_s = 0.004;
  double tail_s = 0.08;
  double decay_s = 0.02;
  double tail_gain = 0.12;
};

// Synthetic 4-channel RIR: a direct-path impulse carrying first-order
// directivity gains (w=1, x=cos el cos az, y=cos el sin az, z=sin el) for a
// seeded random direction, plus an exponentially decaying noise tail.
Rir synth_rir(std::size_t sample_rate, std::uint64_t seed,
              const RirShape& shape = {});

// channel c of the result = dry * rir_c (full convolution); out_len 0 keeps
// the full L+K-1 length, otherwise the result is cut/padded to out_len.
FoaWaveform convolve_rir(const FoaWaveform& dry, const Rir& rir,
                         std::size_t out_len = 0);

struct CorpusEntry {
  std::string id;     // corpus-relative path, e.g. "sources/tone_a_1.wav"
  std::string label;  // class label derived from the file stem
  std::size_t channels = 0;
  std::size_t sample_rate = 0;
  std::size_t length = 0;
};

struct Corpus {
  std::string root;
  std::size_t sample_rate = 0;  // rate shared by all valid entries
  std::vector<CorpusEntry> sources;  // mono dry clips
  std::vector<CorpusEntry> rirs;     // 4-channel impulse responses
  std::vector<CorpusEntry> noises;   // mono or 4-channel beds
  std::vector<std::string> warnings;

  const CorpusEntry* find(const std::string& id) const;
};

// Indexes root/sources, root/rirs, root/noises (sorted by name). Files that
// fail validation land in warnings and are excluded; unreadable files throw.
Corpus corpus_scan(const std::string& root);

struct SceneEvent {
  std::string source_id;
  std::string rir_id;  // corpus path or "synth:<seed>"
  double gain_db = 0.0;
  std::size_t onset = 0;
  bool is_target = false;
};

struct SceneSpec {
  std::vector<SceneEvent> events;
  std::string noise_id;  // empty = no noise term
  double noise_gain_db = 0.0;
  std::size_t duration = 0;  // samples
  std::uint64_t seed = 0;
};

struct SceneRender {
  FoaWaveform mixture;  // 4 x duration
  std::vector<std::vector<double>> dry_targets;  // per event, scene length
};

// X = sum_i gain_i * (s_i * H_i) + gain_N * N, dry targets kept per event.
SceneRender mix_scene(const SceneSpec& spec, const Corpus& corpus);

// Peak simultaneous event count over the scene (uses source lengths).
std::size_t max_simultaneous_events(const SceneSpec& spec,
                                    const Corpus& corpus);

struct SynthConfig {
  std::size_t sample_rate = 8000;
  double duration_s = 1.0;
  std::size_t min_events = 1;
  std::size_t max_events = 3;
  std::size_t max_overlap = 3;
  double gain_db_min = -6.0;
  double gain_db_max = 3.0;
  double snr_db_min = 5.0;
  double snr_db_max = 20.0;
  double sigma = 0.3;        // pseudo-query perturbation
  std::size_t query_dim = 16;
  double modality_gap = 0.1;
  RirShape rir;
};

struct TrainingExample {
  FoaWaveform mixture;
  std::vector<double> target;  // gained dry target at its onset, scene length
  QueryEmbedding query;
  SceneSpec scene;
  std::size_t target_event = 0;
  std::string target_label;
};

// Deterministic scene draw: sources, rirs (synthetic when the corpus has
// none), gains, onsets, target pick and resolved noise gain all derive from
// the seed.
SceneSpec sample_scene(const Corpus& corpus, const SynthConfig& cfg,
                       std::uint64_t seed);

TrainingExample render_example(const SceneSpec& spec, const Corpus& corpus,
                               const SynthConfig& cfg);

// count examples with per-scene seeds derive_seed(master_seed, first_index+i)
std::vector<TrainingExample> generate_batch(const Corpus& corpus,
                                            const SynthConfig& cfg,
                                            std::uint64_t master_seed,
                                            std::uint64_t first_index,
                                            std::size_t count);

struct Manifest {
  std::string corpus_root;
  std::size_t sample_rate = 0;
  std::vector<SceneSpec> scenes;
};

void write_manifest(const std::string& path, const Manifest& manifest);
Manifest read_manifest(const std::string& path);

// Small deterministic corpus of tonal/noise dry clips, synthetic FOA RIRs and
// noise beds so every tool runs without external audio.
void write_demo_corpus(const std::string& root, std::uint64_t seed,
                       const SynthConfig& cfg);

}  // namespace spax
