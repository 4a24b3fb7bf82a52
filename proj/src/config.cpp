#include "spax/config.hpp"

#include <fstream>
#include <sstream>

#include "spax/error.hpp"
#include "spax/kv.hpp"

namespace spax {

RunConfig RunConfig::desk_scale() { return RunConfig{}; }

RunConfig RunConfig::full_scale() {
  RunConfig cfg;
  cfg.model = ModelConfig::full_scale();
  cfg.synth.sample_rate = cfg.model.sample_rate;
  cfg.synth.duration_s = 10.0;
  cfg.finalize();
  return cfg;
}

void RunConfig::apply_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config file: " + path);
  std::stringstream buf;
  buf << f.rdbuf();
  const KvFile kv = parse_kv(buf.str());

  for (const auto& [key, value] : kv.entries) {
    if (key == "model.channels") model.channels = parse_size(value, key);
    else if (key == "model.sample_rate") model.sample_rate = parse_size(value, key);
    else if (key == "model.fft_size") model.fft_size = parse_size(value, key);
    else if (key == "model.hop") model.hop = parse_size(value, key);
    else if (key == "model.hidden") model.hidden = parse_size(value, key);
    else if (key == "model.blocks") model.blocks = parse_size(value, key);
    else if (key == "model.heads") model.heads = parse_size(value, key);
    else if (key == "model.head_dim") model.head_dim = parse_size(value, key);
    else if (key == "model.query_dim") model.query_dim = parse_size(value, key);
    else if (key == "model.film_hidden") model.film_hidden = parse_size(value, key);
    else if (key == "model.bands")
      model.bands = value == "default" ? std::vector<std::size_t>{}
                                       : parse_size_list(value, key);
    else if (key == "model.rope_theta") model.rope_theta = parse_real(value, key);
    else if (key == "model.rope_channel_axis")
      model.rope_channel_axis = parse_bool(value, key);
    else if (key == "model.merge_layers") model.merge_layers = parse_size(value, key);
    else if (key == "train.lr") train.lr = parse_real(value, key);
    else if (key == "train.weight_decay") train.weight_decay = parse_real(value, key);
    else if (key == "train.batch_size") train.batch_size = parse_size(value, key);
    else if (key == "train.grad_accum") train.grad_accum = parse_size(value, key);
    else if (key == "train.epochs") train.epochs = parse_size(value, key);
    else if (key == "train.scenes_per_epoch")
      train.scenes_per_epoch = parse_size(value, key);
    else if (key == "train.max_steps") train.max_steps = parse_size(value, key);
    else if (key == "train.seed") train.seed = parse_size(value, key);
    else if (key == "train.lambda") train.lambda = parse_real(value, key);
    else if (key == "train.sigma") train.sigma = parse_real(value, key);
    else if (key == "train.checkpoint_every")
      train.checkpoint_every = parse_size(value, key);
    else if (key == "train.prefetch") train.prefetch = parse_size(value, key);
    else if (key == "synth.duration_s") synth.duration_s = parse_real(value, key);
    else if (key == "synth.min_events") synth.min_events = parse_size(value, key);
    else if (key == "synth.max_events") synth.max_events = parse_size(value, key);
    else if (key == "synth.max_overlap") synth.max_overlap = parse_size(value, key);
    else if (key == "synth.gain_db_min") synth.gain_db_min = parse_real(value, key);
    else if (key == "synth.gain_db_max") synth.gain_db_max = parse_real(value, key);
    else if (key == "synth.snr_db_min") synth.snr_db_min = parse_real(value, key);
    else if (key == "synth.snr_db_max") synth.snr_db_max = parse_real(value, key);
    else if (key == "synth.modality_gap")
      synth.modality_gap = parse_real(value, key);
    else
      throw FormatError("unknown config key '" + key + "' in " + path);
  }
  finalize();
}

void RunConfig::finalize() {
  synth.sample_rate = model.sample_rate;
  synth.query_dim = model.query_dim;
  synth.sigma = train.sigma;
}

std::string RunConfig::to_text() const {
  std::ostringstream out;
  out.precision(17);
  out << "# " << kSpaxVersion << "\n";
  out << "[model]\n" << model.to_text();
  out << "\n[train]\n";
  out << "lr = " << train.lr << "\n";
  out << "weight_decay = " << train.weight_decay << "\n";
  out << "batch_size = " << train.batch_size << "\n";
  out << "grad_accum = " << train.grad_accum << "\n";
  out << "epochs = " << train.epochs << "\n";
  out << "scenes_per_epoch = " << train.scenes_per_epoch << "\n";
  out << "max_steps = " << train.max_steps << "\n";
  out << "seed = " << train.seed << "\n";
  out << "lambda = " << train.lambda << "\n";
  out << "sigma = " << train.sigma << "\n";
  out << "checkpoint_every = " << train.checkpoint_every << "\n";
  out << "prefetch = " << train.prefetch << "\n";
  out << "\n[synth]\n";
  out << "duration_s = " << synth.duration_s << "\n";
  out << "min_events = " << synth.min_events << "\n";
  out << "max_events = " << synth.max_events << "\n";
  out << "max_overlap = " << synth.max_overlap << "\n";
  out << "gain_db_min = " << synth.gain_db_min << "\n";
  out << "gain_db_max = " << synth.gain_db_max << "\n";
  out << "snr_db_min = " << synth.snr_db_min << "\n";
  out << "snr_db_max = " << synth.snr_db_max << "\n";
  out << "modality_gap = " << synth.modality_gap << "\n";
  return out.str();
}

void write_run_config(const RunConfig& cfg, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write run config: " + path);
  f << cfg.to_text();
  if (!f) throw IoError("short write to run config: " + path);
}

}  // namespace spax
