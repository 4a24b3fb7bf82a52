#pragma once

#include <string>

#include "spax/model.hpp"
#include "spax/synth.hpp"
#include "spax/train.hpp"

namespace spax {

inline constexpr const char* kSpaxVersion = "spax 0.1.0";

// Merged run configuration. Precedence: CLI flags > config file > defaults.
// The defaults are the desk-scale setup (8 kHz, 256-point analysis, tiny
// backbone); full_scale() switches to the 32 kHz / 2048-point configuration.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  SynthConfig synth;

  static RunConfig desk_scale();
  static RunConfig full_scale();

  // Parse a sectioned key=value file over the current values. Unknown keys
  // are errors.
  void apply_file(const std::string& path);

  // Copy the shared fields (query dim, sample rate, sigma) from their owning
  // sections into the synth block.
  void finalize();

  std::string to_text() const;
};

// provenance copy written into run output directories
void write_run_config(const RunConfig& cfg, const std::string& path);

}  // namespace spax
