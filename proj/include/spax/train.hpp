#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "spax/loss.hpp"
#include "spax/model.hpp"
#include "spax/synth.hpp"

namespace spax {

struct AdamWConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

// Adaptive-moment optimizer with decoupled weight decay: the decay step
// p -= lr*wd*p applies separately from the moment update.
class AdamW {
 public:
  AdamW() = default;
  explicit AdamW(const AdamWConfig& cfg) : cfg_(cfg) {}

  void attach(const ParamList& params);
  // Gradients are read as grad * grad_scale (the loss normalization across
  // the effective batch happens here, once).
  void step(const ParamList& params, double grad_scale);
  std::uint64_t step_count() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  AdamWConfig cfg_;
  std::vector<Tensor> m_, v_;
  std::uint64_t t_ = 0;
};

// Deterministic example source: example(i) depends only on i and the
// dataset's own seed, so prefetching can never change results.
class Dataset {
 public:
  virtual ~Dataset() = default;
  virtual TrainingExample example(std::uint64_t index) const = 0;
};

class SceneDataset : public Dataset {
 public:
  SceneDataset(const Corpus& corpus, SynthConfig cfg, std::uint64_t seed)
      : corpus_(corpus), cfg_(cfg), seed_(seed) {}
  TrainingExample example(std::uint64_t index) const override;

 private:
  const Corpus& corpus_;
  SynthConfig cfg_;
  std::uint64_t seed_;
};

class FixedDataset : public Dataset {
 public:
  explicit FixedDataset(std::vector<TrainingExample> items)
      : items_(std::move(items)) {}
  TrainingExample example(std::uint64_t index) const override {
    return items_[index % items_.size()];
  }

 private:
  std::vector<TrainingExample> items_;
};

// Forward + reverse pass for one example; parameter gradients accumulate
// into the model. The mixture is sliced to the model's channel count.
LossBreakdown loss_and_grads(Model& model, const TrainingExample& example,
                             double lambda);

// first `want` channels of a waveform (w comes first in wxyz order)
FoaWaveform slice_channels(const FoaWaveform& wave, std::size_t want);

enum class GradCheckMode { full, sample, automatic };

struct GradCheckOffender {
  std::string path;
  std::size_t index = 0;
  double analytic = 0.0;
  double fd = 0.0;
  double rel_err = 0.0;
};

struct GradCheckReport {
  std::size_t coords_checked = 0;
  std::size_t failures = 0;
  double worst_rel = 0.0;
  std::vector<GradCheckOffender> worst;  // up to 10, most severe first
  bool passed = false;
};

// Central finite differences against the analytic gradients. rel_err uses
// max(|analytic|, |fd|, 1e-8) in the denominator. A coordinate that fails at
// the base eps retries at eps/8 and eps/64 before being reported (steps over
// an activation kink shrink away; genuine gradient bugs persist).
// `automatic` sweeps every coordinate below 10k parameters, else samples
// `sample_count` seeded coordinates. `tamper` mutates the analytic gradients
// before comparison; it exists so fault injection can prove the oracle
// catches wrong gradients.
GradCheckReport grad_check(
    const Model& model, const TrainingExample& example, double eps, double tol,
    GradCheckMode mode = GradCheckMode::automatic, double lambda = 100.0,
    std::size_t sample_count = 1000, std::uint64_t sample_seed = 17,
    const std::function<void(const ParamList&)>& tamper = {});

// throws VerificationError naming the worst offender when the check fails
void require_grad_check(const GradCheckReport& report);

// Seeded random mixture/target/query sized for the config (frames controls
// the time extent); used by gradient verification runs.
TrainingExample synthetic_example(const ModelConfig& cfg, std::uint64_t seed,
                                  std::size_t frames = 8);

struct TrainConfig {
  double lr = 3e-4;
  double weight_decay = 1e-2;
  std::size_t batch_size = 4;
  std::size_t grad_accum = 2;
  std::size_t epochs = 300;
  std::size_t scenes_per_epoch = 2000;
  std::size_t max_steps = 0;  // optional cap on optimizer steps (0 = none)
  std::uint64_t seed = 7;
  double lambda = 100.0;
  double sigma = 0.3;
  std::size_t checkpoint_every = 0;  // steps between checkpoints (0 = final only)
  std::size_t prefetch = 4;          // handoff queue capacity (0 = synchronous)
};

struct MetricsRow {
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  double si_sdr_loss = 0.0;
  double l1 = 0.0;
  double total = 0.0;
};

using StepCallback = std::function<void(const MetricsRow&)>;

// Seeded training: per step, accumulate gradients over grad_accum
// micro-batches of batch_size examples, then one optimizer step on the
// mean-normalized gradient. Writes metrics.csv and model checkpoints into
// out_dir (empty out_dir skips all file output).
void train_loop(Model& model, const TrainConfig& cfg, const Dataset& data,
                const std::string& out_dir, const StepCallback& on_step = {});

double median(std::vector<double> values);

struct EvalRow {
  std::string condition;
  std::string channels;  // "wxyz" or "w"
  std::size_t items = 0;
  double median_si_sdr_db = 0.0;
  double median_sdr_db = 0.0;
};

struct EvalItem {
  double si_sdr_db = 0.0;
  double sdr_db = 0.0;
};

// Re-synthesizes each manifest scene, builds the query for the requested
// condition, extracts and scores against the dry target.
EvalRow evaluate(const Model& model, const Manifest& manifest,
                 const Corpus& corpus, Modality condition, double sigma,
                 std::vector<EvalItem>* per_item = nullptr);

const char* modality_name(Modality m);

}  // namespace spax
