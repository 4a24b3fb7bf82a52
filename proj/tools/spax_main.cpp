#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "spax/config.hpp"
#include "spax/kv.hpp"
#include "spax/error.hpp"
#include "spax/estimator.hpp"
#include "spax/model.hpp"
#include "spax/png.hpp"
#include "spax/synth.hpp"
#include "spax/train.hpp"
#include "spax/wav.hpp"

namespace fs = std::filesystem;
using namespace spax;

namespace {

struct CommonFlags {
  std::string config_path;
  bool full_scale = false;
  bool desk_scale = false;
};

struct ModelOverrides {
  std::size_t channels = 0;
  std::size_t fft_size = 0;
  std::size_t hop = 0;
  std::size_t hidden = 0;
  long long blocks = -1;
  std::size_t heads = 0;
  std::size_t head_dim = 0;
  std::size_t query_dim = 0;
  std::string bands;
  bool rope_channel_axis = true;
};

void add_model_flags(CLI::App* cmd, ModelOverrides& mo) {
  cmd->add_option("--channels", mo.channels, "input channels (1 = w only, 4 = wxyz)");
  cmd->add_option("--fft", mo.fft_size, "analysis fft size");
  cmd->add_option("--hop", mo.hop, "analysis hop");
  cmd->add_option("--hidden", mo.hidden, "backbone feature width");
  cmd->add_option("--blocks", mo.blocks, "transformer block count");
  cmd->add_option("--heads", mo.heads, "attention heads");
  cmd->add_option("--head-dim", mo.head_dim, "attention head width");
  cmd->add_option("--query-dim", mo.query_dim, "query embedding dimension");
  cmd->add_option("--bands", mo.bands,
                  "comma-separated band widths (or 'default')");
  cmd->add_flag("--rope-channel-axis,!--no-rope-channel-axis",
                mo.rope_channel_axis,
                "rotary positions on the channel axis");
}

// flags > config file > defaults
RunConfig resolve_config(const CLI::App* cmd, const CommonFlags& common,
                         const ModelOverrides& mo) {
  RunConfig rc =
      common.full_scale ? RunConfig::full_scale() : RunConfig::desk_scale();
  if (!common.config_path.empty()) rc.apply_file(common.config_path);
  if (common.desk_scale) {
    RunConfig desk = RunConfig::desk_scale();
    rc.model = desk.model;
    rc.synth = desk.synth;
    rc.train.max_steps = rc.train.max_steps ? rc.train.max_steps : 2000;
  }
  if (cmd->count("--channels")) rc.model.channels = mo.channels;
  if (cmd->count("--fft")) rc.model.fft_size = mo.fft_size;
  if (cmd->count("--hop")) rc.model.hop = mo.hop;
  if (cmd->count("--hidden")) rc.model.hidden = mo.hidden;
  if (cmd->count("--blocks")) rc.model.blocks = static_cast<std::size_t>(mo.blocks);
  if (cmd->count("--heads")) rc.model.heads = mo.heads;
  if (cmd->count("--head-dim")) rc.model.head_dim = mo.head_dim;
  if (cmd->count("--query-dim")) rc.model.query_dim = mo.query_dim;
  if (cmd->count("--bands"))
    rc.model.bands = mo.bands == "default" ? std::vector<std::size_t>{}
                                           : parse_size_list(mo.bands, "bands");
  if (cmd->count("--rope-channel-axis") || cmd->count("--no-rope-channel-axis"))
    rc.model.rope_channel_axis = mo.rope_channel_axis;
  rc.finalize();
  return rc;
}

// The one flag combination that cannot mean anything: rotary positions over
// a single channel.
bool contradictory_flags(const CLI::App* cmd, const RunConfig& rc) {
  return cmd->count("--rope-channel-axis") > 0 && rc.model.channels == 1;
}

std::string stem_of(const std::string& path) {
  return fs::path(path).stem().string();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"query-driven source extraction from first-order ambisonics "
               "mixtures"};
  app.require_subcommand(1);

  // ---- synth ----
  auto* synth_cmd =
      app.add_subcommand("synth", "render spatial scenes from a corpus");
  std::string sy_corpus, sy_out, sy_manifest;
  std::size_t sy_count = 10;
  std::uint64_t sy_seed = 7;
  bool sy_make_corpus = false;
  CommonFlags sy_common;
  ModelOverrides sy_mo;
  synth_cmd->add_option("--corpus", sy_corpus, "corpus directory")->required();
  synth_cmd->add_option("--count", sy_count, "number of scenes");
  synth_cmd->add_option("--seed", sy_seed, "master seed");
  synth_cmd->add_option("--out", sy_out, "output directory")->required();
  synth_cmd->add_option("--manifest", sy_manifest,
                        "manifest path (default <out>/manifest.txt)");
  synth_cmd->add_flag("--make-corpus", sy_make_corpus,
                      "write the bundled demo corpus into --corpus first");
  synth_cmd->add_option("--config", sy_common.config_path, "config file");
  synth_cmd->add_flag("--full-scale", sy_common.full_scale,
                      "32 kHz / 2048-point configuration");
  add_model_flags(synth_cmd, sy_mo);

  // ---- train ----
  auto* train_cmd = app.add_subcommand("train", "train a model on synthesized scenes");
  std::string tr_config, tr_corpus, tr_out;
  std::uint64_t tr_seed = 0;
  bool tr_desk = false, tr_full = false;
  double tr_lr = 0.0, tr_lambda = -1.0, tr_sigma = -1.0;
  std::size_t tr_batch = 0, tr_accum = 0, tr_epochs = 0, tr_scenes = 0,
              tr_max_steps = 0, tr_ckpt_every = 0;
  ModelOverrides tr_mo;
  train_cmd->add_option("--config", tr_config, "config file");
  train_cmd->add_option("--corpus", tr_corpus, "corpus directory")->required();
  train_cmd->add_option("--out", tr_out, "checkpoint/metrics directory")->required();
  train_cmd->add_option("--seed", tr_seed, "training seed");
  train_cmd->add_flag("--desk-scale", tr_desk, "desk-scale preset");
  train_cmd->add_flag("--full-scale", tr_full, "full-scale preset");
  train_cmd->add_option("--lr", tr_lr, "learning rate");
  train_cmd->add_option("--lambda", tr_lambda, "waveform loss weight");
  train_cmd->add_option("--sigma", tr_sigma, "pseudo-query noise");
  train_cmd->add_option("--batch-size", tr_batch, "examples per micro-batch");
  train_cmd->add_option("--grad-accum", tr_accum, "gradient accumulation steps");
  train_cmd->add_option("--epochs", tr_epochs, "training epochs");
  train_cmd->add_option("--scenes-per-epoch", tr_scenes, "scenes per epoch");
  train_cmd->add_option("--max-steps", tr_max_steps, "cap on optimizer steps");
  train_cmd->add_option("--checkpoint-every", tr_ckpt_every,
                        "steps between checkpoints");
  add_model_flags(train_cmd, tr_mo);

  // ---- extract ----
  auto* extract_cmd =
      app.add_subcommand("extract", "pull one source out of a mixture");
  std::string ex_model, ex_mix, ex_query, ex_query_wav, ex_out, ex_png;
  extract_cmd->add_option("--model", ex_model, "checkpoint path")->required();
  extract_cmd->add_option("--mix", ex_mix, "mixture wav")->required();
  extract_cmd->add_option("--query", ex_query, "query embedding file (.qemb)");
  extract_cmd->add_option("--query-wav", ex_query_wav,
                          "derive the query from a wav exemplar");
  extract_cmd->add_option("--out", ex_out, "output wav")->required();
  extract_cmd->add_option("--spectrogram-png", ex_png,
                          "also write a log-magnitude image of the estimate");

  // ---- eval ----
  auto* eval_cmd = app.add_subcommand("eval", "score a model on a scene manifest");
  std::string ev_model, ev_set, ev_condition = "audio", ev_report, ev_corpus;
  double ev_sigma = 0.3;
  eval_cmd->add_option("--model", ev_model, "checkpoint path")->required();
  eval_cmd->add_option("--set", ev_set, "scene manifest")->required();
  eval_cmd->add_option("--condition", ev_condition,
                       "query condition: audio, text or pseudo")
      ->check(CLI::IsMember({"audio", "text", "pseudo"}));
  eval_cmd->add_option("--report", ev_report, "report file")->required();
  eval_cmd->add_option("--corpus", ev_corpus,
                       "corpus root (default: recorded in the manifest)");
  eval_cmd->add_option("--sigma", ev_sigma, "pseudo-condition noise");

  // ---- gradcheck ----
  auto* gc_cmd = app.add_subcommand(
      "gradcheck", "verify analytic gradients against finite differences");
  CommonFlags gc_common;
  ModelOverrides gc_mo;
  double gc_tol = 1e-3, gc_eps = 1e-5;
  std::string gc_mode = "auto";
  std::uint64_t gc_seed = 17;
  gc_cmd->add_option("--config", gc_common.config_path, "config file");
  gc_cmd->add_option("--tol", gc_tol, "relative error tolerance");
  gc_cmd->add_option("--eps", gc_eps, "finite-difference step");
  gc_cmd->add_option("--mode", gc_mode, "full, sample or auto")
      ->check(CLI::IsMember({"full", "sample", "auto"}));
  gc_cmd->add_option("--seed", gc_seed, "model/example seed");
  add_model_flags(gc_cmd, gc_mo);

  if (argc < 2) {
    std::cerr << app.help();
    return 2;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (synth_cmd->parsed()) {
      RunConfig rc = resolve_config(synth_cmd, sy_common, sy_mo);
      if (contradictory_flags(synth_cmd, rc)) {
        std::cerr << "usage error: --rope-channel-axis with --channels 1\n";
        return 2;
      }
      if (sy_make_corpus) write_demo_corpus(sy_corpus, sy_seed, rc.synth);
      Corpus corpus = corpus_scan(sy_corpus);
      for (const auto& w : corpus.warnings)
        std::cerr << "warning: " << w << "\n";
      fs::create_directories(sy_out);

      Manifest manifest;
      manifest.corpus_root = sy_corpus;
      manifest.sample_rate = corpus.sample_rate;
      for (std::size_t i = 0; i < sy_count; ++i) {
        const SceneSpec spec =
            sample_scene(corpus, rc.synth, derive_seed(sy_seed, i));
        manifest.scenes.push_back(spec);
        const TrainingExample ex = render_example(spec, corpus, rc.synth);
        char name[64];
        std::snprintf(name, sizeof(name), "scene_%04zu", i);
        write_wav((fs::path(sy_out) / (std::string(name) + "_mix.wav")).string(),
                  ex.mixture, WavFormat::pcm16);
        FoaWaveform target(1, ex.target.size(), ex.mixture.sample_rate);
        std::copy(ex.target.begin(), ex.target.end(), target.channel(0));
        write_wav(
            (fs::path(sy_out) / (std::string(name) + "_target.wav")).string(),
            target, WavFormat::pcm16);
        save_embedding(ex.query, (fs::path(sy_out) /
                                  (std::string(name) + "_query.qemb"))
                                     .string());
      }
      const std::string manifest_path =
          sy_manifest.empty() ? (fs::path(sy_out) / "manifest.txt").string()
                              : sy_manifest;
      write_manifest(manifest_path, manifest);
      rc.train.seed = sy_seed;
      write_run_config(rc, (fs::path(sy_out) / "run.cfg").string());
      std::cout << "wrote " << sy_count << " scenes to " << sy_out << "\n";
      return 0;
    }

    if (train_cmd->parsed()) {
      CommonFlags common{tr_config, tr_full, tr_desk};
      RunConfig rc = resolve_config(train_cmd, common, tr_mo);
      if (contradictory_flags(train_cmd, rc)) {
        std::cerr << "usage error: --rope-channel-axis with --channels 1\n";
        return 2;
      }
      if (train_cmd->count("--seed")) rc.train.seed = tr_seed;
      if (train_cmd->count("--lr")) rc.train.lr = tr_lr;
      if (train_cmd->count("--lambda")) rc.train.lambda = tr_lambda;
      if (train_cmd->count("--sigma")) rc.train.sigma = tr_sigma;
      if (train_cmd->count("--batch-size")) rc.train.batch_size = tr_batch;
      if (train_cmd->count("--grad-accum")) rc.train.grad_accum = tr_accum;
      if (train_cmd->count("--epochs")) rc.train.epochs = tr_epochs;
      if (train_cmd->count("--scenes-per-epoch"))
        rc.train.scenes_per_epoch = tr_scenes;
      if (train_cmd->count("--max-steps")) rc.train.max_steps = tr_max_steps;
      if (train_cmd->count("--checkpoint-every"))
        rc.train.checkpoint_every = tr_ckpt_every;
      rc.finalize();

      Corpus corpus = corpus_scan(tr_corpus);
      for (const auto& w : corpus.warnings)
        std::cerr << "warning: " << w << "\n";
      if (corpus.sample_rate && corpus.sample_rate != rc.model.sample_rate)
        throw std::invalid_argument(
            "corpus sample rate " + std::to_string(corpus.sample_rate) +
            " does not match model sample rate " +
            std::to_string(rc.model.sample_rate));

      Model model;
      model.build(rc.model);
      model.init_weights(rc.train.seed);
      fs::create_directories(tr_out);
      write_run_config(rc, (fs::path(tr_out) / "run.cfg").string());

      SceneDataset data(corpus, rc.synth, rc.train.seed);
      train_loop(model, rc.train, data, tr_out, [](const MetricsRow& row) {
        if (row.step % 50 == 0)
          std::cout << "step " << row.step << " total " << row.total << "\n";
      });
      std::cout << "checkpoint written to "
                << (fs::path(tr_out) / "model_final.ckpt").string() << "\n";
      return 0;
    }

    if (extract_cmd->parsed()) {
      if (ex_query.empty() == ex_query_wav.empty()) {
        std::cerr << "usage error: provide exactly one of --query / --query-wav\n";
        return 2;
      }
      Model model = load_checkpoint(ex_model);
      FoaWaveform mix = read_wav(ex_mix);
      if (model.cfg.channels == 1 && mix.channels == 4)
        mix = slice_channels(mix, 1);
      QueryEmbedding query;
      if (!ex_query.empty()) {
        query = load_embedding(ex_query);
      } else {
        const std::string stem = stem_of(ex_query_wav);
        query = audio_embedding(class_label(stem), stem, model.cfg.query_dim,
                                0.1);
      }
      const FoaWaveform est = extract(mix, query, model);
      write_wav(ex_out, est, WavFormat::float32);
      if (!ex_png.empty()) {
        const StftConfig stft_cfg =
            make_stft_config(model.cfg.fft_size, model.cfg.hop);
        write_spectrogram_png(ex_png, stft(est, stft_cfg));
      }
      RunConfig rc;
      rc.model = model.cfg;
      rc.finalize();
      write_run_config(rc, ex_out + ".run.cfg");
      std::cout << "wrote " << ex_out << "\n";
      return 0;
    }

    if (eval_cmd->parsed()) {
      Model model = load_checkpoint(ev_model);
      Manifest manifest = read_manifest(ev_set);
      if (manifest.scenes.empty())
        throw std::invalid_argument("empty evaluation set");
      const std::string corpus_root =
          ev_corpus.empty() ? manifest.corpus_root : ev_corpus;
      Corpus corpus = corpus_scan(corpus_root);
      const Modality condition = ev_condition == "text" ? Modality::text
                                 : ev_condition == "pseudo"
                                     ? Modality::pseudo
                                     : Modality::audio;
      std::vector<EvalItem> items;
      const EvalRow row = evaluate(model, manifest, corpus, condition,
                                   ev_sigma, &items);
      std::ofstream report(ev_report, std::ios::trunc);
      if (!report) throw IoError("cannot write report: " + ev_report);
      report.precision(6);
      report << "# median scores; sdr here is the plain scale-sensitive "
                "definition\n";
      report << "condition " << row.condition << " channels " << row.channels
             << " items " << row.items << " median_si_sdr_db "
             << row.median_si_sdr_db << " median_sdr_db " << row.median_sdr_db
             << "\n";
      for (std::size_t i = 0; i < items.size(); ++i)
        report << "item " << i << " si_sdr_db " << items[i].si_sdr_db
               << " sdr_db " << items[i].sdr_db << "\n";
      RunConfig rc;
      rc.model = model.cfg;
      rc.finalize();
      write_run_config(rc, ev_report + ".run.cfg");
      std::cout << "condition " << row.condition << " channels "
                << row.channels << " median_si_sdr_db " << row.median_si_sdr_db
                << " median_sdr_db " << row.median_sdr_db << "\n";
      return 0;
    }

    if (gc_cmd->parsed()) {
      RunConfig rc = resolve_config(gc_cmd, gc_common, gc_mo);
      if (contradictory_flags(gc_cmd, rc)) {
        std::cerr << "usage error: --rope-channel-axis with --channels 1\n";
        return 2;
      }
      Model model;
      model.build(rc.model);
      model.init_weights(gc_seed);
      const TrainingExample ex = synthetic_example(rc.model, gc_seed + 1);
      const GradCheckMode mode = gc_mode == "full"     ? GradCheckMode::full
                                 : gc_mode == "sample" ? GradCheckMode::sample
                                                       : GradCheckMode::automatic;
      const GradCheckReport report =
          grad_check(model, ex, gc_eps, gc_tol, mode, rc.train.lambda);
      std::cout << "checked " << report.coords_checked << " coordinates, "
                << report.failures << " over tol " << gc_tol << ", worst rel "
                << report.worst_rel << "\n";
      for (const auto& o : report.worst) {
        if (o.rel_err <= gc_tol) break;
        std::cout << "  " << o.path << "[" << o.index << "] analytic "
                  << o.analytic << " fd " << o.fd << " rel " << o.rel_err
                  << "\n";
      }
      std::cout << (report.passed ? "PASS" : "FAIL") << "\n";
      return report.passed ? 0 : 1;
    }
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 0;
}
