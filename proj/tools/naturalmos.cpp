// naturalmos: command-line front end for the NaturalMOS library.
//
// Subcommands: make-pretrain-data, pretrain, finetune, predict, evaluate,
// gradcheck, inspect. Exit codes: 0 success, 1 usage error, 2 data error,
// 3 numeric failure.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "naturalmos/naturalmos.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

/// Where the effective seed came from, for the log line the spec requires
/// when the default is used.
enum class SeedSource { flag, config_file, env, fallback };

const char* seed_source_name(SeedSource s) {
  switch (s) {
    case SeedSource::flag: return "--seed";
    case SeedSource::config_file: return "config file";
    case SeedSource::env: return "NATURALMOS_SEED";
    case SeedSource::fallback: return "default";
  }
  return "?";
}

/// Raw values of the config-key flags a subcommand exposes. A flag
/// participates in layering only when the user actually passed it.
struct ConfigFlags {
  std::string config_path;
  double lr = 0.0;
  int pretrain_epochs = 0;
  int finetune_max_epochs = 0;
  int early_stop_patience = 0;
  int batch_size = 0;
  int runs = 0;
  std::uint64_t seed = 0;
  int fft_size = 0;
  int n_mels = 0;
  double fmax_hz = 0.0;
  double window_ms = 0.0;
  double hop_ms = 0.0;
  int segment_frames = 0;

  CLI::App* cmd = nullptr;

  void attach(CLI::App* sub, bool with_features = true) {
    cmd = sub;
    sub->add_option("--config", config_path, "Flat key = value config file");
    sub->add_option("--seed", seed, "Seed for every stochastic stage");
    sub->add_option("--lr", lr, "Adam learning rate");
    sub->add_option("--pretrain-epochs", pretrain_epochs, "Pretraining epoch count");
    sub->add_option("--finetune-max-epochs", finetune_max_epochs,
                    "Fine-tuning epoch cap per run");
    sub->add_option("--patience", early_stop_patience, "Early-stop patience (epochs)");
    sub->add_option("--batch-size", batch_size, "Files per training batch");
    sub->add_option("--runs", runs, "Independent fine-tuning runs");
    if (with_features) {
      sub->add_option("--fft-size", fft_size, "FFT size (samples)");
      sub->add_option("--n-mels", n_mels, "Mel band count");
      sub->add_option("--fmax-hz", fmax_hz, "Filterbank upper frequency (Hz)");
      sub->add_option("--window-ms", window_ms, "STFT window length (ms)");
      sub->add_option("--hop-ms", hop_ms, "STFT hop length (ms)");
      sub->add_option("--segment-frames", segment_frames, "Frames per CNN segment");
    }
  }

  /// True when the user supplied the flag. Subcommands that do not expose
  /// the feature flags simply report them as absent.
  bool passed(const std::string& flag) const {
    const CLI::Option* opt = cmd->get_option_no_throw(flag);
    return opt != nullptr && opt->count() > 0;
  }
};

/// Layers the effective configuration: defaults, then NATURALMOS_SEED, then
/// the config file, then explicit flags. The effective seed and its source
/// are logged to stderr.
naturalmos::CliConfig resolve_config(const ConfigFlags& f) {
  naturalmos::CliConfig cfg;
  SeedSource source = SeedSource::fallback;

  if (const char* env = std::getenv("NATURALMOS_SEED")) {
    naturalmos::apply_config_value(cfg, "seed", env);
    source = SeedSource::env;
  }

  if (f.passed("--config")) {
    for (const auto& [key, value] : naturalmos::load_config_file(f.config_path)) {
      naturalmos::apply_config_value(cfg, key, value);
      if (key == "seed") source = SeedSource::config_file;
    }
  }

  if (f.passed("--seed")) {
    cfg.train.seed = f.seed;
    source = SeedSource::flag;
  }
  if (f.passed("--lr")) cfg.train.lr = f.lr;
  if (f.passed("--pretrain-epochs")) cfg.train.pretrain_epochs = f.pretrain_epochs;
  if (f.passed("--finetune-max-epochs")) cfg.train.finetune_max_epochs = f.finetune_max_epochs;
  if (f.passed("--patience")) cfg.train.early_stop_patience = f.early_stop_patience;
  if (f.passed("--batch-size")) cfg.train.batch_size = f.batch_size;
  if (f.passed("--runs")) cfg.train.runs = f.runs;
  if (f.passed("--fft-size")) cfg.features.fft_size = f.fft_size;
  if (f.passed("--n-mels")) cfg.features.n_mels = f.n_mels;
  if (f.passed("--fmax-hz")) cfg.features.fmax_hz = f.fmax_hz;
  if (f.passed("--window-ms")) cfg.features.window_ms = f.window_ms;
  if (f.passed("--hop-ms")) cfg.features.hop_ms = f.hop_ms;
  if (f.passed("--segment-frames")) cfg.features.segment_frames = f.segment_frames;

  std::cerr << "naturalmos: seed " << cfg.train.seed << " (" << seed_source_name(source)
            << ")\n";
  return cfg;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw naturalmos::DataError("cannot open for writing: " + path);
  out << text;
  if (!out) throw naturalmos::DataError("write failed: " + path);
}

/// Per-file feature extraction, optionally fanned out over worker threads.
/// Results and errors are reported in input order, so the output does not
/// depend on the job count.
std::vector<naturalmos::SegmentSequence> extract_features(
    const std::vector<std::string>& paths, const naturalmos::FeatureConfig& cfg, int jobs) {
  std::vector<std::optional<naturalmos::SegmentSequence>> slots(paths.size());
  std::vector<std::exception_ptr> errors(paths.size());

  auto extract_one = [&](std::size_t i) {
    try {
      naturalmos::AudioSignal sig = naturalmos::read_wav(paths[i]);
      naturalmos::MelSpectrogram mel = naturalmos::compute_mel_spectrogram(sig, cfg);
      slots[i] = naturalmos::segment_spectrogram(mel, cfg);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };

  if (jobs <= 1 || paths.size() <= 1) {
    for (std::size_t i = 0; i < paths.size(); ++i) extract_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i = next.fetch_add(1); i < paths.size(); i = next.fetch_add(1))
        extract_one(i);
    };
    const std::size_t n_threads =
        std::min<std::size_t>(static_cast<std::size_t>(jobs), paths.size());
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }

  for (std::size_t i = 0; i < paths.size(); ++i)
    if (errors[i]) std::rethrow_exception(errors[i]);

  std::vector<naturalmos::SegmentSequence> out;
  out.reserve(paths.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

// ---------------------------------------------------------------------------
// Subcommand runners
// ---------------------------------------------------------------------------

struct MakePretrainDataArgs {
  std::string refs_dir;
  std::string out_dir;
  int conditions = 8;
  ConfigFlags cfg;
};

int run_make_pretrain_data(const MakePretrainDataArgs& a) {
  const auto cfg = resolve_config(a.cfg);
  const auto manifest = naturalmos::generate_pretrain_corpus(a.refs_dir, a.out_dir,
                                                             a.conditions, cfg.train.seed);
  std::cout << "wrote " << manifest.entries.size() << " degraded files and "
            << manifest.source_path << "\n";
  return kExitOk;
}

struct PretrainArgs {
  std::string manifest_path;
  std::string out_ckpt;
  std::string log_path;
  ConfigFlags cfg;
};

int run_pretrain(const PretrainArgs& a) {
  const auto cfg = resolve_config(a.cfg);
  const auto manifest = naturalmos::load_manifest(a.manifest_path);

  naturalmos::TrainConfig tc = cfg.train;
  auto result = naturalmos::pretrain(manifest, tc);
  result.meta.extra["cli_config"] = cfg.echo();
  naturalmos::save_checkpoint(result.model, result.meta, a.out_ckpt);
  if (!a.log_path.empty())
    write_text_file(a.log_path, naturalmos::emit_training_log_csv(result.log));

  std::cout << "pretrain: " << tc.pretrain_epochs << " epochs, final train loss "
            << result.log.back().train_loss << ", saved " << a.out_ckpt << "\n";
  return kExitOk;
}

struct FinetuneArgs {
  std::vector<std::string> train_paths;
  std::vector<std::string> val_paths;
  std::string out_ckpt;
  std::string from_ckpt;
  std::string log_path;
  std::vector<double> rescale;  // empty or [lo, hi]
  ConfigFlags cfg;
};

int run_finetune(const FinetuneArgs& a) {
  const auto cfg = resolve_config(a.cfg);

  std::optional<naturalmos::RescaleMap> rescale;
  if (!a.rescale.empty()) rescale = naturalmos::RescaleMap{a.rescale[0], a.rescale[1]};

  std::vector<naturalmos::DatasetManifest> train, val;
  for (const auto& p : a.train_paths) train.push_back(naturalmos::load_manifest(p, rescale));
  for (const auto& p : a.val_paths) val.push_back(naturalmos::load_manifest(p, rescale));

  std::optional<naturalmos::LoadedCheckpoint> start;
  if (!a.from_ckpt.empty()) start = naturalmos::load_checkpoint(a.from_ckpt);

  auto result = naturalmos::finetune(start ? &start->model : nullptr, train, val, cfg.train);
  result.best_meta.extra["cli_config"] = cfg.echo();
  result.best_meta.extra["init"] =
      a.from_ckpt.empty() ? std::string("fresh") : "checkpoint:" + a.from_ckpt;
  naturalmos::save_checkpoint(result.best_model, result.best_meta, a.out_ckpt);
  if (!a.log_path.empty())
    write_text_file(a.log_path, naturalmos::emit_training_log_csv(result.log));

  std::cout << "finetune: best run " << result.best_run << " epoch " << result.best_epoch
            << ", val avg PCC " << result.best_meta.extra["val_avg_pcc"] << ", saved "
            << a.out_ckpt << "\n";
  return kExitOk;
}

struct PredictArgs {
  std::string model_path;
  std::vector<std::string> wavs;
  std::string dump_mel_path;
  int jobs = 1;
};

int run_predict(const PredictArgs& a) {
  auto loaded = naturalmos::load_checkpoint(a.model_path);

  if (!a.dump_mel_path.empty()) {
    if (a.wavs.size() != 1)
      throw std::invalid_argument("--dump-mel requires exactly one --wav");
    const auto sig = naturalmos::read_wav(a.wavs[0]);
    const auto mel = naturalmos::compute_mel_spectrogram(sig, loaded.model.feature_config());
    std::string csv;
    for (std::size_t t = 0; t < mel.num_frames; ++t) {
      for (int b = 0; b < mel.n_mels; ++b) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.6f", mel.at(t, b));
        csv += buf;
        csv += (b + 1 < mel.n_mels) ? ',' : '\n';
      }
    }
    write_text_file(a.dump_mel_path, csv);
  }

  const auto features = extract_features(a.wavs, loaded.model.feature_config(), a.jobs);
  for (std::size_t i = 0; i < a.wavs.size(); ++i) {
    const double mos = loaded.model.predict_segments(features[i]);
    std::printf("%s\t%.4f\n", a.wavs[i].c_str(), mos);
  }
  return kExitOk;
}

struct EvaluateArgs {
  std::string model_path;
  std::vector<std::string> manifest_paths;
  std::vector<std::string> groups;
  std::string out_csv;
  std::string out_table;
  std::vector<double> rescale;
  int jobs = 1;
  ConfigFlags cfg;
};

int run_evaluate(const EvaluateArgs& a) {
  if (!a.groups.empty() && a.groups.size() != 1 && a.groups.size() != a.manifest_paths.size())
    throw std::invalid_argument(
        "--group must be given once (applied to all manifests) or once per manifest");

  auto cfg = resolve_config(a.cfg);
  auto loaded = naturalmos::load_checkpoint(a.model_path);
  cfg.features = loaded.model.feature_config();

  std::optional<naturalmos::RescaleMap> rescale;
  if (!a.rescale.empty()) rescale = naturalmos::RescaleMap{a.rescale[0], a.rescale[1]};

  std::vector<naturalmos::EvalDataset> inputs;
  for (std::size_t i = 0; i < a.manifest_paths.size(); ++i) {
    naturalmos::EvalDataset ds;
    ds.manifest = naturalmos::load_manifest(a.manifest_paths[i], rescale);
    ds.group = a.groups.empty() ? std::string("all")
                                : a.groups[a.groups.size() == 1 ? 0 : i];
    const auto violations = naturalmos::validate_manifest(ds.manifest);
    if (!violations.empty()) {
      std::string msg = "manifest '" + a.manifest_paths[i] + "' failed validation:";
      for (const auto& v : violations) msg += "\n  " + v;
      throw naturalmos::DataError(msg);
    }
    inputs.push_back(std::move(ds));
  }

  // Extract features for every referenced file up front (parallelizable),
  // then serve predictions from the table in manifest order.
  std::vector<std::string> all_paths;
  for (const auto& ds : inputs)
    for (const auto& e : ds.manifest.entries) all_paths.push_back(ds.manifest.resolve(e));
  std::sort(all_paths.begin(), all_paths.end());
  all_paths.erase(std::unique(all_paths.begin(), all_paths.end()), all_paths.end());
  auto features = extract_features(all_paths, loaded.model.feature_config(), a.jobs);
  std::map<std::string, const naturalmos::SegmentSequence*> by_path;
  for (std::size_t i = 0; i < all_paths.size(); ++i) by_path[all_paths[i]] = &features[i];

  // The predictor sees entries with already-resolved lookups; resolution is
  // repeated here because the entry alone does not know its manifest root.
  std::map<std::string, std::string> resolve_table;
  for (const auto& ds : inputs)
    for (const auto& e : ds.manifest.entries) {
      const std::string resolved = ds.manifest.resolve(e);
      const auto [it, inserted] = resolve_table.emplace(e.path, resolved);
      if (!inserted && it->second != resolved)
        throw naturalmos::DataError("entry path '" + e.path +
                                    "' resolves differently across manifests; evaluate "
                                    "them in separate invocations");
    }

  naturalmos::Predictor predict = [&](const naturalmos::ManifestEntry& e) {
    return loaded.model.predict_segments(*by_path.at(resolve_table.at(e.path)));
  };

  const auto report = naturalmos::evaluate_datasets(predict, inputs);
  const std::string footer = "# config: " + cfg.echo() + "\n";
  const std::string table = naturalmos::format_report_text(report) + footer;
  const std::string csv = naturalmos::emit_report_csv(report) + footer;

  std::cout << table;
  if (!a.out_table.empty()) write_text_file(a.out_table, table);
  if (!a.out_csv.empty()) write_text_file(a.out_csv, csv);
  return kExitOk;
}

struct GradcheckArgs {
  int points = 5;
  ConfigFlags cfg;
};

int run_gradcheck(const GradcheckArgs& a) {
  const auto cfg = resolve_config(a.cfg);
  const auto cases = naturalmos::run_gradcheck_suite(cfg.train.seed, a.points);
  bool all_ok = true;
  for (const auto& c : cases) {
    std::printf("%-20s max_rel_err %.3e (threshold %.0e) %s\n", c.name.c_str(), c.max_rel_err,
                c.threshold, c.passed ? "PASS" : "FAIL");
    all_ok = all_ok && c.passed;
  }
  if (!all_ok) throw naturalmos::NumericError("gradcheck: one or more cases failed");
  return kExitOk;
}

struct InspectArgs {
  std::string ckpt_path;
};

int run_inspect(const InspectArgs& a) {
  const auto header = naturalmos::inspect_checkpoint(a.ckpt_path);
  std::cout << header.dump(2) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NaturalMOS: synthesized-speech naturalness prediction"};
  app.require_subcommand(1);

  MakePretrainDataArgs mk;
  auto* mk_cmd = app.add_subcommand(
      "make-pretrain-data", "Synthesize the degradation pretraining corpus from clean WAVs");
  mk_cmd->add_option("--refs", mk.refs_dir, "Directory of clean reference WAVs")->required();
  mk_cmd->add_option("--out", mk.out_dir, "Output directory for degraded WAVs + manifest")
      ->required();
  mk_cmd->add_option("--conditions", mk.conditions, "Degradation conditions per reference");
  mk.cfg.attach(mk_cmd, false);

  PretrainArgs pt;
  auto* pt_cmd =
      app.add_subcommand("pretrain", "Train a fresh model on the degradation corpus");
  pt_cmd->add_option("--manifest", pt.manifest_path, "Pretraining corpus manifest CSV")
      ->required();
  pt_cmd->add_option("--out", pt.out_ckpt, "Output checkpoint path")->required();
  pt_cmd->add_option("--log", pt.log_path, "Training log CSV path");
  pt.cfg.attach(pt_cmd);

  FinetuneArgs ft;
  auto* ft_cmd = app.add_subcommand(
      "finetune", "Fine-tune on naturalness manifests with multi-run selection");
  ft_cmd->add_option("--train", ft.train_paths, "Training manifest CSV (repeatable)")
      ->required();
  ft_cmd->add_option("--val", ft.val_paths, "Validation manifest CSV (repeatable)")
      ->required();
  ft_cmd->add_option("--out", ft.out_ckpt, "Output checkpoint path")->required();
  ft_cmd->add_option("--from", ft.from_ckpt, "Starting checkpoint (omit for fresh init)");
  ft_cmd->add_option("--log", ft.log_path, "Training log CSV path");
  ft_cmd->add_option("--rescale", ft.rescale, "Linear rating rescale: LO HI -> [1,5]")
      ->expected(2);
  ft.cfg.attach(ft_cmd);

  PredictArgs pr;
  auto* pr_cmd = app.add_subcommand("predict", "Predict naturalness MOS for WAV files");
  pr_cmd->add_option("--model", pr.model_path, "Model checkpoint")->required();
  pr_cmd->add_option("--wav", pr.wavs, "Input WAV (repeatable)")->required();
  pr_cmd->add_option("--dump-mel", pr.dump_mel_path,
                     "Write the mel spectrogram (T x n_mels CSV, dB); single --wav only");
  pr_cmd->add_option("--jobs", pr.jobs, "Parallel feature-extraction workers");

  EvaluateArgs ev;
  auto* ev_cmd =
      app.add_subcommand("evaluate", "Score manifests and emit the r/RMSE report");
  ev_cmd->add_option("--model", ev.model_path, "Model checkpoint")->required();
  ev_cmd->add_option("--manifest", ev.manifest_paths, "Labeled manifest CSV (repeatable)")
      ->required();
  ev_cmd->add_option("--group", ev.groups,
                     "Group label, once for all manifests or once per manifest");
  ev_cmd->add_option("--out-csv", ev.out_csv, "Write the report as CSV");
  ev_cmd->add_option("--out-table", ev.out_table, "Write the report as a text table");
  ev_cmd->add_option("--rescale", ev.rescale, "Linear rating rescale: LO HI -> [1,5]")
      ->expected(2);
  ev_cmd->add_option("--jobs", ev.jobs, "Parallel feature-extraction workers");
  ev.cfg.attach(ev_cmd, false);

  GradcheckArgs gc;
  auto* gc_cmd =
      app.add_subcommand("gradcheck", "Run the finite-difference autograd verification suite");
  gc_cmd->add_option("--points", gc.points, "Randomized evaluation points per case");
  gc.cfg.attach(gc_cmd, false);

  InspectArgs in;
  auto* in_cmd = app.add_subcommand("inspect", "Print a checkpoint's header as JSON");
  in_cmd->add_option("--checkpoint", in.ckpt_path, "Checkpoint path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (app.got_subcommand(mk_cmd)) return run_make_pretrain_data(mk);
    if (app.got_subcommand(pt_cmd)) return run_pretrain(pt);
    if (app.got_subcommand(ft_cmd)) return run_finetune(ft);
    if (app.got_subcommand(pr_cmd)) return run_predict(pr);
    if (app.got_subcommand(ev_cmd)) return run_evaluate(ev);
    if (app.got_subcommand(gc_cmd)) return run_gradcheck(gc);
    if (app.got_subcommand(in_cmd)) return run_inspect(in);
    std::cerr << "error: no subcommand\n";
    return kExitUsage;
  } catch (const naturalmos::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const naturalmos::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
}
