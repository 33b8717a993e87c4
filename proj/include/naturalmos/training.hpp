#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "naturalmos/adam.hpp"
#include "naturalmos/checkpoint.hpp"
#include "naturalmos/errors.hpp"
#include "naturalmos/manifest.hpp"
#include "naturalmos/metrics.hpp"
#include "naturalmos/model.hpp"
#include "naturalmos/rng.hpp"

namespace naturalmos {

struct TrainConfig {
  double lr = 0.001;
  int pretrain_epochs = 24;
  int finetune_max_epochs = 100;
  int early_stop_patience = 15;
  int batch_size = 16;
  int runs = 3;
  std::uint64_t seed = 1234;
  // Loss is fixed: MSE.

  /// Validity for full protocol runs. (train_epoch itself tolerates lr == 0,
  /// which is useful as a no-update diagnostic.)
  void validate() const {
    if (lr <= 0.0) throw std::invalid_argument("train config: lr must be positive");
    if (pretrain_epochs <= 0 || finetune_max_epochs <= 0 || early_stop_patience <= 0 ||
        batch_size <= 0 || runs <= 0)
      throw std::invalid_argument("train config: all counts must be positive");
  }

  /// Canonical echo of the configuration, used in logs and checkpoint
  /// metadata (and hashed for the config_hash field).
  std::string echo() const {
    return "lr=" + std::to_string(lr) + ",pretrain_epochs=" + std::to_string(pretrain_epochs) +
           ",finetune_max_epochs=" + std::to_string(finetune_max_epochs) +
           ",early_stop_patience=" + std::to_string(early_stop_patience) +
           ",batch_size=" + std::to_string(batch_size) + ",runs=" + std::to_string(runs) +
           ",seed=" + std::to_string(seed);
  }
};

/// Lazily computed, reusable per-file segment sequences. Keyed by resolved
/// path; any decode or feature failure is rethrown with the path attached.
class FeatureCache {
 public:
  explicit FeatureCache(FeatureConfig cfg = {}) : cfg_(cfg) {}

  const SegmentSequence& get(const std::string& resolved_path) {
    auto it = cache_.find(resolved_path);
    if (it != cache_.end()) return it->second;
    try {
      AudioSignal sig = read_wav(resolved_path);
      MelSpectrogram mel = compute_mel_spectrogram(sig, cfg_);
      SegmentSequence segs = segment_spectrogram(mel, cfg_);
      return cache_.emplace(resolved_path, std::move(segs)).first->second;
    } catch (const DataError&) {
      throw;
    } catch (const std::exception& e) {
      throw DataError("feature extraction failed for '" + resolved_path + "': " + e.what());
    }
  }

  const FeatureConfig& config() const { return cfg_; }
  std::size_t size() const { return cache_.size(); }

 private:
  FeatureConfig cfg_;
  std::map<std::string, SegmentSequence> cache_;
};

/// One file scheduled for training: resolved path plus its target score
/// (per-stimulus MOS, or the system MOS when labels are per-system).
struct TrainItem {
  std::string path;
  double target = 0.0;
};

inline std::vector<TrainItem> training_items(const DatasetManifest& manifest, Split split) {
  std::vector<TrainItem> items;
  for (const auto& e : manifest.entries)
    if (e.split == split) items.push_back({manifest.resolve(e), e.mos});
  return items;
}

/// One pass over the items: seeded shuffle, batches of up to batch_size,
/// right-padding handled by the model's batch forward, one Adam step per
/// batch. Returns the mean per-file MSE over the epoch.
inline double train_epoch(NisqaTtsModel& model, AdamOptimizer<float>& opt, FeatureCache& cache,
                          const std::vector<TrainItem>& items, int batch_size,
                          std::uint64_t seed, int run, int epoch) {
  if (items.empty()) throw DataError("train_epoch: no training entries");
  if (batch_size <= 0) throw std::invalid_argument("train_epoch: batch_size must be positive");

  std::vector<std::size_t> order(items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  SequentialRng shuffle_rng(seed, "train/shuffle/run" + std::to_string(run) + "/epoch" +
                                      std::to_string(epoch));
  shuffle_rng.shuffle(order);

  double loss_sum = 0.0;
  std::size_t batch_index = 0;
  for (std::size_t start = 0; start < order.size();
       start += static_cast<std::size_t>(batch_size), ++batch_index) {
    const std::size_t end =
        std::min(order.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<const SegmentSequence*> batch;
    std::vector<float> targets;
    for (std::size_t i = start; i < end; ++i) {
      batch.push_back(&cache.get(items[order[i]].path));
      targets.push_back(static_cast<float>(items[order[i]].target));
    }

    const DropoutKey key{seed, (static_cast<std::uint64_t>(run) << 40) ^
                                   (static_cast<std::uint64_t>(epoch) << 20) ^ batch_index};
    model.params().zero_grads();
    auto preds = model.forward_batch(batch, true, key);
    auto target_t =
        Tensor<float>::from_values({targets.size()}, std::vector<float>(targets));
    auto loss = mse_loss(preds, target_t);
    const double loss_val = static_cast<double>(loss.data()[0]);
    if (!std::isfinite(loss_val))
      throw NumericError("train_epoch: non-finite loss at run " + std::to_string(run) +
                         " epoch " + std::to_string(epoch) + " batch " +
                         std::to_string(batch_index));
    backward(loss);
    opt.step(model.params());
    loss_sum += loss_val * static_cast<double>(end - start);
  }
  return loss_sum / static_cast<double>(items.size());
}

/// Per-file predictions on one manifest (eval mode), correlated against the
/// manifest labels: the per-dataset validation PCC.
inline double validation_pcc(NisqaTtsModel& model, FeatureCache& cache,
                             const DatasetManifest& manifest, Split split) {
  std::vector<double> pred, mos;
  for (const auto& e : manifest.entries) {
    if (e.split != split) continue;
    pred.push_back(model.predict_segments(cache.get(manifest.resolve(e))));
    mos.push_back(e.mos);
  }
  return pearson_r(pred, mos);
}

struct EpochLog {
  int run = 0;
  int epoch = 0;
  double train_loss = 0.0;
  double val_avg_pcc = 0.0;  // NaN when no validation entries are available
  double seconds = 0.0;
};

inline std::string emit_training_log_csv(const std::vector<EpochLog>& log) {
  std::string out = "run,epoch,train_loss,val_avg_pcc,seconds\n";
  for (const auto& row : log) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%d,%d,%.6f,%.6f,%.3f\n", row.run, row.epoch,
                  row.train_loss, row.val_avg_pcc, row.seconds);
    out += buf;
  }
  return out;
}

struct PretrainResult {
  NisqaTtsModel model;
  CheckpointMeta meta;
  std::vector<EpochLog> log;
};

/// Stage one: a fresh model trained for exactly pretrain_epochs epochs on the
/// degradation corpus's train split (proxy MOS targets). The corpus's
/// validation split, when it has 3 or more entries, is tracked in the log.
inline PretrainResult pretrain(const DatasetManifest& corpus, const TrainConfig& cfg) {
  cfg.validate();
  const auto items = training_items(corpus, Split::train);
  if (items.empty()) throw DataError("pretrain: corpus has no train-split entries");

  std::size_t val_count = 0;
  for (const auto& e : corpus.entries)
    if (e.split == Split::validation) ++val_count;

  PretrainResult result{NisqaTtsModel::initialized(cfg.seed), CheckpointMeta{}, {}};
  FeatureCache cache(result.model.feature_config());
  AdamOptimizer<float> opt(cfg.lr);

  for (int epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double loss =
        train_epoch(result.model, opt, cache, items, cfg.batch_size, cfg.seed, 0, epoch);
    double pcc = std::numeric_limits<double>::quiet_NaN();
    if (val_count >= 3) pcc = validation_pcc(result.model, cache, corpus, Split::validation);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back({0, epoch, loss, pcc, secs});
  }

  result.meta.seed = cfg.seed;
  result.meta.stage = "pretrain";
  result.meta.extra["epochs"] = std::to_string(cfg.pretrain_epochs);
  result.meta.extra["config"] = cfg.echo();
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(detail::fnv1a64(cfg.echo())));
  result.meta.extra["config_hash"] = hash;
  return result;
}

struct TrainRunRecord {
  int run_index = 0;
  std::vector<double> epoch_train_loss;
  std::vector<double> epoch_val_pcc;
  int best_epoch = 0;
  double best_val_pcc = 0.0;
  std::string checkpoint_path;  // filled in by callers that persist per run
};

/// Argmax over every (run, epoch) pair of validation PCC; ties break to the
/// lowest run index, then the lowest epoch (scan order with strict >).
inline std::pair<int, int> select_best_run(const std::vector<TrainRunRecord>& records) {
  if (records.empty()) throw std::invalid_argument("select_best_run: no records");
  double best = -std::numeric_limits<double>::infinity();
  int best_run = records.front().run_index;
  int best_epoch = records.front().best_epoch;
  for (const auto& r : records) {
    if (!r.epoch_val_pcc.empty()) {
      for (std::size_t e = 0; e < r.epoch_val_pcc.size(); ++e)
        if (r.epoch_val_pcc[e] > best) {
          best = r.epoch_val_pcc[e];
          best_run = r.run_index;
          best_epoch = static_cast<int>(e);
        }
    } else if (r.best_val_pcc > best) {
      best = r.best_val_pcc;
      best_run = r.run_index;
      best_epoch = r.best_epoch;
    }
  }
  return {best_run, best_epoch};
}

struct FinetuneResult {
  NisqaTtsModel best_model;
  CheckpointMeta best_meta;
  int best_run = 0;
  int best_epoch = 0;
  std::vector<TrainRunRecord> records;
  std::vector<EpochLog> log;
};

/// Stage two: `runs` independent fine-tuning runs (all weights trainable)
/// over the train manifests' train splits. After each epoch the per-dataset
/// per-stimuli PCC over every validation manifest is averaged; each run early
/// stops after `early_stop_patience` epochs without improvement, and the
/// best (run, epoch) snapshot overall is returned.
///
/// `start` is the pretrained model to begin from; pass nullptr to fine-tune
/// from fresh initialization (seeded per run).
inline FinetuneResult finetune(const NisqaTtsModel* start,
                               const std::vector<DatasetManifest>& train_manifests,
                               const std::vector<DatasetManifest>& val_manifests,
                               const TrainConfig& cfg) {
  cfg.validate();
  if (train_manifests.empty()) throw DataError("finetune: no training manifests");
  if (val_manifests.empty()) throw DataError("finetune: no validation manifests");

  std::vector<TrainItem> items;
  for (const auto& m : train_manifests) {
    auto part = training_items(m, Split::train);
    items.insert(items.end(), part.begin(), part.end());
  }
  if (items.empty()) throw DataError("finetune: no train-split entries");

  for (const auto& m : val_manifests) {
    std::size_t n = 0;
    for (const auto& e : m.entries)
      if (e.split == Split::validation) ++n;
    if (n < 3)
      throw DataError("finetune: validation manifest '" + m.source_path + "' has " +
                      std::to_string(n) + " validation entries; at least 3 are required");
  }

  const FeatureConfig feat_cfg =
      start ? start->feature_config() : FeatureConfig{};
  FeatureCache cache(feat_cfg);

  FinetuneResult result{NisqaTtsModel(feat_cfg), CheckpointMeta{}, 0, 0, {}, {}};
  ParameterSet<float> best_params;
  double best_overall = -2.0;

  for (int run = 0; run < cfg.runs; ++run) {
    const std::uint64_t run_seed = cfg.seed + static_cast<std::uint64_t>(run);
    NisqaTtsModel model =
        start ? NisqaTtsModel(feat_cfg) : NisqaTtsModel::initialized(run_seed, feat_cfg);
    if (start) {
      for (auto& [name, t] : model.params())
        t.values() = start->params().get(name).values();
    }
    AdamOptimizer<float> opt(cfg.lr);
    TrainRunRecord record;
    record.run_index = run;
    ParameterSet<float> run_best_params;
    double run_best = -2.0;
    int run_best_epoch = 0;

    for (int epoch = 0; epoch < cfg.finetune_max_epochs; ++epoch) {
      const auto t0 = std::chrono::steady_clock::now();
      const double loss =
          train_epoch(model, opt, cache, items, cfg.batch_size, run_seed, run, epoch);

      double pcc_sum = 0.0;
      for (const auto& m : val_manifests)
        pcc_sum += validation_pcc(model, cache, m, Split::validation);
      const double avg_pcc = pcc_sum / static_cast<double>(val_manifests.size());
      if (!std::isfinite(avg_pcc))
        throw NumericError("finetune: non-finite validation PCC at run " +
                           std::to_string(run) + " epoch " + std::to_string(epoch));

      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      record.epoch_train_loss.push_back(loss);
      record.epoch_val_pcc.push_back(avg_pcc);
      result.log.push_back({run, epoch, loss, avg_pcc, secs});

      if (avg_pcc > run_best) {
        run_best = avg_pcc;
        run_best_epoch = epoch;
        run_best_params = model.params().clone();
      } else if (epoch - run_best_epoch >= cfg.early_stop_patience) {
        break;
      }
    }

    record.best_epoch = run_best_epoch;
    record.best_val_pcc = run_best;
    result.records.push_back(std::move(record));
    if (run_best > best_overall) {
      best_overall = run_best;
      best_params = std::move(run_best_params);
    }
  }

  const auto [best_run, best_epoch] = select_best_run(result.records);
  result.best_run = best_run;
  result.best_epoch = best_epoch;
  for (auto& [name, t] : result.best_model.params())
    t.values() = best_params.get(name).values();

  result.best_meta.seed = cfg.seed;
  result.best_meta.stage = "finetune";
  result.best_meta.extra["run"] = std::to_string(best_run);
  result.best_meta.extra["epoch"] = std::to_string(best_epoch);
  char pcc_buf[32];
  std::snprintf(pcc_buf, sizeof pcc_buf, "%.6f", best_overall);
  result.best_meta.extra["val_avg_pcc"] = pcc_buf;
  result.best_meta.extra["config"] = cfg.echo();
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(detail::fnv1a64(cfg.echo())));
  result.best_meta.extra["config_hash"] = hash;
  return result;
}

}  // namespace naturalmos
