#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "biov/biencoder/biencoder.hpp"
#include "biov/datapairs/batches.hpp"
#include "biov/datapairs/pairs.hpp"
#include "biov/lossmetrics/metrics.hpp"

namespace biov {

struct TrainConfig {
  Task task = Task::iris_iris;
  BackboneKind backbone = BackboneKind::smallcnn;
  std::size_t batch_size = 50;
  double base_lr = 3e-4;  // 0 = frozen run: nothing is updated
  int lr_step_epochs = 5;
  double lr_gamma = 0.1;
  double margin = 1.0;
  LabelConvention convention = LabelConvention::standard;
  int max_epochs = 30;
  int patience = 5;
  std::uint64_t seed = 0;
  bool augment = true;
  bool normalize_frequency = true;
  std::filesystem::path pairs_dir;
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> init_iris;
  std::optional<std::filesystem::path> init_fp;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Defaults per setting: batch 50 and lr 3e-4 for the CNN, batch 16 for the
/// transformer, lr 5e-5 when starting from pretrained towers.
TrainConfig default_train_config(Task task, BackboneKind backbone, bool pretrained = false);

/// Flat JSON object. Missing keys keep the values already in `base`; unknown
/// keys are rejected.
std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(std::string_view text, TrainConfig base = {}, const std::string& source = "<config>");
/// SHA-256 over the settings that affect results; paths are left out so the
/// same run in another directory hashes the same. Pretrained checkpoints are
/// included by content digest.
std::string train_config_hash(const TrainConfig& cfg);

/// Seed of the model's initial weights.
std::uint64_t init_seed(const TrainConfig& cfg);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;  // mean over batches
  double val_auc = 0.0;
  double lr = 0.0;
  std::size_t batches = 0;

  friend bool operator==(const EpochLog&, const EpochLog&) = default;
};

struct RunLog {
  std::vector<EpochLog> epochs;
  int best_epoch = -1;
  double best_val_auc = 0.0;
  bool stopped_early = false;
  double wall_time_s = 0.0;  // not part of equality

  friend bool operator==(const RunLog& a, const RunLog& b) {
    return a.epochs == b.epochs && a.best_epoch == b.best_epoch && a.best_val_auc == b.best_val_auc &&
           a.stopped_early == b.stopped_early;
  }
};

std::string epoch_log_to_json(const EpochLog& e);
EpochLog epoch_log_from_json(std::string_view line, const std::string& source = "<runlog>", std::size_t line_no = 0);
std::vector<EpochLog> read_run_log(const std::filesystem::path& file);

struct TrainResult {
  BiEncoderModel<float> best;  // weights from the best validation epoch
  RunLog log;
  std::filesystem::path checkpoint;  // out_dir/best.ckpt
};

/// Optional observer for progress reporting; called after every epoch.
using EpochCallback = std::function<void(const EpochLog&)>;

/// Reads only the train and val pair files of cfg.pairs_dir. Writes
/// out_dir/best.ckpt, out_dir/runlog.jsonl (one epoch per line) and
/// out_dir/train_summary.json.
TrainResult train(const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Scores every pair with eval-mode embeddings: a through tower A, b through
/// tower B. score = -distance.
std::vector<ScoredPair> score_pairs(const BiEncoderModel<float>& model, const PairSet& pairs, const ImageCache& cache);

/// Test metrics at a threshold chosen on the validation pairs. `test` must be
/// the test split and `val` the validation split, both of the model's task.
EvalReport evaluate(const BiEncoderModel<float>& model, const PairSet& test, const PairSet& val,
                    const ImageCache& cache);
/// Same, loading the checkpoint and the test/val pairs of a pairs directory.
EvalReport evaluate(const std::filesystem::path& checkpoint, const std::filesystem::path& pairs_dir);

}  // namespace biov
