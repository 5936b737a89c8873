#pragma once

// Optimizer, learning-rate schedule, classification metrics and the
// cross-validated training harness.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "sfnet/data.hpp"
#include "sfnet/model/sfnet.hpp"

namespace sfnet::train {

struct TrainConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  std::size_t epochs = 30;
  std::size_t batch = 8;
  /// Negative means lr / 100.
  double lr_min = -1.0;
  std::uint64_t seed = 0;

  double min_lr() const { return lr_min < 0 ? lr / 100.0 : lr_min; }
  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
/// Strict parse: unknown keys are rejected, missing keys keep defaults.
TrainConfig train_config_from_json(const nlohmann::json& j);

// ---- optimizer ------------------------------------------------------------

struct AdamWState {
  Tensor<float> m;
  Tensor<float> v;
};

/// One decoupled-weight-decay Adam update of a single tensor at step t >= 1:
/// p *= 1 - lr*wd (only when p.decay), then p -= lr * mhat / (sqrt(vhat) + eps).
void adamw_update(Parameter<float>& p, AdamWState& state, std::size_t t, double lr,
                  const TrainConfig& cfg);

class AdamW {
 public:
  AdamW(std::vector<Parameter<float>*> params, const TrainConfig& cfg);

  /// Applies one update to every parameter. Returns false (and counts the
  /// skip) when any gradient is non-finite; nothing is modified then.
  bool step(double lr);

  std::size_t steps() const { return t_; }
  std::size_t skipped() const { return skipped_; }

 private:
  std::vector<Parameter<float>*> params_;
  std::vector<AdamWState> state_;
  TrainConfig cfg_;
  std::size_t t_ = 0;
  std::size_t skipped_ = 0;
};

/// lr_min + (lr_max - lr_min) (1 + cos(pi epoch / (total - 1))) / 2; lr_max when total == 1.
double cosine_lr(std::size_t epoch, std::size_t total, double lr_max, double lr_min);

// ---- metrics --------------------------------------------------------------

/// Label 1 (AD-like) is the positive class.
struct ConfusionCounts {
  std::size_t tp = 0, fn = 0, fp = 0, tn = 0;
  std::size_t total() const { return tp + fn + fp + tn; }
  void add(int label, int prediction);
};

/// A metric whose denominator is zero is left empty.
struct Metrics {
  std::optional<double> acc, sen, spe, f1;
};

Metrics metrics(const ConfusionCounts& c);

/// Mann-Whitney statistic with midranks: P(score+ > score-) + P(tie) / 2.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

struct MetricSummary {
  std::optional<double> mean;
  std::optional<double> sd;  // sample SD (n - 1), needs two defined values
  std::size_t defined = 0;
  std::size_t undefined = 0;
};

/// Folds where the value is undefined are skipped and counted.
MetricSummary summarize(const std::vector<std::optional<double>>& values);

nlohmann::json optional_json(const std::optional<double>& v);
std::string optional_csv(const std::optional<double>& v);

// ---- datasets and evaluation ----------------------------------------------

struct Dataset {
  std::vector<Tensor<float>> volumes;  // each [1, nx, ny, nz], z-scored
  std::vector<int> labels;
  std::vector<std::string> ids;

  std::size_t size() const { return labels.size(); }
  Tensor<float> batch(const std::vector<std::size_t>& idx) const;
  void add(Tensor<float> volume, int label, std::string id);
};

Dataset load_dataset(const std::vector<data::VolumeRecord>& records,
                     const std::vector<std::size_t>& indices);

struct EvalResult {
  ConfusionCounts counts;
  std::vector<double> scores;  // softmax probability of label 1
  std::vector<int> labels;
  double loss = 0;
  Metrics metrics;
  std::optional<double> auc;  // empty when one class is missing
};

EvalResult evaluate(model::SFNet<float>& model, const Dataset& ds, std::size_t batch = 8);

nlohmann::json to_json(const EvalResult& r);

// ---- training -------------------------------------------------------------

class TrainDivergence : public std::runtime_error {
 public:
  TrainDivergence(std::size_t fold, std::size_t epoch, const std::string& what)
      : std::runtime_error(what), fold(fold), epoch(epoch) {}
  std::size_t fold;
  std::size_t epoch;
};

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0;
  double train_loss = 0;
  double val_loss = 0;
  Metrics val;
  std::optional<double> val_auc;
};

struct FoldResult {
  std::size_t fold = 0;
  std::vector<EpochLog> epochs;
  std::size_t best_epoch = 0;
  std::size_t skipped_steps = 0;
  std::optional<EvalResult> test_best;
  std::optional<EvalResult> test_final;
  double final_train_accuracy = 0;
};

nlohmann::json to_json(const FoldResult& r);

/// Writes the epoch log header and rows (epoch,lr,train_loss,val_acc,...).
void write_epoch_csv(const std::filesystem::path& path, const std::vector<EpochLog>& epochs);

/// Seeds derived from (seed, stream, index) through std::seed_seq.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

/// Trains one model. The best epoch is the one with the highest validation
/// accuracy, ties broken by lower validation loss, then by the earlier epoch.
/// When out_dir is non-empty, writes fold{k}_epochs.csv, fold{k}_best/ and
/// fold{k}_final/. A non-finite training loss throws TrainDivergence.
/// A trailing batch of one sample is merged into the previous batch.
FoldResult train_fold(const model::SFNetConfig& model_cfg, const Dataset& train_set,
                      const Dataset& val_set, const Dataset* test_set, const TrainConfig& cfg,
                      std::size_t fold, const std::filesystem::path& out_dir = {});

/// Five-fold run over a fold plan; writes out_dir/report.json and returns it.
nlohmann::json run_cross_validation(const model::SFNetConfig& model_cfg,
                                    const std::vector<data::VolumeRecord>& records,
                                    const data::FoldPlan& plan, const TrainConfig& cfg,
                                    const std::filesystem::path& out_dir,
                                    std::size_t parallel_folds = 1);

/// Mean and SD of test metrics across folds, at the best and at the final epoch.
nlohmann::json aggregate_folds(const std::vector<FoldResult>& folds);

}  // namespace sfnet::train
