#pragma once

#include <array>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "fineas/data_model.hpp"
#include "fineas/models.hpp"
#include "fineas/tokenize.hpp"

namespace fineas::train {

struct TrainConfig {
  int batch_size = 32;
  double lr = 0.001;
  int max_epochs = 100;  // documented default cap
  int patience = 5;
  uint64_t seed = 0;
  bool shuffle_each_epoch = true;

  void validate() const {
    if (batch_size < 1) raise(Errc::ConfigError, "batch_size must be >= 1");
    if (patience < 1) raise(Errc::ConfigError, "patience must be >= 1");
    if (max_epochs < 1) raise(Errc::ConfigError, "max_epochs must be >= 1");
    if (lr <= 0.0) raise(Errc::ConfigError, "lr must be > 0");
  }
};

struct TrainRecord {
  std::vector<double> train_losses;  // one entry per completed epoch
  std::vector<double> val_losses;
  int best_epoch = -1;  // 0-based index of the minimum validation loss
  bool stopped_early = false;
  double wall_time_seconds = 0.0;

  int epochs() const { return static_cast<int>(val_losses.size()); }
};

// Early-stopping controller: stop once the validation loss has gone
// `patience` consecutive epochs without strict improvement. Extracted
// from the training loop so the contract can be driven with arbitrary
// loss sequences.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience) : patience_(patience) {
    if (patience < 1) raise(Errc::ConfigError, "patience must be >= 1");
  }

  // Records one epoch's validation loss; returns true when training
  // should stop after this epoch.
  bool record(double val_loss) {
    const int epoch = count_++;
    if (best_epoch_ < 0 || val_loss < best_loss_) {
      best_loss_ = val_loss;
      best_epoch_ = epoch;
      since_best_ = 0;
      return false;
    }
    ++since_best_;
    if (since_best_ >= patience_) {
      stopped_ = true;
      return true;
    }
    return false;
  }

  bool improved_at(int epoch) const { return epoch == best_epoch_; }
  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }
  bool stopped() const { return stopped_; }
  int epochs_after_best() const { return since_best_; }

 private:
  int patience_;
  int count_ = 0;
  int best_epoch_ = -1;
  double best_loss_ = 0.0;
  int since_best_ = 0;
  bool stopped_ = false;
};

// (1/n) * sum (pred - target)^2, accumulated in double.
double mse(const std::vector<float>& pred, const std::vector<float>& target);

// One split encoded for a model: token sequences plus float targets.
struct EncodedSplit {
  std::vector<tok::TokenSeq> seqs;
  std::vector<float> targets;
};

EncodedSplit encode_split(const std::vector<NewsEvent>& events,
                          const tok::Vocab& vocab, int max_len);

// ------------------------------------------------------------------ training

// Trains the model on bundle.train with per-epoch validation on
// bundle.validation: seeded shuffle -> minibatches -> MSE -> backward ->
// Adam, early stopping with best-weights restoration. Frozen encoders
// train through a feature cache (the encoder output is constant), which
// is exactly equivalent to the full graph with dropout off.
//
// RNG streams derived from cfg.seed: stream 1 drives epoch shuffles,
// stream 2 dropout draws.
TrainRecord train_model(models::FineasEncoderModelF& model,
                        const tok::Vocab& vocab, const DatasetBundle& bundle,
                        const TrainConfig& cfg);

TrainRecord train_model(models::BiLstmModelF& model, const tok::Vocab& vocab,
                        const DatasetBundle& bundle, const TrainConfig& cfg);

// Head-only training on externally supplied feature rows (the embedding
// import path). Features are row-aligned with targets. Optimization runs
// over per-dimension standardized features and the affine transform is
// folded back into the head, so the returned head applies to raw rows.
TrainRecord train_head_on_features(models::FineasEncoderModelF& model,
                                   const std::vector<float>& train_features,
                                   const std::vector<float>& train_targets,
                                   const std::vector<float>& val_features,
                                   const std::vector<float>& val_targets,
                                   const TrainConfig& cfg);

// ---------------------------------------------------------------- evaluation

// Dropout-off full-split MSE; per-example double accumulation in dataset
// order makes the result independent of eval batch size.
double evaluate(const models::FineasEncoderModelF& model,
                const tok::Vocab& vocab, const std::vector<NewsEvent>& events,
                int batch_size = 32);

double evaluate(const models::BiLstmModelF& model, const tok::Vocab& vocab,
                const std::vector<NewsEvent>& events, int batch_size = 32);

std::vector<float> predict_events(const models::FineasEncoderModelF& model,
                                  const tok::Vocab& vocab,
                                  const std::vector<NewsEvent>& events,
                                  int batch_size = 32);

std::vector<float> predict_events(const models::BiLstmModelF& model,
                                  const tok::Vocab& vocab,
                                  const std::vector<NewsEvent>& events,
                                  int batch_size = 32);

// Eval-mode sentence embeddings for a list of events, row-major
// (n x d_model). Used by the frozen-arm feature cache and the oracle
// tests.
std::vector<float> extract_features(const models::FineasEncoderModelF& model,
                                    const tok::Vocab& vocab,
                                    const std::vector<NewsEvent>& events,
                                    int batch_size = 32);

// --------------------------------------------------------------- histograms

struct Histograms {
  // Count per entity, descending, ties lexicographic.
  std::vector<std::pair<std::string, size_t>> company;
  // Unit-width integer bins of word-tokenizer lengths, min..max inclusive.
  std::vector<std::pair<int, size_t>> word_counts;
  // 40 uniform bins over [-1, 1]; scores at +1 land in the last bin.
  std::array<size_t, 40> sentiment{};
};

Histograms emit_histograms(const std::vector<NewsEvent>& events);

// ----------------------------------------------------------- experiment grid

enum class Arm { FineasFrozen, FineasFinetune, BertFrozen, Bilstm };

const char* arm_name(Arm arm);
Arm arm_from_name(const std::string& name);

struct ExperimentSettings {
  int subword_target_size = 2000;
  int word_vocab_size = 2000;
  int max_len = 64;
  models::EncoderSpec encoder;  // vocab_size overwritten per window
  models::BiLstmSpec bilstm;    // vocab_size overwritten per window
  TrainConfig train;
  uint64_t config_hash = 0;
  uint64_t seed = 0;
};

struct ExperimentCell {
  std::string window;
  Arm arm = Arm::FineasFrozen;
  double test_mse = 0.0;
  double oos_mse = 0.0;
  TrainRecord record;
};

struct EvalReport {
  uint64_t config_hash = 0;
  uint64_t seed = 0;
  std::vector<ExperimentCell> cells;
  // Keyed by window label, plus "<window>-oos" for the holdout slice.
  std::vector<std::pair<std::string, Histograms>> histograms;
};

// Trains every (window x arm) cell and evaluates it on the window's test
// and out-of-sample splits. Bundles are processed in the given order.
EvalReport run_experiment(
    const std::vector<std::pair<std::string, DatasetBundle>>& bundles,
    const std::vector<Arm>& arms, const ExperimentSettings& settings);

}  // namespace fineas::train
