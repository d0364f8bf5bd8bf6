#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fineas/ingest.hpp"
#include "fineas/models.hpp"
#include "fineas/train_eval.hpp"

namespace fineas::cli {

// Declarative run configuration, one JSON file per experiment. Flags
// override scalars (--seed, --arm, --window); FINEAS_WORK_DIR overrides
// the work directory.
struct RunConfig {
  std::filesystem::path raw_csv;
  std::filesystem::path work_dir = "work";
  ingest::ColumnMapping mapping;

  // Ingest parameters shared by every window; window_months varies per
  // window label.
  int top_k_entities = 50;
  UtcTime cutoff;
  int oos_days = 14;
  std::array<double, 3> split_fractions{0.995, 0.0025, 0.0025};

  std::vector<std::string> windows = {"6m", "12m", "24m"};

  int subword_target_size = 2000;
  int word_vocab_size = 2000;
  int max_len = 64;

  models::EncoderSpec encoder;
  models::BiLstmSpec bilstm;
  train::Arm arm = train::Arm::FineasFrozen;
  std::vector<train::Arm> matrix_arms = {
      train::Arm::FineasFrozen, train::Arm::FineasFinetune,
      train::Arm::BertFrozen, train::Arm::Bilstm};
  train::TrainConfig train;

  uint64_t seed = 0;

  static RunConfig load(const std::filesystem::path& path);

  // FNV-1a over the canonical serialization of every field that affects
  // numeric results (paths and report options excluded; the seed is
  // recorded separately in each artifact).
  uint64_t config_hash() const;

  ingest::IngestConfig ingest_config(int window_months) const;
  train::ExperimentSettings experiment_settings() const;

  // Per-cell seed: one master seed fans out to every (window, arm) cell
  // the same way in single-arm runs and the full matrix.
  uint64_t cell_seed(const std::string& window, train::Arm a) const;
};

// "6m" -> 6; throws ConfigError for anything but "<digits>m".
int parse_window_months(const std::string& label);

}  // namespace fineas::cli
