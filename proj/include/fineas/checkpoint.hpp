#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "fineas/models.hpp"

namespace fineas::ckpt {

// Flat parameter container: little-endian float32 values per named entry
// plus a small text header. Byte-identical for identical inputs.
struct ParamEntry {
  std::string name;
  std::vector<int> shape;
  std::vector<float> values;
};

struct Checkpoint {
  // Header keys are free-form; the CLI records model_kind, spec fields,
  // config_hash, vocab_hash, seed and frozen state here.
  std::map<std::string, std::string> header;
  std::vector<ParamEntry> params;
};

inline constexpr uint32_t kFormatVersion = 1;

void save(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load(const std::filesystem::path& path);

// Model <-> checkpoint bridges (float instantiations only; training runs
// in float32).
std::vector<ParamEntry> snapshot_params(
    const std::vector<num::Tensor<float>>& params);

void restore_params(std::vector<num::Tensor<float>>& params,
                    const std::vector<ParamEntry>& entries);

Checkpoint from_model(const models::FineasEncoderModel<float>& model);
Checkpoint from_model(const models::BiLstmModel<float>& model);

void load_into_model(models::FineasEncoderModel<float>& model,
                     const Checkpoint& ckpt);
void load_into_model(models::BiLstmModel<float>& model, const Checkpoint& ckpt);

}  // namespace fineas::ckpt
