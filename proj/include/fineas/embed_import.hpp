#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "fineas/errors.hpp"

namespace fineas::models {

// Import path for externally produced sentence embeddings (e.g. a real
// Sentence-BERT 768-dim export): rows keyed by a hash of the normalized
// headline so the file carries no raw text.
//
// File: CSV with header "headline_hash,v1,...,vD"; hashes are 16 hex
// digits. Manifest: sibling text file recording the hashing rule and
// dimension.
class EmbeddingTable {
 public:
  explicit EmbeddingTable(int dim) : dim_(dim) {}

  int dim() const { return dim_; }
  size_t rows() const { return by_hash_.size(); }

  // fnv1a64 over the normalized headline bytes; the rule recorded in the
  // manifest.
  static uint64_t headline_hash(const std::string& headline);
  static const char* hash_rule() { return "fnv1a64(normalized_headline)"; }

  void insert(const std::string& headline, std::vector<float> vec);
  void insert_hashed(uint64_t hash, std::vector<float> vec);

  // nullptr when the headline has no imported embedding.
  const std::vector<float>* lookup(const std::string& headline) const;

  void save(const std::filesystem::path& csv_path,
            const std::filesystem::path& manifest_path) const;
  static EmbeddingTable load(const std::filesystem::path& csv_path,
                             const std::filesystem::path& manifest_path);

 private:
  int dim_;
  std::unordered_map<uint64_t, std::vector<float>> by_hash_;
  std::vector<uint64_t> insertion_order_;  // keeps save() deterministic
};

}  // namespace fineas::models
