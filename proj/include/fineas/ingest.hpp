#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "fineas/data_model.hpp"

namespace fineas::ingest {

// Maps canonical field names to the column headers present in the input
// file. Defaults to the canonical header itself.
struct ColumnMapping {
  std::string timestamp = kFieldTimestamp;
  std::string entity = kFieldEntity;
  std::string headline = kFieldHeadline;
  std::string sentiment = kFieldSentiment;
};

struct IngestConfig {
  int top_k_entities = 50;
  UtcTime cutoff;                  // end of the in-sample window, inclusive
  int window_months = 6;           // 6 / 12 / 24
  int oos_days = 14;
  std::array<double, 3> split_fractions{0.995, 0.0025, 0.0025};
  uint64_t seed = 0;

  void validate() const;  // throws Error(ConfigError) on bad values
};

struct Reject {
  size_t line = 0;  // physical line in the source file
  RowError error;
};

struct LoadResult {
  std::vector<NewsEvent> events;  // valid rows, file order
  std::vector<Reject> rejects;    // invalid rows, never silently dropped
};

// Parses the file as CSV with a header row. Throws Error(FileNotFound) or
// Error(ParseError); per-row validation failures land in rejects.
LoadResult load_events(const std::filesystem::path& path,
                       const ColumnMapping& mapping = {});

// The k entities with the highest event counts; ties rank
// lexicographically by entity_id.
std::vector<std::string> top_entities(const std::vector<NewsEvent>& events,
                                      int k);

// Keeps events whose entity is among the k entities with the highest
// event counts; ties rank lexicographically by entity_id. Order preserved.
std::vector<NewsEvent> filter_top_entities(const std::vector<NewsEvent>& events,
                                           int k);

// Drops later occurrences of any (entity_id, headline, sentiment) key.
std::vector<NewsEvent> dedupe(const std::vector<NewsEvent>& events);

struct WindowedEvents {
  std::vector<NewsEvent> in_window;  // cutoff - window < t <= cutoff
  std::vector<NewsEvent> oos;        // cutoff < t <= cutoff + oos_days
};

WindowedEvents window_events(const std::vector<NewsEvent>& events,
                             const IngestConfig& cfg);

struct SplitResult {
  std::vector<NewsEvent> train;
  std::vector<NewsEvent> validation;
  std::vector<NewsEvent> test;
};

// Fisher-Yates shuffle under `seed` (see rng.hpp for the documented PRNG),
// then contiguous slices. |validation| = round(n * f_val), |test| =
// round(n * f_test), remainder to train; round = half away from zero.
SplitResult split_random(const std::vector<NewsEvent>& events,
                         const std::array<double, 3>& fractions,
                         uint64_t seed);

// Full pipeline for one window: filter -> dedupe -> window -> split.
struct BundleResult {
  DatasetBundle bundle;
  size_t rejects = 0;  // carried from load for the meta file
};

DatasetBundle make_bundle(const std::vector<NewsEvent>& events,
                          const IngestConfig& cfg,
                          const std::string& window_label);

// Bundle directory layout: train.csv / validation.csv / test.csv / oos.csv
// plus bundle.meta. All writes are atomic (temp file + rename).
void save_bundle(const DatasetBundle& bundle, const IngestConfig& cfg,
                 size_t reject_count, uint64_t config_hash,
                 const std::filesystem::path& dir);

DatasetBundle load_bundle(const std::filesystem::path& dir);

void save_events_csv(const std::vector<NewsEvent>& events,
                     const std::filesystem::path& path);

void save_rejects_csv(const std::vector<Reject>& rejects,
                      const std::filesystem::path& path);

}  // namespace fineas::ingest
