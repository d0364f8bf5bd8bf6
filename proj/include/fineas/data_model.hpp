#pragma once

#include <map>
#include <string>
#include <variant>
#include <vector>

#include "fineas/errors.hpp"
#include "fineas/time_utils.hpp"

namespace fineas {

// One headline record. Immutable after construction; safe to share
// across threads.
struct NewsEvent {
  UtcTime timestamp;
  std::string entity_id;
  std::string headline;   // normalized: trimmed, whitespace-collapsed, NFC
  double sentiment = 0.0; // in [-1, +1]

  friend bool operator==(const NewsEvent& a, const NewsEvent& b) {
    return a.timestamp == b.timestamp && a.entity_id == b.entity_id &&
           a.headline == b.headline && a.sentiment == b.sentiment;
  }
};

// Canonical field names; the column-mapping config translates vendor
// headers to these before validation.
inline constexpr const char* kFieldTimestamp = "timestamp_utc";
inline constexpr const char* kFieldEntity = "entity_id";
inline constexpr const char* kFieldHeadline = "headline";
inline constexpr const char* kFieldSentiment = "sentiment";

using FieldMap = std::map<std::string, std::string>;

struct RowError {
  Errc code;
  std::string field;
  std::string message;
};

// Total: every field map yields exactly one NewsEvent or one RowError.
std::variant<NewsEvent, RowError> validate_event(const FieldMap& raw);

// Trim, collapse internal whitespace runs to single spaces, NFC-normalize.
// This is the identity under which duplicates are detected.
std::string normalize_headline(const std::string& text);

// Train/validation/test/out-of-sample partitions plus provenance.
struct DatasetBundle {
  std::vector<NewsEvent> train;
  std::vector<NewsEvent> validation;
  std::vector<NewsEvent> test;
  std::vector<NewsEvent> oos;
  std::string window_label;  // e.g. "6m"
  UtcTime cutoff;
  uint64_t seed = 0;
};

// Canonical on-disk row <-> record. to_fields always round-trips through
// validate_event to an equal record.
FieldMap to_fields(const NewsEvent& e);
std::string format_sentiment(double s);

}  // namespace fineas
