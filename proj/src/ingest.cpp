#include "fineas/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "fineas/csv.hpp"
#include "fineas/io_utils.hpp"
#include "fineas/rng.hpp"

namespace fineas::ingest {

namespace fs = std::filesystem;

void IngestConfig::validate() const {
  if (top_k_entities < 1) raise(Errc::ConfigError, "top_k_entities must be >= 1");
  if (window_months < 1) raise(Errc::ConfigError, "window_months must be >= 1");
  if (oos_days < 1) raise(Errc::ConfigError, "oos_days must be >= 1");
  double sum = 0.0;
  for (double f : split_fractions) {
    if (f < 0.0) raise(Errc::ConfigError, "split fractions must be nonnegative");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    raise(Errc::ConfigError, "split fractions must sum to 1");
  }
}

LoadResult load_events(const fs::path& path, const ColumnMapping& mapping) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(Errc::FileNotFound, path.string());

  csv::Reader reader(in);
  std::vector<std::string> header;
  if (!reader.next(header)) {
    raise(Errc::ParseError, path.string() + ": empty file, expected header row");
  }

  auto col_index = [&](const std::string& name) -> size_t {
    for (size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    raise(Errc::ParseError,
          path.string() + ": header has no column '" + name + "'");
  };
  const size_t ts_col = col_index(mapping.timestamp);
  const size_t entity_col = col_index(mapping.entity);
  const size_t text_col = col_index(mapping.headline);
  const size_t score_col = col_index(mapping.sentiment);

  LoadResult result;
  std::vector<std::string> row;
  while (reader.next(row)) {
    if (row.size() == 1 && row[0].empty()) continue;  // blank line
    const size_t line = reader.line();
    if (row.size() != header.size()) {
      result.rejects.push_back(
          {line, RowError{Errc::ParseError, "",
                          "expected " + std::to_string(header.size()) +
                              " fields, got " + std::to_string(row.size())}});
      continue;
    }
    FieldMap fields{{kFieldTimestamp, row[ts_col]},
                    {kFieldEntity, row[entity_col]},
                    {kFieldHeadline, row[text_col]},
                    {kFieldSentiment, row[score_col]}};
    auto validated = validate_event(fields);
    if (std::holds_alternative<NewsEvent>(validated)) {
      result.events.push_back(std::move(std::get<NewsEvent>(validated)));
    } else {
      result.rejects.push_back({line, std::get<RowError>(validated)});
    }
  }
  return result;
}

std::vector<std::string> top_entities(const std::vector<NewsEvent>& events,
                                      int k) {
  std::unordered_map<std::string, size_t> counts;
  for (const auto& e : events) ++counts[e.entity_id];
  std::vector<std::pair<std::string, size_t>> ranked(counts.begin(),
                                                     counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;  // lexicographic tie-break
  });
  if (ranked.size() > static_cast<size_t>(k)) ranked.resize(k);
  std::vector<std::string> out;
  out.reserve(ranked.size());
  for (auto& [entity, count] : ranked) out.push_back(entity);
  return out;
}

std::vector<NewsEvent> filter_top_entities(const std::vector<NewsEvent>& events,
                                           int k) {
  if (k < 1) raise(Errc::ConfigError, "k must be >= 1");
  const auto keep = top_entities(events, k);
  const std::unordered_set<std::string> keep_set(keep.begin(), keep.end());
  std::vector<NewsEvent> out;
  out.reserve(events.size());
  for (const auto& e : events) {
    if (keep_set.count(e.entity_id)) out.push_back(e);
  }
  return out;
}

namespace {

std::string dedupe_key(const NewsEvent& e) {
  // Sentiment participates via its exact double value; +-0.0 collapse.
  const double s = e.sentiment == 0.0 ? 0.0 : e.sentiment;
  uint64_t bits;
  std::memcpy(&bits, &s, sizeof(bits));
  std::string key;
  key.reserve(e.entity_id.size() + e.headline.size() + 18);
  key += e.entity_id;
  key.push_back('\x1f');
  key += e.headline;
  key.push_back('\x1f');
  key += hex64(bits);
  return key;
}

}  // namespace

std::vector<NewsEvent> dedupe(const std::vector<NewsEvent>& events) {
  std::unordered_set<std::string> seen;
  seen.reserve(events.size() * 2);
  std::vector<NewsEvent> out;
  out.reserve(events.size());
  for (const auto& e : events) {
    if (seen.insert(dedupe_key(e)).second) out.push_back(e);
  }
  return out;
}

WindowedEvents window_events(const std::vector<NewsEvent>& events,
                             const IngestConfig& cfg) {
  const UtcTime start = minus_months(cfg.cutoff, cfg.window_months);
  const UtcTime oos_end = plus_days(cfg.cutoff, cfg.oos_days);
  WindowedEvents out;
  for (const auto& e : events) {
    if (e.timestamp > start && e.timestamp <= cfg.cutoff) {
      out.in_window.push_back(e);
    } else if (e.timestamp > cfg.cutoff && e.timestamp <= oos_end) {
      out.oos.push_back(e);
    }
  }
  return out;
}

SplitResult split_random(const std::vector<NewsEvent>& events,
                         const std::array<double, 3>& fractions,
                         uint64_t seed) {
  const size_t n = events.size();
  const auto n_val =
      static_cast<size_t>(std::llround(static_cast<double>(n) * fractions[1]));
  const auto n_test =
      static_cast<size_t>(std::llround(static_cast<double>(n) * fractions[2]));
  if (n_val + n_test > n) {
    raise(Errc::DegenerateSplit, "validation+test exceed dataset size");
  }
  const size_t n_train = n - n_val - n_test;
  if (n >= 400) {
    if (fractions[0] > 0.0 && n_train == 0)
      raise(Errc::DegenerateSplit, "train partition empty");
    if (fractions[1] > 0.0 && n_val == 0)
      raise(Errc::DegenerateSplit, "validation partition empty");
    if (fractions[2] > 0.0 && n_test == 0)
      raise(Errc::DegenerateSplit, "test partition empty");
  }

  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  SplitResult out;
  out.train.reserve(n_train);
  out.validation.reserve(n_val);
  out.test.reserve(n_test);
  for (size_t i = 0; i < n_train; ++i) out.train.push_back(events[order[i]]);
  for (size_t i = n_train; i < n_train + n_val; ++i)
    out.validation.push_back(events[order[i]]);
  for (size_t i = n_train + n_val; i < n; ++i)
    out.test.push_back(events[order[i]]);
  return out;
}

DatasetBundle make_bundle(const std::vector<NewsEvent>& events,
                          const IngestConfig& cfg,
                          const std::string& window_label) {
  cfg.validate();
  auto windowed = window_events(events, cfg);

  // Entity ranking is computed on the in-sample window and applied to both
  // sides, so the oos partition covers the same companies.
  const auto keep = top_entities(windowed.in_window, cfg.top_k_entities);
  const std::unordered_set<std::string> keep_set(keep.begin(), keep.end());
  auto filter = [&](std::vector<NewsEvent>& v) {
    std::vector<NewsEvent> kept;
    kept.reserve(v.size());
    for (auto& e : v) {
      if (keep_set.count(e.entity_id)) kept.push_back(std::move(e));
    }
    v = std::move(kept);
  };
  filter(windowed.in_window);
  filter(windowed.oos);

  windowed.in_window = dedupe(windowed.in_window);
  windowed.oos = dedupe(windowed.oos);

  auto split = split_random(windowed.in_window, cfg.split_fractions, cfg.seed);

  DatasetBundle bundle;
  bundle.train = std::move(split.train);
  bundle.validation = std::move(split.validation);
  bundle.test = std::move(split.test);
  bundle.oos = std::move(windowed.oos);
  bundle.window_label = window_label;
  bundle.cutoff = cfg.cutoff;
  bundle.seed = cfg.seed;
  return bundle;
}

namespace {

std::string events_to_csv(const std::vector<NewsEvent>& events) {
  std::ostringstream out;
  csv::write_row(out, {kFieldTimestamp, kFieldEntity, kFieldHeadline,
                       kFieldSentiment});
  for (const auto& e : events) {
    csv::write_row(out, {format_utc(e.timestamp), e.entity_id, e.headline,
                         format_sentiment(e.sentiment)});
  }
  return out.str();
}

std::vector<NewsEvent> events_from_csv_file(const fs::path& path) {
  auto loaded = load_events(path);
  if (!loaded.rejects.empty()) {
    raise(Errc::ParseError, path.string() + ": " +
                                std::to_string(loaded.rejects.size()) +
                                " invalid rows in bundle file");
  }
  return std::move(loaded.events);
}

}  // namespace

void save_events_csv(const std::vector<NewsEvent>& events,
                     const fs::path& path) {
  atomic_write_file(path, events_to_csv(events));
}

void save_rejects_csv(const std::vector<Reject>& rejects,
                      const fs::path& path) {
  std::ostringstream out;
  csv::write_row(out, {"line", "error", "field", "message"});
  for (const auto& r : rejects) {
    csv::write_row(out, {std::to_string(r.line), errc_name(r.error.code),
                         r.error.field, r.error.message});
  }
  atomic_write_file(path, out.str());
}

void save_bundle(const DatasetBundle& bundle, const IngestConfig& cfg,
                 size_t reject_count, uint64_t config_hash,
                 const fs::path& dir) {
  fs::create_directories(dir);
  save_events_csv(bundle.train, dir / "train.csv");
  save_events_csv(bundle.validation, dir / "validation.csv");
  save_events_csv(bundle.test, dir / "test.csv");
  save_events_csv(bundle.oos, dir / "oos.csv");

  std::ostringstream meta;
  meta << "bundle_format: 1\n"
       << "window_label: " << bundle.window_label << "\n"
       << "cutoff: " << format_utc(bundle.cutoff) << "\n"
       << "window_months: " << cfg.window_months << "\n"
       << "oos_days: " << cfg.oos_days << "\n"
       << "top_k_entities: " << cfg.top_k_entities << "\n"
       << "fractions: " << format_sentiment(cfg.split_fractions[0]) << ","
       << format_sentiment(cfg.split_fractions[1]) << ","
       << format_sentiment(cfg.split_fractions[2]) << "\n"
       << "seed: " << bundle.seed << "\n"
       << "prng: mt19937_64\n"
       << "shuffle: fisher-yates\n"
       << "config_hash: " << hex64(config_hash) << "\n"
       << "rows_train: " << bundle.train.size() << "\n"
       << "rows_validation: " << bundle.validation.size() << "\n"
       << "rows_test: " << bundle.test.size() << "\n"
       << "rows_oos: " << bundle.oos.size() << "\n"
       << "rejects: " << reject_count << "\n";
  atomic_write_file(dir / "bundle.meta", meta.str());
}

DatasetBundle load_bundle(const fs::path& dir) {
  DatasetBundle bundle;
  bundle.train = events_from_csv_file(dir / "train.csv");
  bundle.validation = events_from_csv_file(dir / "validation.csv");
  bundle.test = events_from_csv_file(dir / "test.csv");
  bundle.oos = events_from_csv_file(dir / "oos.csv");

  const std::string meta = read_file(dir / "bundle.meta");
  std::istringstream in(meta);
  std::string line;
  while (std::getline(in, line)) {
    const auto pos = line.find(": ");
    if (pos == std::string::npos) continue;
    const std::string key = line.substr(0, pos);
    const std::string value = line.substr(pos + 2);
    if (key == "window_label") {
      bundle.window_label = value;
    } else if (key == "cutoff") {
      const auto t = parse_utc(value);
      if (!t) raise(Errc::ParseError, "bundle.meta: bad cutoff");
      bundle.cutoff = *t;
    } else if (key == "seed") {
      bundle.seed = std::stoull(value);
    }
  }
  return bundle;
}

}  // namespace fineas::ingest
