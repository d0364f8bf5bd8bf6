#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "fineas/ingest.hpp"
#include "fineas/io_utils.hpp"
#include "fineas/rng.hpp"

using namespace fineas;
using namespace fineas::ingest;

namespace fs = std::filesystem;

namespace {

NewsEvent event(const std::string& entity, const std::string& headline,
                double score, const std::string& ts = "2021-01-05T10:00:00Z") {
  NewsEvent e;
  e.timestamp = *parse_utc(ts);
  e.entity_id = entity;
  e.headline = headline;
  e.sentiment = score;
  return e;
}

fs::path temp_dir() {
  const auto dir = fs::temp_directory_path() / "fineas_ingest_test";
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << content;
}

// Brute-force oracle: entity counts by scanning, ranked by (count desc,
// name asc), independent of the implementation's data structures.
std::set<std::string> oracle_top_entities(const std::vector<NewsEvent>& events,
                                          size_t k) {
  std::map<std::string, size_t> counts;
  for (const auto& e : events) ++counts[e.entity_id];
  std::vector<std::pair<std::string, size_t>> v(counts.begin(), counts.end());
  std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::set<std::string> out;
  for (size_t i = 0; i < v.size() && i < k; ++i) out.insert(v[i].first);
  return out;
}

// Brute-force pairwise duplicate scan.
std::vector<NewsEvent> oracle_dedupe(const std::vector<NewsEvent>& events) {
  std::vector<NewsEvent> out;
  for (const auto& e : events) {
    bool dup = false;
    for (const auto& kept : out) {
      if (kept.entity_id == e.entity_id && kept.headline == e.headline &&
          kept.sentiment == e.sentiment) {
        dup = true;
        break;
      }
    }
    if (!dup) out.push_back(e);
  }
  return out;
}

}  // namespace

TEST_CASE("load_events reads a well-formed file") {
  const auto path = temp_dir() / "ok.csv";
  write_text(path,
             "timestamp_utc,entity_id,headline,sentiment\n"
             "2021-01-05T10:00:00Z,AAPL,Apple beats estimates,0.42\n"
             "2021-01-06T11:00:00Z,MSFT,Microsoft ships update,-0.1\n"
             "2021-01-07T12:00:00Z,AAPL,Apple recalls chargers,-0.6\n");
  const auto result = load_events(path);
  CHECK(result.events.size() == 3);
  CHECK(result.rejects.empty());
  CHECK(result.events[1].entity_id == "MSFT");
}

TEST_CASE("load_events surfaces invalid rows in the rejects report") {
  const auto path = temp_dir() / "mixed.csv";
  write_text(path,
             "timestamp_utc,entity_id,headline,sentiment\n"
             "2021-01-05T10:00:00Z,AAPL,fine,0.5\n"
             "2021-01-06T10:00:00Z,MSFT,score out of range,2.0\n"
             "2021-01-07T10:00:00Z,GOOG,also fine,-0.5\n");
  const auto result = load_events(path);
  CHECK(result.events.size() == 2);
  REQUIRE(result.rejects.size() == 1);
  CHECK(result.rejects[0].line == 3);
  CHECK(result.rejects[0].error.code == Errc::ScoreOutOfRange);
}

TEST_CASE("load_events on header-only file yields nothing") {
  const auto path = temp_dir() / "empty.csv";
  write_text(path, "timestamp_utc,entity_id,headline,sentiment\n");
  const auto result = load_events(path);
  CHECK(result.events.empty());
  CHECK(result.rejects.empty());
}

TEST_CASE("load_events missing file throws FileNotFound") {
  CHECK_THROWS_WITH_AS(load_events(temp_dir() / "nope.csv"),
                       doctest::Contains("nope.csv"), Error);
  try {
    load_events(temp_dir() / "nope.csv");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::FileNotFound);
  }
}

TEST_CASE("load_events applies a vendor column mapping") {
  const auto path = temp_dir() / "vendor.csv";
  write_text(path,
             "TIMESTAMP_UTC,COMP,EVENT_TEXT,EVENT_SENTIMENT_SCORE,EXTRA\n"
             "2021-01-05T10:00:00Z,AAPL,headline here,0.25,ignored\n");
  ColumnMapping mapping;
  mapping.timestamp = "TIMESTAMP_UTC";
  mapping.entity = "COMP";
  mapping.headline = "EVENT_TEXT";
  mapping.sentiment = "EVENT_SENTIMENT_SCORE";
  const auto result = load_events(path, mapping);
  REQUIRE(result.events.size() == 1);
  CHECK(result.events[0].entity_id == "AAPL");
  CHECK(result.events[0].sentiment == doctest::Approx(0.25));
}

TEST_CASE("load_events rejects rows with the wrong field count") {
  const auto path = temp_dir() / "arity.csv";
  write_text(path,
             "timestamp_utc,entity_id,headline,sentiment\n"
             "2021-01-05T10:00:00Z,AAPL,ok,0.1\n"
             "2021-01-05T10:00:00Z,short\n");
  const auto result = load_events(path);
  CHECK(result.events.size() == 1);
  REQUIRE(result.rejects.size() == 1);
  CHECK(result.rejects[0].error.code == Errc::ParseError);
  CHECK(result.rejects[0].line == 3);
}

TEST_CASE("filter_top_entities keeps the k most frequent entities") {
  std::vector<NewsEvent> events;
  for (int i = 0; i < 5; ++i) events.push_back(event("A", "a" + std::to_string(i), 0.1));
  for (int i = 0; i < 3; ++i) events.push_back(event("B", "b" + std::to_string(i), 0.1));
  events.push_back(event("C", "c0", 0.1));

  const auto kept = filter_top_entities(events, 2);
  const auto oracle = oracle_top_entities(events, 2);
  CHECK(oracle == std::set<std::string>{"A", "B"});
  CHECK(kept.size() == 8);
  for (const auto& e : kept) CHECK(oracle.count(e.entity_id));
  // Relative order preserved.
  CHECK(kept[0].headline == "a0");
  CHECK(kept[5].headline == "b0");
}

TEST_CASE("filter_top_entities with k above distinct count is identity") {
  std::vector<NewsEvent> events = {event("A", "x", 0.1), event("B", "y", 0.2)};
  const auto kept = filter_top_entities(events, 10);
  CHECK(kept == events);
}

TEST_CASE("filter_top_entities breaks count ties lexicographically") {
  std::vector<NewsEvent> events;
  for (const char* entity : {"C", "A", "B"}) {
    for (int i = 0; i < 3; ++i) {
      events.push_back(event(entity, std::string(entity) + std::to_string(i), 0.0));
    }
  }
  const auto kept = filter_top_entities(events, 2);
  // Hand application of the tie rule: all counts equal, so A and B win.
  for (const auto& e : kept) CHECK(e.entity_id != "C");
  CHECK(kept.size() == 6);
}

TEST_CASE("dedupe drops only exact key duplicates") {
  std::vector<NewsEvent> events = {
      event("A", "same headline", 0.3),
      event("A", "same headline", 0.3),   // exact duplicate
      event("B", "same headline", 0.3),   // different entity: kept
      event("A", "same headline", 0.31),  // different score: kept
  };
  const auto got = dedupe(events);
  const auto oracle = oracle_dedupe(events);
  CHECK(got == oracle);
  CHECK(got.size() == 3);
}

TEST_CASE("dedupe and filter are idempotent (randomized)") {
  Rng rng(31);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<NewsEvent> events;
    const size_t n = 20 + rng.uniform_below(60);
    for (size_t i = 0; i < n; ++i) {
      events.push_back(event("E" + std::to_string(rng.uniform_below(5)),
                             "h" + std::to_string(rng.uniform_below(10)),
                             static_cast<double>(rng.uniform_below(3)) / 10));
    }
    const auto once = dedupe(events);
    CHECK(dedupe(once) == once);
    const int k = 1 + static_cast<int>(rng.uniform_below(5));
    const auto filtered = filter_top_entities(events, k);
    CHECK(filter_top_entities(filtered, k) == filtered);
  }
}

TEST_CASE("window_events respects calendar-month boundaries") {
  IngestConfig cfg;
  cfg.cutoff = *parse_utc("2021-02-11T23:59:59Z");
  cfg.window_months = 6;
  cfg.oos_days = 14;

  const auto boundary = event("A", "at window start", 0.0, "2020-08-11T23:59:59Z");
  const auto just_inside = event("A", "just inside", 0.0, "2020-08-12T00:00:00Z");
  const auto at_cutoff = event("A", "at cutoff", 0.0, "2021-02-11T23:59:59Z");
  const auto in_oos = event("A", "oos", 0.0, "2021-02-20T00:00:00Z");
  const auto oos_end = event("A", "oos end", 0.0, "2021-02-25T23:59:59Z");
  const auto too_late = event("A", "15 days after", 0.0, "2021-02-26T23:59:59Z");

  const auto w = window_events(
      {boundary, just_inside, at_cutoff, in_oos, oos_end, too_late}, cfg);
  CHECK(w.in_window.size() == 2);  // just_inside + at_cutoff
  CHECK(w.oos.size() == 2);        // in_oos + oos_end
  for (const auto& e : w.in_window) CHECK(e.headline != "at window start");
}

TEST_CASE("window_events partitions are disjoint subsets of the input") {
  Rng rng(17);
  IngestConfig cfg;
  cfg.cutoff = *parse_utc("2021-02-11T23:59:59Z");
  cfg.window_months = 6;
  std::vector<NewsEvent> events;
  for (int i = 0; i < 300; ++i) {
    const int64_t base = parse_utc("2020-06-01T00:00:00Z")->seconds;
    const int64_t span = 300LL * 86400;
    NewsEvent e = event("E", "h" + std::to_string(i), 0.0);
    e.timestamp = UtcTime{base + static_cast<int64_t>(rng.uniform_below(span))};
    events.push_back(e);
  }
  const auto w = window_events(events, cfg);
  CHECK(w.in_window.size() + w.oos.size() <= events.size());
  for (const auto& a : w.in_window) {
    for (const auto& b : w.oos) CHECK(!(a == b));
  }
}

TEST_CASE("split_random sizes follow the rounding rule") {
  auto make_n = [](size_t n) {
    std::vector<NewsEvent> events;
    events.reserve(n);
    for (size_t i = 0; i < n; ++i) {
      events.push_back(event("E", "h" + std::to_string(i), 0.0));
    }
    return events;
  };

  // round(10000*0.0025) = 25 on both sides.
  auto s = split_random(make_n(10000), {0.995, 0.0025, 0.0025}, 1);
  CHECK(s.train.size() == 9950);
  CHECK(s.validation.size() == 25);
  CHECK(s.test.size() == 25);

  // n=4 with (.5,.25,.25): round(1)=1 each, remainder 2 to train.
  s = split_random(make_n(4), {0.5, 0.25, 0.25}, 1);
  CHECK(s.train.size() == 2);
  CHECK(s.validation.size() == 1);
  CHECK(s.test.size() == 1);

  // n=400: round(1.0)=1.
  s = split_random(make_n(400), {0.995, 0.0025, 0.0025}, 1);
  CHECK(s.train.size() == 398);
  CHECK(s.validation.size() == 1);
  CHECK(s.test.size() == 1);
}

TEST_CASE("split_random is deterministic and exhaustive") {
  std::vector<NewsEvent> events;
  for (int i = 0; i < 1000; ++i) {
    events.push_back(event("E" + std::to_string(i % 7), "h" + std::to_string(i),
                           (i % 19) / 19.0));
  }
  const auto a = split_random(events, {0.995, 0.0025, 0.0025}, 99);
  const auto b = split_random(events, {0.995, 0.0025, 0.0025}, 99);
  CHECK(a.train == b.train);
  CHECK(a.validation == b.validation);
  CHECK(a.test == b.test);
  CHECK(a.train.size() + a.validation.size() + a.test.size() == events.size());

  const auto c = split_random(events, {0.995, 0.0025, 0.0025}, 100);
  CHECK(a.train != c.train);  // different seed reshuffles

  // Exhaustive partition: every input appears exactly once across splits.
  std::multiset<std::string> in_headlines, out_headlines;
  for (const auto& e : events) in_headlines.insert(e.headline);
  for (const auto* part : {&c.train, &c.validation, &c.test}) {
    for (const auto& e : *part) out_headlines.insert(e.headline);
  }
  CHECK(in_headlines == out_headlines);
}

TEST_CASE("split_random flags degenerate splits at n >= 400") {
  std::vector<NewsEvent> events;
  for (int i = 0; i < 500; ++i) {
    events.push_back(event("E", "h" + std::to_string(i), 0.0));
  }
  CHECK_THROWS_AS(split_random(events, {0.9999, 0.00005, 0.00005}, 1), Error);
  // Below 400 the same fractions silently give empty side splits.
  std::vector<NewsEvent> few(events.begin(), events.begin() + 100);
  const auto s = split_random(few, {0.9999, 0.00005, 0.00005}, 1);
  CHECK(s.validation.empty());
  CHECK(s.test.empty());
}

TEST_CASE("make_bundle composes window, filter, dedupe and split") {
  std::vector<NewsEvent> events;
  Rng rng(5);
  const int64_t start = parse_utc("2020-09-01T00:00:00Z")->seconds;
  for (int i = 0; i < 450; ++i) {
    NewsEvent e = event("E" + std::to_string(i % 6), "headline " + std::to_string(i),
                        (i % 21 - 10) / 10.0);
    e.timestamp = UtcTime{start + static_cast<int64_t>(rng.uniform_below(160LL * 86400))};
    events.push_back(e);
  }
  IngestConfig cfg;
  cfg.cutoff = *parse_utc("2021-02-11T23:59:59Z");
  cfg.window_months = 6;
  cfg.oos_days = 14;
  cfg.top_k_entities = 4;
  cfg.split_fractions = {0.90, 0.05, 0.05};
  cfg.seed = 123;

  const auto bundle = make_bundle(events, cfg, "6m");
  CHECK(bundle.window_label == "6m");
  CHECK(!bundle.train.empty());
  std::set<std::string> entities;
  for (const auto* part :
       {&bundle.train, &bundle.validation, &bundle.test, &bundle.oos}) {
    for (const auto& e : *part) {
      entities.insert(e.entity_id);
      if (part == &bundle.oos) {
        CHECK(e.timestamp > cfg.cutoff);
      } else {
        CHECK(e.timestamp <= cfg.cutoff);
      }
    }
  }
  CHECK(entities.size() <= 4);
}

TEST_CASE("bundle save/load round trip with byte-stable files") {
  std::vector<NewsEvent> events;
  const int64_t start = parse_utc("2020-12-01T00:00:00Z")->seconds;
  Rng rng(77);
  for (int i = 0; i < 420; ++i) {
    NewsEvent e = event("E" + std::to_string(i % 3),
                        "headline, with \"quotes\" " + std::to_string(i),
                        rng.uniform(-1.0, 1.0));
    e.timestamp = UtcTime{start + static_cast<int64_t>(rng.uniform_below(100LL * 86400))};
    events.push_back(e);
  }
  IngestConfig cfg;
  cfg.cutoff = *parse_utc("2021-02-11T23:59:59Z");
  cfg.window_months = 6;
  cfg.seed = 9;
  cfg.top_k_entities = 3;
  cfg.split_fractions = {0.9, 0.05, 0.05};

  const auto bundle = make_bundle(events, cfg, "6m");
  const auto dir = temp_dir() / "bundle";
  fs::remove_all(dir);
  save_bundle(bundle, cfg, 0, 0xabcdef, dir);

  const auto loaded = load_bundle(dir);
  CHECK(loaded.train == bundle.train);
  CHECK(loaded.validation == bundle.validation);
  CHECK(loaded.test == bundle.test);
  CHECK(loaded.oos == bundle.oos);
  CHECK(loaded.window_label == "6m");
  CHECK(loaded.seed == 9);
  CHECK(loaded.cutoff == cfg.cutoff);

  // Saving again produces identical bytes.
  const auto before = read_file(dir / "train.csv");
  save_bundle(bundle, cfg, 0, 0xabcdef, dir);
  CHECK(read_file(dir / "train.csv") == before);

  const std::string meta = read_file(dir / "bundle.meta");
  CHECK(meta.find("prng: mt19937_64") != std::string::npos);
  CHECK(meta.find("window_label: 6m") != std::string::npos);
}
