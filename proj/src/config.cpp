#include "fineas/config.hpp"

#include <json.hpp>

#include "fineas/io_utils.hpp"

namespace fineas::cli {

using nlohmann::json;

int parse_window_months(const std::string& label) {
  if (label.size() < 2 || label.back() != 'm') {
    raise(Errc::ConfigError, "window label must look like '6m', got '" + label + "'");
  }
  const std::string digits = label.substr(0, label.size() - 1);
  if (digits.find_first_not_of("0123456789") != std::string::npos) {
    raise(Errc::ConfigError, "window label must look like '6m', got '" + label + "'");
  }
  const int months = std::stoi(digits);
  if (months < 1) raise(Errc::ConfigError, "window months must be >= 1");
  return months;
}

namespace {

models::Pooling pooling_from_name(const std::string& name) {
  if (name == "mean") return models::Pooling::Mean;
  if (name == "cls") return models::Pooling::Cls;
  raise(Errc::ConfigError, "pooling must be 'mean' or 'cls', got '" + name + "'");
}

}  // namespace

RunConfig RunConfig::load(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    raise(Errc::ConfigError, path.string() + ": " + e.what());
  }

  RunConfig cfg;
  try {
    if (doc.contains("paths")) {
      const auto& p = doc["paths"];
      if (p.contains("raw_csv")) cfg.raw_csv = p["raw_csv"].get<std::string>();
      if (p.contains("work_dir")) cfg.work_dir = p["work_dir"].get<std::string>();
    }
    if (doc.contains("column_mapping")) {
      const auto& m = doc["column_mapping"];
      cfg.mapping.timestamp = m.value("timestamp_utc", cfg.mapping.timestamp);
      cfg.mapping.entity = m.value("entity_id", cfg.mapping.entity);
      cfg.mapping.headline = m.value("headline", cfg.mapping.headline);
      cfg.mapping.sentiment = m.value("sentiment", cfg.mapping.sentiment);
    }
    if (doc.contains("ingest")) {
      const auto& g = doc["ingest"];
      cfg.top_k_entities = g.value("top_k_entities", cfg.top_k_entities);
      cfg.oos_days = g.value("oos_days", cfg.oos_days);
      if (g.contains("cutoff")) {
        const auto cutoff = parse_utc(g["cutoff"].get<std::string>());
        if (!cutoff) raise(Errc::ConfigError, "ingest.cutoff is not a UTC instant");
        cfg.cutoff = *cutoff;
      }
      if (g.contains("fractions")) {
        const auto f = g["fractions"].get<std::vector<double>>();
        if (f.size() != 3) raise(Errc::ConfigError, "fractions needs 3 entries");
        cfg.split_fractions = {f[0], f[1], f[2]};
      }
    }
    if (doc.contains("windows")) {
      cfg.windows = doc["windows"].get<std::vector<std::string>>();
      for (const auto& w : cfg.windows) parse_window_months(w);
    }
    if (doc.contains("tokenizer")) {
      const auto& t = doc["tokenizer"];
      cfg.subword_target_size = t.value("subword_target_size", cfg.subword_target_size);
      cfg.word_vocab_size = t.value("word_vocab_size", cfg.word_vocab_size);
      cfg.max_len = t.value("max_len", cfg.max_len);
    }
    if (doc.contains("encoder")) {
      const auto& e = doc["encoder"];
      cfg.encoder.d_model = e.value("d_model", cfg.encoder.d_model);
      cfg.encoder.n_layers = e.value("n_layers", cfg.encoder.n_layers);
      cfg.encoder.n_heads = e.value("n_heads", cfg.encoder.n_heads);
      cfg.encoder.d_ff = e.value("d_ff", cfg.encoder.d_ff);
      cfg.encoder.dropout_p = e.value("dropout_p", cfg.encoder.dropout_p);
      if (e.contains("pooling")) {
        cfg.encoder.pooling = pooling_from_name(e["pooling"].get<std::string>());
      }
    }
    if (doc.contains("bilstm")) {
      const auto& b = doc["bilstm"];
      cfg.bilstm.embedding_dim = b.value("embedding_dim", cfg.bilstm.embedding_dim);
      cfg.bilstm.hidden = b.value("hidden", cfg.bilstm.hidden);
      cfg.bilstm.layers = b.value("layers", cfg.bilstm.layers);
      cfg.bilstm.dropout_p = b.value("dropout_p", cfg.bilstm.dropout_p);
    }
    if (doc.contains("arm")) {
      cfg.arm = train::arm_from_name(doc["arm"].get<std::string>());
    }
    if (doc.contains("matrix_arms")) {
      cfg.matrix_arms.clear();
      for (const auto& name : doc["matrix_arms"]) {
        cfg.matrix_arms.push_back(train::arm_from_name(name.get<std::string>()));
      }
    }
    if (doc.contains("train")) {
      const auto& t = doc["train"];
      cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
      cfg.train.lr = t.value("lr", cfg.train.lr);
      cfg.train.max_epochs = t.value("max_epochs", cfg.train.max_epochs);
      cfg.train.patience = t.value("patience", cfg.train.patience);
      cfg.train.shuffle_each_epoch =
          t.value("shuffle_each_epoch", cfg.train.shuffle_each_epoch);
    }
    cfg.seed = doc.value("seed", cfg.seed);
  } catch (const json::exception& e) {
    raise(Errc::ConfigError, path.string() + ": " + e.what());
  }
  cfg.train.validate();
  return cfg;
}

uint64_t RunConfig::config_hash() const {
  json doc;
  doc["column_mapping"] = {{"timestamp_utc", mapping.timestamp},
                           {"entity_id", mapping.entity},
                           {"headline", mapping.headline},
                           {"sentiment", mapping.sentiment}};
  doc["ingest"] = {{"top_k_entities", top_k_entities},
                   {"cutoff", format_utc(cutoff)},
                   {"oos_days", oos_days},
                   {"fractions", split_fractions}};
  doc["windows"] = windows;
  doc["tokenizer"] = {{"subword_target_size", subword_target_size},
                      {"word_vocab_size", word_vocab_size},
                      {"max_len", max_len}};
  doc["encoder"] = {{"d_model", encoder.d_model},
                    {"n_layers", encoder.n_layers},
                    {"n_heads", encoder.n_heads},
                    {"d_ff", encoder.d_ff},
                    {"dropout_p", encoder.dropout_p},
                    {"pooling", models::pooling_name(encoder.pooling)}};
  doc["bilstm"] = {{"embedding_dim", bilstm.embedding_dim},
                   {"hidden", bilstm.hidden},
                   {"layers", bilstm.layers},
                   {"dropout_p", bilstm.dropout_p}};
  doc["train"] = {{"batch_size", train.batch_size},
                  {"lr", train.lr},
                  {"max_epochs", train.max_epochs},
                  {"patience", train.patience},
                  {"shuffle_each_epoch", train.shuffle_each_epoch}};
  return fnv1a64(doc.dump());
}

ingest::IngestConfig RunConfig::ingest_config(int window_months) const {
  ingest::IngestConfig cfg;
  cfg.top_k_entities = top_k_entities;
  cfg.cutoff = cutoff;
  cfg.window_months = window_months;
  cfg.oos_days = oos_days;
  cfg.split_fractions = split_fractions;
  cfg.seed = seed;
  return cfg;
}

train::ExperimentSettings RunConfig::experiment_settings() const {
  train::ExperimentSettings settings;
  settings.subword_target_size = subword_target_size;
  settings.word_vocab_size = word_vocab_size;
  settings.max_len = max_len;
  settings.encoder = encoder;
  settings.bilstm = bilstm;
  settings.train = train;
  settings.config_hash = config_hash();
  settings.seed = seed;
  return settings;
}

uint64_t RunConfig::cell_seed(const std::string& window, train::Arm a) const {
  return derive_seed(seed, fnv1a64(window + "/" + train::arm_name(a)));
}

}  // namespace fineas::cli
