#include "fineas/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <iostream>
#include <sstream>

#include "fineas/checkpoint.hpp"
#include "fineas/io_utils.hpp"
#include "fineas/report.hpp"

namespace fineas::cli {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::ConfigError:
    case Errc::FileNotFound:
    case Errc::ParseError:
    case Errc::ConfigHashMismatch:
    case Errc::DegenerateSplit:
      return kExitUser;
    default:
      return kExitInternal;
  }
}

fs::path bundle_dir(const RunConfig& cfg, const std::string& window) {
  return cfg.work_dir / "bundles" / window;
}

fs::path vocab_dir(const RunConfig& cfg, const std::string& window) {
  return cfg.work_dir / "vocab" / window;
}

fs::path run_dir(const RunConfig& cfg, const std::string& window,
                 train::Arm arm) {
  return cfg.work_dir / "runs" / (window + "-" + train::arm_name(arm));
}

fs::path reports_dir(const RunConfig& cfg) { return cfg.work_dir / "reports"; }

fs::path eval_dir(const RunConfig& cfg, const std::string& window,
                  train::Arm arm) {
  return cfg.work_dir / "eval" / (window + "-" + train::arm_name(arm));
}

namespace {

void require_cutoff(const RunConfig& cfg) {
  if (cfg.cutoff == UtcTime{}) {
    raise(Errc::ConfigError, "ingest.cutoff is required");
  }
}

std::vector<std::string> selected_windows(
    const RunConfig& cfg, const std::optional<std::string>& only_window) {
  if (!only_window) return cfg.windows;
  for (const auto& w : cfg.windows) {
    if (w == *only_window) return {w};
  }
  raise(Errc::ConfigError, "window '" + *only_window +
                               "' is not in the configured window list");
}

struct LoadedVocabs {
  tok::Vocab subword;
  tok::Vocab word;
  uint64_t subword_hash = 0;
  uint64_t word_hash = 0;
};

LoadedVocabs load_vocabs(const RunConfig& cfg, const std::string& window) {
  const auto dir = vocab_dir(cfg, window);
  const auto sub_path = dir / "subword.vocab";
  const auto word_path = dir / "word.vocab";
  LoadedVocabs v{tok::Vocab::load(sub_path, tok::VocabKind::Subword),
                 tok::Vocab::load(word_path, tok::VocabKind::Word)};
  v.subword_hash = fnv1a64(read_file(sub_path));
  v.word_hash = fnv1a64(read_file(word_path));
  return v;
}

std::string train_record_json(const train::TrainRecord& record,
                              const RunConfig& cfg, train::Arm arm,
                              const std::string& window, uint64_t cell_seed) {
  json doc;
  doc["arm"] = train::arm_name(arm);
  doc["window"] = window;
  doc["config_hash"] = hex64(cfg.config_hash());
  doc["seed"] = cell_seed;
  doc["train_losses"] = record.train_losses;
  doc["val_losses"] = record.val_losses;
  doc["best_epoch"] = record.best_epoch;
  doc["stopped_early"] = record.stopped_early;
  doc["wall_time_seconds"] = record.wall_time_seconds;
  return doc.dump(2) + "\n";
}

}  // namespace

void cmd_ingest(const RunConfig& cfg,
                const std::optional<std::string>& only_window) {
  require_cutoff(cfg);
  if (cfg.raw_csv.empty()) raise(Errc::ConfigError, "paths.raw_csv is required");
  const auto loaded = ingest::load_events(cfg.raw_csv, cfg.mapping);

  for (const auto& window : selected_windows(cfg, only_window)) {
    const auto icfg = cfg.ingest_config(parse_window_months(window));
    const auto bundle = ingest::make_bundle(loaded.events, icfg, window);
    const auto dir = bundle_dir(cfg, window);
    ingest::save_bundle(bundle, icfg, loaded.rejects.size(), cfg.config_hash(),
                        dir);
    ingest::save_rejects_csv(loaded.rejects, dir / "rejects.csv");
    std::cout << window << ": train=" << bundle.train.size()
              << " validation=" << bundle.validation.size()
              << " test=" << bundle.test.size() << " oos=" << bundle.oos.size()
              << " rejects=" << loaded.rejects.size() << "\n";
  }
}

void cmd_build_vocab(const RunConfig& cfg,
                     const std::optional<std::string>& only_window) {
  for (const auto& window : selected_windows(cfg, only_window)) {
    const auto bundle = ingest::load_bundle(bundle_dir(cfg, window));
    std::vector<std::string> corpus;
    corpus.reserve(bundle.train.size());
    for (const auto& e : bundle.train) corpus.push_back(e.headline);

    const auto subword =
        tok::train_subword_vocab(corpus, cfg.subword_target_size);
    const auto word = tok::train_word_vocab(corpus, cfg.word_vocab_size);
    const auto dir = vocab_dir(cfg, window);
    subword.save(dir / "subword.vocab");
    word.save(dir / "word.vocab");
    std::cout << window << ": subword=" << subword.size()
              << " word=" << word.size() << "\n";
  }
}

void cmd_train(const RunConfig& cfg, train::Arm arm, const std::string& window) {
  const auto bundle = ingest::load_bundle(bundle_dir(cfg, window));
  const auto vocabs = load_vocabs(cfg, window);
  const uint64_t cell_seed = cfg.cell_seed(window, arm);
  train::TrainConfig tcfg = cfg.train;
  tcfg.seed = cell_seed;

  ckpt::Checkpoint checkpoint;
  train::TrainRecord record;
  uint64_t vocab_hash = 0;

  if (arm == train::Arm::Bilstm) {
    auto spec = cfg.bilstm;
    spec.vocab_size = vocabs.word.size();
    spec.max_len = cfg.max_len;
    models::BiLstmModelF model(spec, cell_seed);
    record = train::train_model(model, vocabs.word, bundle, tcfg);
    checkpoint = ckpt::from_model(model);
    vocab_hash = vocabs.word_hash;
  } else {
    auto spec = cfg.encoder;
    spec.vocab_size = vocabs.subword.size();
    spec.max_len = cfg.max_len;
    spec.pooling = arm == train::Arm::BertFrozen ? models::Pooling::Cls
                                                 : models::Pooling::Mean;
    models::FineasEncoderModelF model(spec, cell_seed);
    if (arm != train::Arm::FineasFinetune) model.set_frozen(true);
    record = train::train_model(model, vocabs.subword, bundle, tcfg);
    checkpoint = ckpt::from_model(model);
    vocab_hash = vocabs.subword_hash;
  }

  checkpoint.header["arm"] = train::arm_name(arm);
  checkpoint.header["window"] = window;
  checkpoint.header["config_hash"] = hex64(cfg.config_hash());
  checkpoint.header["vocab_hash"] = hex64(vocab_hash);
  checkpoint.header["seed"] = std::to_string(cell_seed);

  const auto dir = run_dir(cfg, window, arm);
  ckpt::save(checkpoint, dir / "checkpoint.bin");
  atomic_write_file(dir / "train_record.json",
                    train_record_json(record, cfg, arm, window, cell_seed));

  std::ostringstream manifest;
  manifest << "arm: " << train::arm_name(arm) << "\n"
           << "window: " << window << "\n"
           << "config_hash: " << hex64(cfg.config_hash()) << "\n"
           << "vocab_hash: " << hex64(vocab_hash) << "\n"
           << "seed: " << cell_seed << "\n"
           << "epochs: " << record.epochs() << "\n"
           << "best_epoch: " << record.best_epoch << "\n"
           << "stopped_early: " << (record.stopped_early ? "true" : "false")
           << "\n";
  atomic_write_file(dir / "manifest.txt", manifest.str());

  std::cout << window << "/" << train::arm_name(arm)
            << ": epochs=" << record.epochs()
            << " best_epoch=" << record.best_epoch << " best_val_mse="
            << (record.best_epoch >= 0
                    ? record.val_losses[static_cast<size_t>(record.best_epoch)]
                    : 0.0)
            << "\n";
}

void cmd_eval(const RunConfig& cfg, train::Arm arm, const std::string& window,
              const std::optional<fs::path>& checkpoint_path) {
  const auto path =
      checkpoint_path.value_or(run_dir(cfg, window, arm) / "checkpoint.bin");
  const auto checkpoint = ckpt::load(path);

  const std::string want_hash = hex64(cfg.config_hash());
  const auto stored_hash = checkpoint.header.find("config_hash");
  if (stored_hash == checkpoint.header.end() ||
      stored_hash->second != want_hash) {
    raise(Errc::ConfigHashMismatch,
          "checkpoint was trained under config " +
              (stored_hash == checkpoint.header.end() ? "<missing>"
                                                      : stored_hash->second) +
              ", current config is " + want_hash);
  }

  const auto vocabs = load_vocabs(cfg, window);
  const bool is_bilstm = arm == train::Arm::Bilstm;
  const uint64_t vocab_hash = is_bilstm ? vocabs.word_hash : vocabs.subword_hash;
  const auto stored_vocab = checkpoint.header.find("vocab_hash");
  if (stored_vocab == checkpoint.header.end() ||
      stored_vocab->second != hex64(vocab_hash)) {
    raise(Errc::ConfigHashMismatch, "vocab file does not match the checkpoint");
  }
  const auto stored_arm = checkpoint.header.find("arm");
  if (stored_arm == checkpoint.header.end() ||
      stored_arm->second != train::arm_name(arm)) {
    raise(Errc::ConfigHashMismatch,
          "checkpoint arm '" +
              (stored_arm == checkpoint.header.end() ? "<missing>"
                                                     : stored_arm->second) +
              "' does not match requested arm");
  }

  const auto bundle = ingest::load_bundle(bundle_dir(cfg, window));

  train::ExperimentCell cell;
  cell.window = window;
  cell.arm = arm;
  if (is_bilstm) {
    auto spec = cfg.bilstm;
    spec.vocab_size = vocabs.word.size();
    spec.max_len = cfg.max_len;
    models::BiLstmModelF model(spec, /*init_seed=*/0);
    ckpt::load_into_model(model, checkpoint);
    cell.test_mse = train::evaluate(model, vocabs.word, bundle.test,
                                    cfg.train.batch_size);
    cell.oos_mse =
        train::evaluate(model, vocabs.word, bundle.oos, cfg.train.batch_size);
  } else {
    auto spec = cfg.encoder;
    spec.vocab_size = vocabs.subword.size();
    spec.max_len = cfg.max_len;
    spec.pooling = arm == train::Arm::BertFrozen ? models::Pooling::Cls
                                                 : models::Pooling::Mean;
    models::FineasEncoderModelF model(spec, /*init_seed=*/0);
    ckpt::load_into_model(model, checkpoint);
    cell.test_mse = train::evaluate(model, vocabs.subword, bundle.test,
                                    cfg.train.batch_size);
    cell.oos_mse = train::evaluate(model, vocabs.subword, bundle.oos,
                                   cfg.train.batch_size);
  }

  train::EvalReport report;
  report.config_hash = cfg.config_hash();
  report.seed = cfg.seed;
  report.cells.push_back(cell);
  std::vector<NewsEvent> in_sample = bundle.train;
  in_sample.insert(in_sample.end(), bundle.validation.begin(),
                   bundle.validation.end());
  in_sample.insert(in_sample.end(), bundle.test.begin(), bundle.test.end());
  report.histograms.emplace_back(window, train::emit_histograms(in_sample));
  if (!bundle.oos.empty()) {
    report.histograms.emplace_back(window + "-oos",
                                   train::emit_histograms(bundle.oos));
  }
  train::write_report_files(report, eval_dir(cfg, window, arm));

  std::cout << window << "/" << train::arm_name(arm)
            << ": test_mse=" << cell.test_mse << " oos_mse=" << cell.oos_mse
            << "\n";
}

void cmd_run_matrix(const RunConfig& cfg) {
  require_cutoff(cfg);
  if (cfg.raw_csv.empty()) raise(Errc::ConfigError, "paths.raw_csv is required");
  const auto loaded = ingest::load_events(cfg.raw_csv, cfg.mapping);

  std::vector<std::pair<std::string, DatasetBundle>> bundles;
  for (const auto& window : cfg.windows) {
    const auto icfg = cfg.ingest_config(parse_window_months(window));
    auto bundle = ingest::make_bundle(loaded.events, icfg, window);
    const auto dir = bundle_dir(cfg, window);
    ingest::save_bundle(bundle, icfg, loaded.rejects.size(), cfg.config_hash(),
                        dir);
    ingest::save_rejects_csv(loaded.rejects, dir / "rejects.csv");
    bundles.emplace_back(window, std::move(bundle));
  }

  const auto report =
      train::run_experiment(bundles, cfg.matrix_arms, cfg.experiment_settings());
  train::write_report_files(report, reports_dir(cfg));

  std::cout << train::render_table1(report) << "\n"
            << train::render_table2(report);
}

void cmd_report(const RunConfig& cfg) {
  const auto report_path = reports_dir(cfg) / "report.json";
  json doc;
  try {
    doc = json::parse(read_file(report_path));
  } catch (const json::parse_error& e) {
    raise(Errc::ParseError, report_path.string() + ": " + e.what());
  }

  train::EvalReport report;
  try {
    report.config_hash =
        std::stoull(doc["config_hash"].get<std::string>(), nullptr, 16);
    report.seed = doc["seed"].get<uint64_t>();
    for (const auto& c : doc["cells"]) {
      train::ExperimentCell cell;
      cell.window = c["window"].get<std::string>();
      cell.arm = train::arm_from_name(c["arm"].get<std::string>());
      cell.test_mse = c["test_mse"].get<double>();
      cell.oos_mse = c["oos_mse"].get<double>();
      report.cells.push_back(std::move(cell));
    }
  } catch (const json::exception& e) {
    raise(Errc::ParseError, report_path.string() + ": " + e.what());
  }

  for (const auto& window : cfg.windows) {
    const auto dir = bundle_dir(cfg, window);
    if (!fs::exists(dir / "bundle.meta")) continue;
    const auto bundle = ingest::load_bundle(dir);
    std::vector<NewsEvent> in_sample = bundle.train;
    in_sample.insert(in_sample.end(), bundle.validation.begin(),
                     bundle.validation.end());
    in_sample.insert(in_sample.end(), bundle.test.begin(), bundle.test.end());
    if (!in_sample.empty()) {
      report.histograms.emplace_back(window, train::emit_histograms(in_sample));
    }
    if (!bundle.oos.empty()) {
      report.histograms.emplace_back(window + "-oos",
                                     train::emit_histograms(bundle.oos));
    }
  }

  train::write_report_files(report, reports_dir(cfg));
  std::cout << train::render_table1(report) << "\n"
            << train::render_table2(report);
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"FinEAS financial sentiment-regression pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::string window;
  std::string arm_str;
  std::string checkpoint_str;
  uint64_t seed_override = 0;
  bool has_seed = false;

  auto add_common = [&](CLI::App* sub, bool with_arm_window) {
    sub->add_option("--config", config_path, "run config JSON")->required();
    sub->add_option("--seed", seed_override, "override the master seed")
        ->each([&](const std::string&) { has_seed = true; });
    if (with_arm_window) {
      sub->add_option("--arm", arm_str,
                      "fineas-frozen | fineas-finetune | bert-frozen | bilstm");
      sub->add_option("--window", window, "window label, e.g. 6m");
    }
  };

  auto* ingest_cmd =
      app.add_subcommand("ingest", "build dataset bundles from the raw CSV");
  add_common(ingest_cmd, true);
  auto* vocab_cmd =
      app.add_subcommand("build-vocab", "train tokenizer vocabularies");
  add_common(vocab_cmd, true);
  auto* train_cmd = app.add_subcommand("train", "train one model arm");
  add_common(train_cmd, true);
  auto* eval_cmd =
      app.add_subcommand("eval", "evaluate a checkpoint on test + oos splits");
  add_common(eval_cmd, true);
  eval_cmd->add_option("--checkpoint", checkpoint_str, "checkpoint path");
  auto* matrix_cmd = app.add_subcommand(
      "run-matrix", "ingest, train and evaluate every window x arm cell");
  add_common(matrix_cmd, false);
  auto* report_cmd =
      app.add_subcommand("report", "re-render tables from stored results");
  add_common(report_cmd, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUser;
  }

  try {
    RunConfig cfg = RunConfig::load(config_path);
    if (has_seed) cfg.seed = seed_override;
    if (!arm_str.empty()) cfg.arm = train::arm_from_name(arm_str);
    if (const char* env = std::getenv("FINEAS_WORK_DIR")) {
      if (*env) cfg.work_dir = env;
    }
    const std::optional<std::string> window_opt =
        window.empty() ? std::nullopt : std::optional<std::string>(window);

    if (ingest_cmd->parsed()) {
      cmd_ingest(cfg, window_opt);
    } else if (vocab_cmd->parsed()) {
      cmd_build_vocab(cfg, window_opt);
    } else if (train_cmd->parsed()) {
      if (!window_opt) raise(Errc::ConfigError, "train requires --window");
      cmd_train(cfg, cfg.arm, *window_opt);
    } else if (eval_cmd->parsed()) {
      if (!window_opt) raise(Errc::ConfigError, "eval requires --window");
      cmd_eval(cfg, cfg.arm, *window_opt,
               checkpoint_str.empty()
                   ? std::nullopt
                   : std::optional<fs::path>(checkpoint_str));
    } else if (matrix_cmd->parsed()) {
      cmd_run_matrix(cfg);
    } else if (report_cmd->parsed()) {
      cmd_report(cfg);
    }
    return kExitOk;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}

}  // namespace fineas::cli
