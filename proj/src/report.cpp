#include "fineas/report.hpp"

#include <json.hpp>

#include <cstdio>
#include <sstream>

#include "fineas/csv.hpp"
#include "fineas/io_utils.hpp"

namespace fineas::train {

namespace {

std::string fmt_mse(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

const ExperimentCell* find_cell(const EvalReport& report,
                                const std::string& window, Arm arm) {
  for (const auto& cell : report.cells) {
    if (cell.window == window && cell.arm == arm) return &cell;
  }
  return nullptr;
}

std::vector<std::string> window_order(const EvalReport& report) {
  std::vector<std::string> windows;
  for (const auto& cell : report.cells) {
    bool seen = false;
    for (const auto& w : windows) seen |= w == cell.window;
    if (!seen) windows.push_back(cell.window);
  }
  return windows;
}

std::string window_row_label(const std::string& window) {
  // "6m" -> "6 months"; anything unparsable renders as-is.
  if (!window.empty() && window.back() == 'm') {
    const std::string n = window.substr(0, window.size() - 1);
    if (!n.empty() && n.find_first_not_of("0123456789") == std::string::npos) {
      return n + " months";
    }
  }
  return window;
}

void render_row(std::ostringstream& out, const std::string& label,
                const std::vector<std::string>& cells, size_t label_width) {
  out << label << std::string(label_width - label.size(), ' ');
  for (const auto& c : cells) {
    out << "  " << c << std::string(c.size() < 8 ? 8 - c.size() : 0, ' ');
  }
  out << '\n';
}

}  // namespace

std::string render_table1(const EvalReport& report) {
  std::ostringstream out;
  const size_t label_width = 12;
  render_row(out, "", {"FinEAS", "BERT", "BiLSTM"}, label_width);
  for (const auto& window : window_order(report)) {
    std::vector<std::string> test_cells, oos_cells;
    for (const Arm arm : {Arm::FineasFrozen, Arm::BertFrozen, Arm::Bilstm}) {
      const auto* cell = find_cell(report, window, arm);
      test_cells.push_back(cell ? fmt_mse(cell->test_mse) : "n/a");
      oos_cells.push_back(cell ? fmt_mse(cell->oos_mse) : "n/a");
    }
    render_row(out, window_row_label(window), test_cells, label_width);
    render_row(out, "  next 2w", oos_cells, label_width);
  }
  return out.str();
}

std::string render_table2(const EvalReport& report) {
  std::ostringstream out;
  const size_t label_width = 12;
  render_row(out, "", {"FinEAS", "BiLSTM"}, label_width);
  for (const auto& window : window_order(report)) {
    std::vector<std::string> cells;
    for (const Arm arm : {Arm::FineasFinetune, Arm::Bilstm}) {
      const auto* cell = find_cell(report, window, arm);
      cells.push_back(cell ? fmt_mse(cell->test_mse) : "n/a");
    }
    render_row(out, window_row_label(window), cells, label_width);
  }
  return out.str();
}

std::string render_report_json(const EvalReport& report) {
  nlohmann::json doc;
  doc["format"] = 1;
  doc["config_hash"] = hex64(report.config_hash);
  doc["seed"] = report.seed;
  doc["cells"] = nlohmann::json::array();
  for (const auto& cell : report.cells) {
    nlohmann::json c;
    c["window"] = cell.window;
    c["arm"] = arm_name(cell.arm);
    c["test_mse"] = cell.test_mse;
    c["oos_mse"] = cell.oos_mse;
    c["epochs"] = cell.record.epochs();
    c["best_epoch"] = cell.record.best_epoch;
    c["stopped_early"] = cell.record.stopped_early;
    c["best_val_mse"] =
        cell.record.best_epoch >= 0
            ? cell.record.val_losses[static_cast<size_t>(cell.record.best_epoch)]
            : 0.0;
    doc["cells"].push_back(std::move(c));
  }
  return doc.dump(2) + "\n";
}

void write_histogram_csvs(const Histograms& histograms,
                          const std::filesystem::path& dir,
                          const std::string& prefix) {
  {
    std::ostringstream out;
    csv::write_row(out, {"bin", "count"});
    for (const auto& [entity, count] : histograms.company) {
      csv::write_row(out, {entity, std::to_string(count)});
    }
    atomic_write_file(dir / (prefix + "_company.csv"), out.str());
  }
  {
    std::ostringstream out;
    csv::write_row(out, {"bin", "count"});
    for (const auto& [words, count] : histograms.word_counts) {
      csv::write_row(out, {std::to_string(words), std::to_string(count)});
    }
    atomic_write_file(dir / (prefix + "_words.csv"), out.str());
  }
  {
    std::ostringstream out;
    csv::write_row(out, {"bin", "count"});
    for (size_t i = 0; i < histograms.sentiment.size(); ++i) {
      char bin[32];
      std::snprintf(bin, sizeof(bin), "%.3f", -1.0 + 0.05 * static_cast<double>(i));
      csv::write_row(out, {bin, std::to_string(histograms.sentiment[i])});
    }
    atomic_write_file(dir / (prefix + "_sentiment.csv"), out.str());
  }
}

void write_report_files(const EvalReport& report,
                        const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  atomic_write_file(dir / "report.json", render_report_json(report));
  atomic_write_file(dir / "table1.txt", render_table1(report));
  atomic_write_file(dir / "table2.txt", render_table2(report));
  for (const auto& [label, histograms] : report.histograms) {
    write_histogram_csvs(histograms, dir, "hist_" + label);
  }
}

}  // namespace fineas::train
