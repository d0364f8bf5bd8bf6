#pragma once

#include <filesystem>
#include <string>

#include "fineas/train_eval.hpp"

namespace fineas::train {

// Plain-text table in the frozen-backbone comparison layout: one row per
// window with a "next 2w" sub-row underneath, columns FinEAS / BERT /
// BiLSTM. Missing cells render as "n/a".
std::string render_table1(const EvalReport& report);

// Fully-trained comparison layout: one row per window, two model columns
// (FinEAS fine-tuned vs the fully trained BiLSTM).
std::string render_table2(const EvalReport& report);

// Machine-readable report: config hash, seed, per-cell MSEs and training
// metadata. Deterministic bytes for identical inputs (wall time is
// deliberately excluded; it lives in the per-run train record).
std::string render_report_json(const EvalReport& report);

// One CSV per histogram: "bin,count". Files are named
// <prefix>_company.csv, <prefix>_words.csv, <prefix>_sentiment.csv.
void write_histogram_csvs(const Histograms& histograms,
                          const std::filesystem::path& dir,
                          const std::string& prefix);

// Writes the whole report set: report.json, table1.txt, table2.txt and
// histogram CSVs per window.
void write_report_files(const EvalReport& report,
                        const std::filesystem::path& dir);

}  // namespace fineas::train
