#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "fineas/config.hpp"

namespace fineas::cli {

// Exit codes: 0 success, 1 internal error, 2 user/config error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitUser = 2;

int exit_code_for(Errc code);

// Subcommand entry points, exposed for in-process tests. Each throws
// Error on failure; run_cli maps that to an exit code.
void cmd_ingest(const RunConfig& cfg,
                const std::optional<std::string>& only_window);
void cmd_build_vocab(const RunConfig& cfg,
                     const std::optional<std::string>& only_window);
void cmd_train(const RunConfig& cfg, train::Arm arm, const std::string& window);
void cmd_eval(const RunConfig& cfg, train::Arm arm, const std::string& window,
              const std::optional<std::filesystem::path>& checkpoint_path);
void cmd_run_matrix(const RunConfig& cfg);
void cmd_report(const RunConfig& cfg);

// Artifact locations under the work dir.
std::filesystem::path bundle_dir(const RunConfig& cfg, const std::string& window);
std::filesystem::path vocab_dir(const RunConfig& cfg, const std::string& window);
std::filesystem::path run_dir(const RunConfig& cfg, const std::string& window,
                              train::Arm arm);
std::filesystem::path reports_dir(const RunConfig& cfg);
std::filesystem::path eval_dir(const RunConfig& cfg, const std::string& window,
                               train::Arm arm);

int run_cli(int argc, const char* const* argv);

}  // namespace fineas::cli
