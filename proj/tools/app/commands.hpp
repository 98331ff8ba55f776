#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "app/config.hpp"

namespace selfaffine::cli {

// Process exit codes.
inline constexpr int kExitHolds = 0;
inline constexpr int kExitFails = 1;
inline constexpr int kExitUnknown = 2;
inline constexpr int kExitConfig = 64;
inline constexpr int kExitBudget = 65;
inline constexpr int kExitSoftware = 70;
inline constexpr int kExitIo = 74;

int exit_code_for(ErrorCode code);

const std::vector<std::string>& command_names();

/// Runs one command; output files go to cfg.out. Returns the exit code of a
/// successful run and throws Error otherwise.
int run_command(const std::string& name, const RunConfig& cfg, std::ostream& log);

int cmd_check_osc(const RunConfig& cfg, std::ostream& log);
int cmd_measure(const RunConfig& cfg, std::ostream& log);
int cmd_render(const RunConfig& cfg, std::ostream& log);
int cmd_norm_probe(const RunConfig& cfg, std::ostream& log);
int cmd_density(const RunConfig& cfg, std::ostream& log);

/// run_command with errors turned into exit codes and a message on `err`.
int run_guarded(const std::string& name, const RunConfig& cfg, std::ostream& log, std::ostream& err);

}  // namespace selfaffine::cli
