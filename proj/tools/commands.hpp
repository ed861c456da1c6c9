#pragma once

#include "cli_options.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace rearrange::cli {

/// Entry point behind the `rearrange` binary; returns the process exit code.
/// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const EnvLookup& env = SettingSources::process_env());

int cmd_run(const CliConfig& config, std::ostream& out);
int cmd_suite(const CliConfig& config, std::ostream& out);
int cmd_render(const CliConfig& config, std::ostream& out);
int cmd_generate(const CliConfig& config, std::ostream& out);

/// artifacts.json: every file under `dir` (except the manifest) with its SHA-256.
void write_artifact_manifest(const std::filesystem::path& dir);

}  // namespace rearrange::cli
