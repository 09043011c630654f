#pragma once

#include <string>
#include <vector>

namespace mmreid::cli {

// In-process entry point behind main(); returns the process exit code:
// 0 success, 1 internal/check failure, 2 usage/validation.
int run_cli(const std::vector<std::string>& args);

struct FlagInfo {
    std::string command;
    std::string name;
    std::string description;
    std::string default_value;  // empty when the flag has no default
};

// Flag registry snapshot for every subcommand; the tests reflect over it to
// keep --help complete.
std::vector<FlagInfo> describe_cli();

}  // namespace mmreid::cli
