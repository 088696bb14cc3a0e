// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Exit codes: 0 success, 1 usage or configuration
// error, 2 data error, 3 numerical failure or a failed check.

#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace dmgd {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumerical = 3;

/// Default output directory when --out-dir is not given.
inline constexpr const char* kOutputDirEnv = "DMGD_OUTPUT_DIR";

/// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::string version_string();

}  // namespace dmgd
