#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace geovit::cli {

/// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitNumerical = 1;  // NaN during training, gradcheck failure
inline constexpr int kExitUsage = 2;      // bad flags, config, data or checkpoint

/// Runs one `geovit` command. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace geovit::cli
