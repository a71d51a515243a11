#pragma once

#include <cstdint>
#include <iosfwd>
#include <string_view>
#include <vector>

namespace hila {

/// Entry point for the `hila` tool. Returns 0 on success, 1 on an operational
/// error and 2 on a usage or configuration error.
int run_cli(int argc, const char* const* argv);
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// "1..5" (inclusive range) or a comma list "1,4,9".
std::vector<std::uint64_t> parse_seed_list(std::string_view text);
/// Comma list of reals.
std::vector<double> parse_value_list(std::string_view text);

}  // namespace hila
