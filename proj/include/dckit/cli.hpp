#pragma once

#include <string>
#include <vector>

namespace dckit::cli {

// Exit codes: 0 ok, 1 I/O or format error, 2 precondition violation,
// 3 conformance failure.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args); // args without argv[0]

} // namespace dckit::cli
