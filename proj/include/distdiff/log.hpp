#pragma once

#include <string>
#include <vector>

namespace distdiff {

// Warnings go to stderr and into a registry so callers (and tests) can
// inspect them. Never fatal.
void warn(const std::string& msg);
std::vector<std::string> drain_warnings();

}  // namespace distdiff
