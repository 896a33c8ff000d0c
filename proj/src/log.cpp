#include "distdiff/log.hpp"

#include <iostream>
#include <mutex>

namespace distdiff {

namespace {
std::mutex g_mutex;
std::vector<std::string> g_warnings;
}  // namespace

void warn(const std::string& msg) {
    std::lock_guard<std::mutex> lock(g_mutex);
    std::cerr << "warning: " << msg << "\n";
    g_warnings.push_back(msg);
}

std::vector<std::string> drain_warnings() {
    std::lock_guard<std::mutex> lock(g_mutex);
    std::vector<std::string> out;
    out.swap(g_warnings);
    return out;
}

}  // namespace distdiff
