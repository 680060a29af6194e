// Minimal popen wrapper for driving the kgf binary from tests.
#pragma once

#include <array>
#include <cstdio>
#include <string>

namespace kgf_test {

struct CommandResult {
    int exit_code = -1;
    std::string output;  // stdout + stderr
};

inline CommandResult run_command(const std::string& command) {
    CommandResult result;
    std::string wrapped = command + " 2>&1";
    FILE* pipe = popen(wrapped.c_str(), "r");
    if (!pipe) return result;
    std::array<char, 4096> buffer{};
    std::size_t n;
    while ((n = fread(buffer.data(), 1, buffer.size(), pipe)) > 0) {
        result.output.append(buffer.data(), n);
    }
    int status = pclose(pipe);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

inline std::string read_file(const std::string& path) {
    FILE* f = fopen(path.c_str(), "rb");
    if (!f) return {};
    std::string out;
    std::array<char, 4096> buffer{};
    std::size_t n;
    while ((n = fread(buffer.data(), 1, buffer.size(), f)) > 0) out.append(buffer.data(), n);
    fclose(f);
    return out;
}

}  // namespace kgf_test
