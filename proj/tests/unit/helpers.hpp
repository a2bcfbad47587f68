#pragma once

#include "cerberus/corpus.hpp"

#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace testutil {

inline cerberus::Post post(std::string user, std::string thread, std::int64_t ts,
                           std::vector<std::string> tokens = {}) {
    cerberus::Post p;
    p.user_id = std::move(user);
    p.thread_id = std::move(thread);
    p.timestamp = ts;
    p.tokens = std::move(tokens);
    return p;
}

inline std::vector<std::string> names(const char* prefix, std::size_t n) {
    std::vector<std::string> v;
    for (std::size_t i = 0; i < n; ++i) v.push_back(prefix + std::to_string(i));
    return v;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / ("cerberus_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace testutil
