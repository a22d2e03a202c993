#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dckit/embedding_store.hpp"
#include "dckit/rng.hpp"

namespace testutil {

inline std::vector<float> random_unit_vector(std::size_t dim, dckit::Rng& rng) {
    std::vector<float> v(dim);
    double norm_sq = 0.0;
    do {
        norm_sq = 0.0;
        for (auto& x : v) {
            x = static_cast<float>(rng.next_gaussian());
            norm_sq += static_cast<double>(x) * static_cast<double>(x);
        }
    } while (norm_sq == 0.0);
    const float inv = static_cast<float>(1.0 / std::sqrt(norm_sq));
    for (auto& x : v) x *= inv;
    return v;
}

// Scoped temp directory under the system temp root.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        dir_ = std::filesystem::temp_directory_path() /
               ("dckit_test_" + tag + "_" + std::to_string(::getpid()));
        std::filesystem::create_directories(dir_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(dir_, ec);
    }
    std::string path(const std::string& name) const { return (dir_ / name).string(); }

private:
    std::filesystem::path dir_;
};

} // namespace testutil
