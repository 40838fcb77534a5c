#pragma once

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <string>

#include "sdb/linop.hpp"
#include "sdb/rng.hpp"

namespace sdb::test {

inline Matrix gaussian_matrix(Index r, Index c, Rng& rng) {
    Matrix m(r, c);
    for (Index i = 0; i < r; ++i)
        for (Index j = 0; j < c; ++j) m(i, j) = rng.normal();
    return m;
}

inline double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

inline double rel_frobenius(const Matrix& est, const Matrix& ref) {
    const double n = ref.norm();
    return (est - ref).norm() / (n > 0.0 ? n : 1.0);
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = std::filesystem::temp_directory_path() /
                ("sdb_test_" + tag + "_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::string str(const std::string& child = "") const { return child.empty() ? path_.string() : (path_ / child).string(); }

private:
    std::filesystem::path path_;
};

}  // namespace sdb::test
