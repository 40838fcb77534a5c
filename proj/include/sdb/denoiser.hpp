#pragma once

#include <functional>
#include <utility>

#include "sdb/linop.hpp"

namespace sdb {

/// x0-prediction D(x_t, t) applied to every column of x_t.
class Denoiser {
public:
    using Fn = std::function<Matrix(const Matrix& xt, double t)>;

    Denoiser() = default;
    /// `concurrent` declares that the callable may be invoked from several
    /// threads at once; otherwise chains are run sequentially.
    explicit Denoiser(Fn fn, bool concurrent = true) : fn_(std::move(fn)), concurrent_(concurrent) {}

    Matrix operator()(const Matrix& xt, double t) const { return fn_(xt, t); }
    Vector operator()(const Vector& xt, double t) const { return fn_(xt, t); }

    bool concurrent() const { return concurrent_; }
    explicit operator bool() const { return static_cast<bool>(fn_); }

private:
    Fn fn_;
    bool concurrent_ = true;
};

}  // namespace sdb
