#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "sdb/linop.hpp"

namespace sdb {

/// Row-major f64 tensor as stored in the SDBT container.
struct Tensor {
    std::vector<std::uint32_t> dims;
    std::vector<double> data;

    std::size_t element_count() const;
};

// SDBT layout: "SDBT" | u32 rank | rank x u32 dims | f64 payload, all little-endian, row-major.
void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);

void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

Tensor to_tensor(const Matrix& m);
Tensor to_tensor(const Vector& v);
/// Rank-1 tensors become column vectors; rank-2 tensors keep their shape.
Matrix to_matrix(const Tensor& t);

/// Comma-separated rows, '.' as decimal separator. Blank lines and lines starting with '#' are skipped.
Matrix parse_csv_matrix(const std::string& text);
Matrix load_csv_matrix(const std::string& path);

}  // namespace sdb
