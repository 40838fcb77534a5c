#include "sdb/tensor_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace sdb {

namespace {

constexpr std::array<char, 4> kMagic{'S', 'D', 'B', 'T'};

template <typename T>
void put_le(std::ostream& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    std::array<unsigned char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(bytes.begin(), bytes.end());
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
    std::array<unsigned char, sizeof(T)> bytes;
    if (!in.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) {
        throw ConfigError("truncated SDBT tensor");
    }
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(bytes.begin(), bytes.end());
    }
    T value;
    std::memcpy(&value, bytes.data(), sizeof(T));
    return value;
}

}  // namespace

std::size_t Tensor::element_count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
}

void write_tensor(std::ostream& out, const Tensor& t) {
    if (t.element_count() != t.data.size()) {
        throw ContractViolation("tensor payload does not match its dimensions");
    }
    out.write(kMagic.data(), kMagic.size());
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) put_le<std::uint32_t>(out, d);
    for (double v : t.data) put_le<double>(out, v);
    if (!out) throw ConfigError("failed writing SDBT tensor");
}

Tensor read_tensor(std::istream& in) {
    std::array<char, 4> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
        throw ConfigError("not an SDBT tensor (bad magic)");
    }
    Tensor t;
    const auto rank = get_le<std::uint32_t>(in);
    if (rank > 16) throw ConfigError("SDBT tensor rank too large");
    t.dims.resize(rank);
    for (auto& d : t.dims) d = get_le<std::uint32_t>(in);
    const std::size_t n = t.element_count();
    t.data.resize(n);
    for (auto& v : t.data) v = get_le<double>(in);
    return t;
}

void save_tensor(const std::string& path, const Tensor& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open " + path + " for writing");
    write_tensor(out, t);
}

Tensor load_tensor(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path);
    return read_tensor(in);
}

Tensor to_tensor(const Matrix& m) {
    Tensor t;
    t.dims = {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())};
    t.data.reserve(static_cast<std::size_t>(m.size()));
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) t.data.push_back(m(i, j));
    return t;
}

Tensor to_tensor(const Vector& v) {
    Tensor t;
    t.dims = {static_cast<std::uint32_t>(v.size())};
    t.data.assign(v.data(), v.data() + v.size());
    return t;
}

Matrix to_matrix(const Tensor& t) {
    if (t.dims.size() == 1) {
        return Eigen::Map<const Vector>(t.data.data(), static_cast<Index>(t.data.size()));
    }
    if (t.dims.size() != 2) throw ContractViolation("expected a rank-1 or rank-2 tensor");
    Matrix m(t.dims[0], t.dims[1]);
    std::size_t k = 0;
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) m(i, j) = t.data[k++];
    return m;
}

Matrix parse_csv_matrix(const std::string& text) {
    std::vector<std::vector<double>> rows;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') continue;
        std::vector<double> row;
        std::size_t pos = 0;
        while (true) {
            const std::size_t comma = line.find(',', pos);
            std::string cell = line.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
            const auto b = cell.find_first_not_of(" \t");
            const auto e = cell.find_last_not_of(" \t");
            if (b == std::string::npos) throw ConfigError("CSV line " + std::to_string(line_no) + ": empty cell");
            cell = cell.substr(b, e - b + 1);
            if (!cell.empty() && cell.front() == '+') cell.erase(0, 1);
            double v = 0.0;
            const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
                throw ConfigError("CSV line " + std::to_string(line_no) + ": bad number '" + cell + "'");
            }
            row.push_back(v);
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw ConfigError("CSV line " + std::to_string(line_no) + ": ragged row");
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ConfigError("CSV matrix is empty");
    Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) m(i, j) = rows[i][j];
    return m;
}

Matrix load_csv_matrix(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_csv_matrix(ss.str());
}

}  // namespace sdb
