#include "helpers.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "sdb/errors.hpp"
#include "sdb/tensor_io.hpp"

using namespace sdb;

TEST_CASE("SDBT layout is magic, rank, dims, little-endian f64 payload") {
    Tensor t;
    t.dims = {2, 3};
    t.data = {1, 2, 3, 4, 5, 6};
    std::ostringstream out;
    write_tensor(out, t);
    const std::string bytes = out.str();
    REQUIRE(bytes.size() == 4 + 4 + 8 + 6 * 8);
    CHECK(bytes.substr(0, 4) == "SDBT");
    CHECK(static_cast<unsigned char>(bytes[4]) == 2);
    CHECK(static_cast<unsigned char>(bytes[8]) == 2);
    CHECK(static_cast<unsigned char>(bytes[12]) == 3);
    double first = 0.0;
    std::memcpy(&first, bytes.data() + 16, 8);
    CHECK(first == 1.0);
}

TEST_CASE("tensor round trip through a stream and a file") {
    Rng rng(2);
    const Matrix m = sdb::test::gaussian_matrix(3, 4, rng);
    std::stringstream buf;
    write_tensor(buf, to_tensor(m));
    const Matrix back = to_matrix(read_tensor(buf));
    CHECK(back == m);

    sdb::test::TempDir dir("tensor");
    save_tensor(dir.str("v.sdbt"), to_tensor(Vector(m.col(1))));
    const Matrix v = to_matrix(load_tensor(dir.str("v.sdbt")));
    CHECK(v.cols() == 1);
    CHECK(v.col(0) == m.col(1));
}

TEST_CASE("malformed tensors are rejected") {
    std::istringstream bad_magic(std::string("XXXX\1\0\0\0", 8));
    CHECK_THROWS_AS(read_tensor(bad_magic), ConfigError);

    Tensor t;
    t.dims = {4};
    t.data = {1, 2, 3, 4};
    std::ostringstream out;
    write_tensor(out, t);
    std::istringstream truncated(out.str().substr(0, out.str().size() - 3));
    CHECK_THROWS_AS(read_tensor(truncated), ConfigError);
    CHECK_THROWS(load_tensor("/nonexistent/file.sdbt"));
}

TEST_CASE("CSV matrices") {
    const Matrix m = parse_csv_matrix("# comment\n1, 2.5,-3\n\n4,5e-1,6\n");
    REQUIRE(m.rows() == 2);
    REQUIRE(m.cols() == 3);
    CHECK(m(0, 1) == 2.5);
    CHECK(m(1, 1) == 0.5);
    CHECK(m(0, 2) == -3.0);
    CHECK_THROWS_AS(parse_csv_matrix("1,2\n3\n"), ConfigError);
    CHECK_THROWS_AS(parse_csv_matrix("1,x\n"), ConfigError);
}
