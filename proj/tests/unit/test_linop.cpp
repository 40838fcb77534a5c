#include "helpers.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "sdb/errors.hpp"
#include "sdb/tasks.hpp"

using namespace sdb;
using sdb::test::gaussian_matrix;
using sdb::test::max_abs;

TEST_CASE("pseudoinverse of the identity is the identity") {
    const Matrix p = pseudoinverse(Matrix::Identity(3, 3));
    CHECK(max_abs(p - Matrix::Identity(3, 3)) < 1e-15);
}

TEST_CASE("a 0/1 diagonal mask is its own pseudoinverse") {
    Matrix m = Matrix::Zero(4, 4);
    m(0, 0) = 1.0;
    m(2, 2) = 1.0;
    CHECK(max_abs(pseudoinverse(m) - m) < 1e-15);
}

TEST_CASE("random 3x5 pseudoinverse passes the Penrose identities") {
    Rng rng(1);
    const Matrix a = gaussian_matrix(3, 5, rng);
    const Matrix p = pseudoinverse(a);
    CHECK(p.rows() == 5);
    CHECK(p.cols() == 3);
    const PenroseResiduals r = penrose_residuals(a, p);
    CHECK(r.a_pinv_a < 1e-9);
    CHECK(r.pinv_a_pinv < 1e-9);
    CHECK(r.a_pinv_sym < 1e-9);
    CHECK(r.pinv_a_sym < 1e-9);
}

TEST_CASE("pseudoinverse rejects bad input") {
    Matrix a = Matrix::Ones(2, 2);
    CHECK_THROWS_AS(pseudoinverse(a, -1.0), ParameterError);
    a(0, 0) = std::nan("");
    CHECK_THROWS_AS(pseudoinverse(a), ContractViolation);
}

TEST_CASE("pseudoinverse honours the relative cutoff") {
    Matrix a = Matrix::Zero(2, 2);
    a(0, 0) = 1.0;
    a(1, 1) = 1e-14;
    const Matrix p = pseudoinverse(a);
    CHECK(p(1, 1) == 0.0);
    CHECK(pseudoinverse(a, 0.0)(1, 1) == doctest::Approx(1e14));
}

TEST_CASE("range and null projections on the identity and the R2 mask") {
    const LinearSystem id = build_dense_system(Matrix::Identity(3, 3), NoiseFactor::none());
    const Vector x = Vector::LinSpaced(3, -1.0, 2.0);
    CHECK(max_abs(project_range(id, x) - x) < 1e-15);
    CHECK(max_abs(project_null(id, x)) < 1e-15);

    Matrix a(1, 2);
    a << 1.0, 0.0;
    const LinearSystem mask = build_dense_system(a, NoiseFactor::none());
    Vector v(2);
    v << 3.0, 7.0;
    CHECK(project_range(mask, v)[0] == doctest::Approx(3.0));
    CHECK(project_range(mask, v)[1] == doctest::Approx(0.0));
    CHECK(project_null(mask, v)[0] == doctest::Approx(0.0));
    CHECK(project_null(mask, v)[1] == doctest::Approx(7.0));
}

TEST_CASE("average pooling keeps constant images in its range") {
    TaskSpec t;
    t.kind = TaskKind::superres;
    t.image_side = 8;
    t.factor = 4;
    const LinearSystem sys = build_system(t);
    const Vector c = Vector::Constant(64, 0.37);
    CHECK(max_abs(project_range(sys, c) - c) < 1e-12);
    const Matrix dense_proj = materialize_range_projector(sys);
    CHECK(max_abs(dense_proj * c - c) < 1e-12);
}

TEST_CASE("average-pool PR is nearest-neighbour replication and matches the dense SVD pseudoinverse") {
    TaskSpec t;
    t.kind = TaskKind::superres;
    t.image_side = 8;
    t.factor = 4;
    const LinearSystem sys = build_system(t);
    const Matrix a = materialize_matrix(sys);
    CHECK(max_abs(materialize_pinv(sys) - pseudoinverse(a)) < 1e-9);
    CHECK(max_abs(materialize_pinv(sys) - 16.0 * a.transpose()) < 1e-12);

    Vector y(4);
    y << 0.1, 0.2, 0.3, 0.4;
    const Vector pr = pseudoinverse_reconstruction(sys, y);
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c) CHECK(pr[r * 8 + c] == doctest::Approx(y[(r / 4) * 2 + c / 4]));
}

TEST_CASE("truncated-SVD PR returns the kept right-singular component") {
    TaskSpec t;
    t.kind = TaskKind::ct;
    t.image_side = 4;
    t.tau = 0.5;
    t.latent_dim = 4;
    const LinearSystem sys = build_system(t);
    const Matrix a = materialize_matrix(sys);
    Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeFullV);
    const auto& s = svd.singularValues();
    Index kept = 0;
    while (kept < s.size() && s[kept] > 1e-10) ++kept;
    CHECK(kept > 0);
    CHECK(kept < 16);
    const Matrix vk = svd.matrixV().leftCols(kept);
    Rng rng(3);
    const Vector x = rng.normal_vector(16);
    const Vector pr = pseudoinverse_reconstruction(sys, a * x);
    CHECK(max_abs(pr - vk * (vk.transpose() * x)) < 1e-9);
}

TEST_CASE("projection properties on random rank-deficient systems") {
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        const Index m = 2 + trial % 4;
        const Index d = 3 + trial % 5;
        const Matrix a = gaussian_matrix(m, 2, rng) * gaussian_matrix(2, d, rng);
        const LinearSystem sys = build_dense_system(a, NoiseFactor::none());
        const Vector x = rng.normal_vector(d);
        const Vector x2 = rng.normal_vector(d);
        const Vector r = project_range(sys, x);
        const Vector n = project_null(sys, x);
        CHECK(max_abs(r + n - x) < 1e-12);
        CHECK(max_abs(project_range(sys, r) - r) < 1e-10);
        CHECK(max_abs(project_null(sys, n) - n) < 1e-10);
        CHECK(max_abs(project_range(sys, n)) < 1e-10);
        CHECK(sys.apply(n).norm() <= 1e-9 * x.norm());
        CHECK(max_abs(project_range(sys, 2.0 * x + x2) - 2.0 * r - project_range(sys, x2)) < 1e-10);

        const Vector y = rng.normal_vector(m);
        const Vector pr = pseudoinverse_reconstruction(sys, y);
        CHECK(max_abs(project_null(sys, pr)) < 1e-10);
        const double best = (sys.apply(pr) - y).norm();
        for (int k = 0; k < 5; ++k) {
            const Vector cand = pr + project_null(sys, rng.normal_vector(d)) + 1e-3 * rng.normal_vector(d);
            CHECK((sys.apply(cand) - y).norm() >= best - 1e-12);
        }
    }
}

TEST_CASE("the zero operator has an empty range") {
    const LinearSystem sys = build_dense_system(Matrix::Zero(2, 3), NoiseFactor::none());
    const Vector x = Vector::Ones(3);
    CHECK(max_abs(project_range(sys, x)) == 0.0);
    CHECK(max_abs(project_null(sys, x) - x) == 0.0);
    CHECK(max_abs(pseudoinverse_reconstruction(sys, Vector::Ones(2))) == 0.0);
}

TEST_CASE("dimension mismatches are contract violations") {
    const LinearSystem sys = build_dense_system(Matrix::Ones(2, 3), NoiseFactor::none());
    CHECK_THROWS_AS(project_range(sys, Vector::Ones(2)), ContractViolation);
    CHECK_THROWS_AS(pseudoinverse_reconstruction(sys, Vector::Ones(3)), ContractViolation);
    CHECK_THROWS(build_dense_system(Matrix::Ones(2, 3), NoiseFactor::dense(Matrix::Identity(3, 3))));
}

TEST_CASE("whitening") {
    Rng rng(7);
    const Matrix a = gaussian_matrix(2, 3, rng);
    SUBCASE("unit noise leaves the system unchanged") {
        const LinearSystem w = whiten(build_dense_system(a, 1.0));
        CHECK(max_abs(materialize_matrix(w) - a) < 1e-15);
    }
    SUBCASE("sigma^2 = 5 scales A by 1/sqrt(5)") {
        const LinearSystem w = whiten(build_dense_system(a, std::sqrt(5.0)));
        CHECK(max_abs(materialize_matrix(w) - a / std::sqrt(5.0)) < 1e-14);
        CHECK(w.noise().kind() == NoiseFactor::Kind::scalar);
        CHECK(w.noise().sigma() == 1.0);
    }
    SUBCASE("Sigma = diag(1, 4) scales rows by (1, 1/2)") {
        Matrix s = Matrix::Zero(2, 2);
        s(0, 0) = 1.0;
        s(1, 1) = 2.0;
        const LinearSystem w = whiten(build_dense_system(a, NoiseFactor::dense(s)));
        Matrix expect = a;
        expect.row(1) *= 0.5;
        CHECK(max_abs(materialize_matrix(w) - expect) < 1e-12);
    }
    SUBCASE("whitened noise has identity covariance") {
        Matrix l = gaussian_matrix(2, 2, rng);
        const Matrix s = (l * l.transpose() + Matrix::Identity(2, 2)).llt().matrixL();
        const Matrix sym = (s * s.transpose()).selfadjointView<Eigen::Lower>();
        Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
        const Matrix half = eig.eigenvectors() * eig.eigenvalues().cwiseSqrt().asDiagonal() * eig.eigenvectors().transpose();
        const LinearSystem sys = build_dense_system(a, NoiseFactor::dense(half));
        const LinearSystem w = whiten(sys);
        const Matrix scale = materialize_matrix(w) * pseudoinverse(a);
        const int n = 100000;
        Matrix draws(2, n);
        for (int j = 0; j < n; ++j) draws.col(j) = scale * sys.noise_scale(rng.normal_vector(2));
        const Matrix cov = draws * draws.transpose() / n;
        CHECK(sdb::test::rel_frobenius(cov, Matrix::Identity(2, 2)) < 0.05);
    }
    SUBCASE("negative eigenvalues are rejected") {
        Matrix s = Matrix::Identity(2, 2);
        s(1, 1) = -1.0;
        CHECK_THROWS_AS(whiten(build_dense_system(a, NoiseFactor::dense(s))), InvalidCovariance);
    }
}

TEST_CASE("Penrose identities for every structured operator") {
    TaskSpec t;
    for (TaskKind k : {TaskKind::inpainting, TaskKind::superres, TaskKind::ct, TaskKind::mri}) {
        t.kind = k;
        t.image_side = 8;
        t.factor = 2;
        const LinearSystem sys = build_system(t);
        CHECK(penrose_residuals(materialize_matrix(sys), materialize_pinv(sys)).max() < 1e-9);
        const Matrix p = materialize_range_projector(sys);
        CHECK(max_abs(p * p - p) < 1e-10);
    }
}
