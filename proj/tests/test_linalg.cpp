#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "stylefuse/linalg.hpp"

using namespace stylefuse;

namespace {

Matrix from_rows(std::size_t rows, std::size_t cols, std::vector<double> entries) {
    Matrix m(rows, cols);
    m.data = std::move(entries);
    return m;
}

}  // namespace

// ===== matrix structure =====

TEST_CASE("matrix: construction and element access") {
    Matrix m(2, 3, 1.5);
    CHECK(m.rows == 2);
    CHECK(m.cols == 3);
    CHECK(m.size() == 6);
    CHECK_FALSE(m.empty());
    for (double v : m.data) CHECK(v == 1.5);

    m(1, 2) = -4.0;
    CHECK(m.data[5] == -4.0);
    CHECK(m.row(1)[2] == -4.0);

    Matrix n(2, 3);
    CHECK(m.same_shape(n));
    CHECK_FALSE(m.same_shape(Matrix(3, 2)));
    CHECK(Matrix().empty());
}

TEST_CASE("check_finite: rejects NaN and Inf, names the operand") {
    Matrix m(2, 2, 0.0);
    CHECK_NOTHROW(check_finite(m, "m"));
    CHECK(all_finite(m));

    m(0, 1) = std::nan("");
    CHECK_FALSE(all_finite(m));
    CHECK_THROWS_AS(check_finite(m, "weights"), InvalidInputError);
    try {
        check_finite(m, "weights");
    } catch (const InvalidInputError& e) {
        CHECK(std::string(e.what()).find("weights") != std::string::npos);
    }

    m(0, 1) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(check_finite(m, "m"), InvalidInputError);
}

// ===== elementwise / structural ops =====

TEST_CASE("matmul: hand-computed product and shape checks") {
    const Matrix a = from_rows(2, 3, {1, 2, 3, 4, 5, 6});
    const Matrix b = from_rows(3, 2, {7, 8, 9, 10, 11, 12});
    const Matrix c = matmul(a, b);
    REQUIRE(c.rows == 2);
    REQUIRE(c.cols == 2);
    CHECK(c(0, 0) == 58.0);   // 1*7 + 2*9 + 3*11
    CHECK(c(0, 1) == 64.0);
    CHECK(c(1, 0) == 139.0);
    CHECK(c(1, 1) == 154.0);

    CHECK_THROWS_AS(matmul(a, from_rows(2, 2, {1, 0, 0, 1})), ShapeError);
}

TEST_CASE("matmul_bt: equals matmul with an explicit transpose") {
    Rng rng(7);
    Matrix a = gaussian_matrix(4, 6, 0.0, 1.0, rng);
    Matrix b = gaussian_matrix(5, 6, 0.0, 1.0, rng);
    const Matrix direct = matmul_bt(a, b);
    const Matrix via_t = matmul(a, transpose(b));
    REQUIRE(direct.same_shape(via_t));
    for (std::size_t i = 0; i < direct.size(); ++i) {
        CHECK(direct.data[i] == doctest::Approx(via_t.data[i]).epsilon(1e-14));
    }
    CHECK_THROWS_AS(matmul_bt(a, gaussian_matrix(5, 7, 0.0, 1.0, rng)), ShapeError);
}

TEST_CASE("transpose: involution and shape swap") {
    const Matrix a = from_rows(2, 3, {1, 2, 3, 4, 5, 6});
    const Matrix t = transpose(a);
    REQUIRE(t.rows == 3);
    REQUIRE(t.cols == 2);
    CHECK(t(0, 1) == 4.0);
    CHECK(t(2, 0) == 3.0);
    const Matrix tt = transpose(t);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(tt.data[i] == a.data[i]);
}

TEST_CASE("add/sub/scale/relu: elementwise definitions") {
    const Matrix a = from_rows(2, 2, {1, -2, 3, -4});
    const Matrix b = from_rows(2, 2, {10, 20, 30, 40});

    const Matrix s = add(a, b);
    CHECK(s(0, 0) == 11.0);
    CHECK(s(1, 1) == 36.0);

    const Matrix d = sub(b, a);
    CHECK(d(0, 1) == 22.0);

    const Matrix sc = scale(a, -0.5);
    CHECK(sc(0, 0) == -0.5);
    CHECK(sc(0, 1) == 1.0);

    const Matrix r = relu(a);
    CHECK(r(0, 0) == 1.0);
    CHECK(r(0, 1) == 0.0);
    CHECK(r(1, 0) == 3.0);
    CHECK(r(1, 1) == 0.0);

    CHECK_THROWS_AS(add(a, Matrix(2, 3)), ShapeError);
    CHECK_THROWS_AS(sub(a, Matrix(3, 2)), ShapeError);
}

TEST_CASE("vstack and row/column slices") {
    const Matrix a = from_rows(1, 2, {1, 2});
    const Matrix b = from_rows(2, 2, {3, 4, 5, 6});
    const Matrix v = vstack({a, b});
    REQUIRE(v.rows == 3);
    REQUIRE(v.cols == 2);
    CHECK(v(0, 1) == 2.0);
    CHECK(v(2, 0) == 5.0);
    CHECK_THROWS_AS(vstack({a, Matrix(1, 3)}), ShapeError);

    const Matrix mid = slice_rows(v, 1, 3);
    REQUIRE(mid.rows == 2);
    CHECK(mid(0, 0) == 3.0);
    CHECK(mid(1, 1) == 6.0);
    CHECK_THROWS_AS(slice_rows(v, 2, 1), ShapeError);
    CHECK_THROWS_AS(slice_rows(v, 0, 4), ShapeError);

    const Matrix right = slice_cols(v, 1, 2);
    REQUIRE(right.cols == 1);
    CHECK(right(2, 0) == 6.0);
    CHECK_THROWS_AS(slice_cols(v, 1, 3), ShapeError);
}

TEST_CASE("mean_abs_diff and frobenius_norm: hand values") {
    const Matrix a = from_rows(1, 2, {3, 4});
    CHECK(frobenius_norm(a) == doctest::Approx(5.0).epsilon(1e-15));

    const Matrix b = from_rows(1, 2, {1, 1});
    CHECK(mean_abs_diff(a, b) == doctest::Approx(2.5).epsilon(1e-15));  // (2 + 3) / 2
    CHECK_THROWS_AS(mean_abs_diff(a, Matrix(2, 1)), ShapeError);
}

// ===== compensated accumulation =====

TEST_CASE("kahan sum: survives catastrophic cancellation") {
    KahanSum acc;
    acc.add(1e16);
    acc.add(1.0);
    acc.add(-1e16);
    CHECK(acc.value() == 1.0);  // naive double sum yields 0 or 2

    // Harmonic-like series against a long double oracle.
    KahanSum h;
    long double oracle = 0.0L;
    for (int k = 1; k <= 200000; ++k) {
        const double term = 1.0 / static_cast<double>(k);
        h.add(term);
        oracle += static_cast<long double>(term);
    }
    CHECK(std::abs(h.value() - static_cast<double>(oracle)) < 1e-12);
}

// ===== row softmax =====

TEST_CASE("row_softmax: rows sum to one and entries are positive") {
    Rng rng(11);
    const Matrix z = gaussian_matrix(50, 17, 0.0, 3.0, rng);
    const Matrix p = row_softmax(z);
    REQUIRE(p.same_shape(z));
    for (std::size_t i = 0; i < p.rows; ++i) {
        KahanSum row_sum;
        for (std::size_t j = 0; j < p.cols; ++j) {
            CHECK(p(i, j) > 0.0);
            row_sum.add(p(i, j));
        }
        CHECK(row_sum.value() == doctest::Approx(1.0).epsilon(1e-13));
    }
}

TEST_CASE("row_softmax: hand case and shift invariance") {
    const Matrix z = from_rows(1, 3, {0.0, std::log(2.0), std::log(3.0)});
    const Matrix p = row_softmax(z);
    CHECK(p(0, 0) == doctest::Approx(1.0 / 6.0).epsilon(1e-14));
    CHECK(p(0, 1) == doctest::Approx(2.0 / 6.0).epsilon(1e-14));
    CHECK(p(0, 2) == doctest::Approx(3.0 / 6.0).epsilon(1e-14));

    Matrix shifted = z;
    for (double& v : shifted.data) v += 123.25;
    const Matrix q = row_softmax(shifted);
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(q(0, j) == doctest::Approx(p(0, j)).epsilon(1e-14));
    }
}

TEST_CASE("row_softmax: extreme logits stay finite, non-finite rejected") {
    const Matrix huge = from_rows(1, 2, {1e4, 0.0});
    const Matrix p = row_softmax(huge);
    CHECK(p(0, 0) == doctest::Approx(1.0));
    CHECK(p(0, 1) >= 0.0);
    CHECK(all_finite(p));

    Matrix bad(1, 2, 0.0);
    bad(0, 0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(row_softmax(bad), InvalidInputError);
}

// ===== norms =====

TEST_CASE("norms: row l1/l2, frobenius, max row") {
    const Matrix m = from_rows(2, 2, {3, -4, 0, 2});
    const Norms n = norms(m);
    REQUIRE(n.row_l1.size() == 2);
    CHECK(n.row_l1[0] == doctest::Approx(7.0));
    CHECK(n.row_l2[0] == doctest::Approx(5.0));
    CHECK(n.row_l1[1] == doctest::Approx(2.0));
    CHECK(n.row_l2[1] == doctest::Approx(2.0));
    CHECK(n.frobenius == doctest::Approx(std::sqrt(29.0)).epsilon(1e-14));

    CHECK(row_l1(m, 0) == doctest::Approx(7.0));
    CHECK(row_l2(m, 1) == doctest::Approx(2.0));
    CHECK(max_row_l2(m) == doctest::Approx(5.0));
}

// ===== deterministic rng =====

TEST_CASE("rng: identical seeds give identical streams") {
    Rng a(42);
    Rng b(42);
    for (int i = 0; i < 16; ++i) CHECK(a.next_u64() == b.next_u64());

    Rng c(42);
    Rng d(43);
    bool any_diff = false;
    for (int i = 0; i < 16; ++i) any_diff |= (c.next_u64() != d.next_u64());
    CHECK(any_diff);
}

TEST_CASE("rng: child streams are reproducible and distinct") {
    const Rng root(9001);
    Rng c1 = root.child(5);
    Rng c2 = Rng(9001).child(5);
    for (int i = 0; i < 8; ++i) CHECK(c1.next_u64() == c2.next_u64());

    Rng c5 = root.child(5);
    Rng c6 = root.child(6);
    bool any_diff = false;
    for (int i = 0; i < 8; ++i) any_diff |= (c5.next_u64() != c6.next_u64());
    CHECK(any_diff);

    // Deriving a child does not advance the parent.
    Rng p1(123);
    Rng p2(123);
    (void)p1.child(0);
    CHECK(p1.next_u64() == p2.next_u64());
    CHECK(root.seed() == 9001);
}

TEST_CASE("rng: uniform range and gaussian moments") {
    Rng rng(2024);
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.next_double();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }

    KahanSum sum;
    KahanSum sum_sq;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double g = rng.next_gaussian();
        sum.add(g);
        sum_sq.add(g * g);
    }
    const double mean = sum.value() / n;
    const double var = sum_sq.value() / n - mean * mean;
    CHECK(std::abs(mean) < 0.01);           // se ~ 0.0022
    CHECK(var == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("gaussian_matrix: shape, determinism, parameter checks") {
    Rng a(5);
    Rng b(5);
    const Matrix m1 = gaussian_matrix(3, 4, 2.0, 0.5, a);
    const Matrix m2 = gaussian_matrix(3, 4, 2.0, 0.5, b);
    REQUIRE(m1.rows == 3);
    REQUIRE(m1.cols == 4);
    for (std::size_t i = 0; i < m1.size(); ++i) CHECK(m1.data[i] == m2.data[i]);

    Rng c(5);
    CHECK_THROWS_AS(gaussian_matrix(2, 2, 0.0, -1.0, c), InvalidInputError);

    // stddev 0 collapses onto the mean.
    Rng d(5);
    const Matrix flat = gaussian_matrix(2, 2, 7.0, 0.0, d);
    for (double v : flat.data) CHECK(v == 7.0);
}

// ===== deterministic parallel map =====

TEST_CASE("parallel_for_index: same output for every worker count") {
    const std::size_t n = 257;
    auto fill = [&](int threads) {
        std::vector<double> out(n, 0.0);
        parallel_for_index(n, threads, [&](std::size_t i) {
            Rng rng = Rng(77).child(i);
            out[i] = rng.next_gaussian();
        });
        return out;
    };
    const std::vector<double> t1 = fill(1);
    const std::vector<double> t2 = fill(2);
    const std::vector<double> t8 = fill(8);
    const std::vector<double> t0 = fill(0);  // hardware concurrency
    for (std::size_t i = 0; i < n; ++i) {
        CHECK(t1[i] == t2[i]);
        CHECK(t1[i] == t8[i]);
        CHECK(t1[i] == t0[i]);
    }
}

TEST_CASE("parallel_for_index: covers every index exactly once") {
    const std::size_t n = 100;
    std::vector<int> hits(n, 0);
    parallel_for_index(n, 4, [&](std::size_t i) { hits[i] += 1; });
    for (int h : hits) CHECK(h == 1);

    CHECK_NOTHROW(parallel_for_index(0, 4, [](std::size_t) {}));
}

TEST_CASE("parallel_for_index: worker exceptions propagate to the caller") {
    auto boom = [] {
        parallel_for_index(64, 3, [](std::size_t i) {
            if (i == 37) throw InvalidInputError("index 37 rejected");
        });
    };
    CHECK_THROWS_AS(boom(), InvalidInputError);
}
