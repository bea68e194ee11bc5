#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "lsnt/gradcheck.hpp"
#include "lsnt/matrix.hpp"
#include "lsnt/rng.hpp"

using namespace lsnt;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, SeededRng& rng, double lo = -1.0,
                     double hi = 1.0) {
    Matrix m(r, c);
    for (double& v : m.data()) v = lo + (hi - lo) * rng.next_double();
    return m;
}

}  // namespace

TEST_CASE("matmul identity") {
    Matrix a{{3, 4}, {5, 6}};
    CHECK(matmul(Matrix::identity(2), a) == a);
}

TEST_CASE("matmul hand example") {
    Matrix a{{1, 2}};
    Matrix b{{3}, {4}};
    Matrix p = matmul(a, b);
    CHECK(p.rows() == 1);
    CHECK(p.cols() == 1);
    CHECK(p(0, 0) == doctest::Approx(11.0));
}

TEST_CASE("matmul shape error carries both shapes") {
    Matrix a(2, 3), b(2, 3);
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("2x3"), ShapeError);
}

TEST_CASE("matmul transpose variants agree with explicit transpose") {
    SeededRng rng(11);
    Matrix a = random_matrix(4, 6, rng);
    Matrix b = random_matrix(5, 6, rng);
    CHECK(max_abs_diff(matmul_nt(a, b), matmul(a, transpose(b))) == 0.0);
    Matrix c = random_matrix(4, 3, rng);
    CHECK(max_abs_diff(matmul_tn(a, c), matmul(transpose(a), c)) == 0.0);
}

TEST_CASE("matmul associativity on random triples") {
    SeededRng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        std::size_t m = 1 + rng.next_below(8);
        std::size_t k = 1 + rng.next_below(8);
        std::size_t n = 1 + rng.next_below(8);
        std::size_t p = 1 + rng.next_below(8);
        Matrix a = random_matrix(m, k, rng);
        Matrix b = random_matrix(k, n, rng);
        Matrix c = random_matrix(n, p, rng);
        Matrix left = matmul(matmul(a, b), c);
        Matrix right = matmul(a, matmul(b, c));
        double scale = 0.0;
        for (double v : left.data()) scale = std::max(scale, std::abs(v));
        CHECK(max_abs_diff(left, right) <= 1e-9 * std::max(1.0, scale));
    }
}

TEST_CASE("softmax symmetric row") {
    Matrix m{{0, 0, 0}};
    Matrix s = softmax_rows(m);
    for (std::size_t j = 0; j < 3; ++j) CHECK(s(0, j) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("softmax hand example ln2") {
    Matrix m{{std::log(2.0), 0.0}};
    Matrix s = softmax_rows(m);
    CHECK(s(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(s(0, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("softmax large logit is stable") {
    Matrix m{{1000.0, 0.0}};
    Matrix s = softmax_rows(m);
    CHECK(all_finite(s));
    CHECK(s(0, 0) == doctest::Approx(1.0));
    CHECK(s(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("softmax rows sum to one and are nonnegative") {
    SeededRng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        Matrix m = random_matrix(1 + rng.next_below(10), 1 + rng.next_below(10), rng, -50, 50);
        Matrix s = softmax_rows(m);
        for (std::size_t i = 0; i < s.rows(); ++i) {
            double sum = 0.0;
            for (std::size_t j = 0; j < s.cols(); ++j) {
                CHECK(s(i, j) >= 0.0);
                sum += s(i, j);
            }
            CHECK(std::abs(sum - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("softmax shift invariance") {
    SeededRng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        Matrix m = random_matrix(3, 5, rng, -10, 10);
        double c = -20.0 + 40.0 * rng.next_double();
        Matrix shifted = m;
        for (double& v : shifted.data()) v += c;
        CHECK(max_abs_diff(softmax_rows(m), softmax_rows(shifted)) <= 1e-12);
    }
}

TEST_CASE("relu and sigmoid pointwise") {
    Matrix m{{-1.0, 2.0}};
    Matrix r = relu(m);
    CHECK(r(0, 0) == 0.0);
    CHECK(r(0, 1) == 2.0);

    Matrix z{{0.0}};
    CHECK(sigmoid(z)(0, 0) == doctest::Approx(0.5));

    Matrix deep{{-709.0}};
    Matrix s = sigmoid(deep);
    CHECK(s(0, 0) > 0.0);
    CHECK(std::isfinite(s(0, 0)));
}

TEST_CASE("dropout mask degenerate and error cases") {
    SeededRng rng(1);
    Matrix ones = dropout_mask(3, 4, 0.0, rng);
    for (double v : ones.data()) CHECK(v == 1.0);
    CHECK_THROWS_AS(dropout_mask(2, 2, 1.0, rng), ParameterError);
    CHECK_THROWS_AS(dropout_mask(2, 2, -0.1, rng), ParameterError);
}

TEST_CASE("dropout mask zero fraction concentrates") {
    SeededRng rng(42);
    Matrix m = dropout_mask(100, 100, 0.5, rng);
    std::size_t zeros = 0;
    for (double v : m.data()) {
        if (v == 0.0) {
            ++zeros;
        } else {
            CHECK(v == doctest::Approx(2.0));
        }
    }
    double frac = static_cast<double>(zeros) / 10000.0;
    CHECK(frac >= 0.45);
    CHECK(frac <= 0.55);
}

TEST_CASE("seeded rng stream is frozen") {
    SeededRng rng(1);
    CHECK(rng.next_u64() == 0x910a2dec89025cc1ull);
    CHECK(rng.next_u64() == 0xbeeb8da1658eec67ull);
    CHECK(rng.next_u64() == 0xf893a2eefb32555eull);
    CHECK(rng.next_u64() == 0x71c18690ee42c90bull);

    SeededRng d(1);
    CHECK(d.next_double() == 0.5665615751722809);
    CHECK(d.next_double() == 0.7457817572627011);
    CHECK(d.next_double() == 0.9710027535867962);

    SeededRng g(1);
    CHECK(g.next_gaussian() == doctest::Approx(-0.028249746095854702).epsilon(1e-14));
    CHECK(g.next_gaussian() == doctest::Approx(-0.22791952286763514).epsilon(1e-14));
}

TEST_CASE("seeded rng identical seeds identical streams") {
    SeededRng a(9001), b(9001);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("finite differences on analytic functions") {
    auto square = [](const std::vector<double>& x) { return x[0] * x[0]; };
    auto g = finite_diff_grad(square, {3.0});
    CHECK(g[0] == doctest::Approx(6.0).epsilon(1e-6));

    auto constant = [](const std::vector<double>&) { return 4.2; };
    auto gc = finite_diff_grad(constant, {1.0, -2.0, 0.5});
    for (double v : gc) CHECK(v == 0.0);

    auto prod = [](const std::vector<double>& x) { return x[0] * x[1]; };
    auto gp = finite_diff_grad(prod, {2.0, 5.0});
    CHECK(gp[0] == doctest::Approx(5.0).epsilon(1e-6));
    CHECK(gp[1] == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("finite differences reject non-finite values") {
    auto bad = [](const std::vector<double>& x) { return std::log(x[0]); };
    CHECK_THROWS_AS(finite_diff_grad(bad, {0.0}), OracleError);
}
