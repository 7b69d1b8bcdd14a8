#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "gaitfuse/errors.hpp"
#include "gaitfuse/numkit.hpp"
#include "gaitfuse/rng.hpp"

using namespace gaitfuse;
using namespace gaitfuse::numkit;

namespace {

Matrix random_spd(std::size_t n, Rng& rng) {
    Matrix b(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) b(i, j) = rng.normal();
    Matrix spd = matmul(transpose(b), b);
    for (std::size_t i = 0; i < n; ++i) spd(i, i) += 0.5;
    return spd;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            m = std::max(m, std::abs(a(i, j) - b(i, j)));
    return m;
}

}  // namespace

TEST_CASE("sym_eig: identity has unit eigenvalues") {
    const auto eig = sym_eig(Matrix::identity(3));
    for (double v : eig.values) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("sym_eig: 2x2 analytic eigenvalues") {
    // [[2,1],[1,2]] has characteristic polynomial (2-l)^2 - 1 = 0 -> l = 3, 1.
    Matrix a(2, 2);
    a(0, 0) = 2;
    a(0, 1) = 1;
    a(1, 0) = 1;
    a(1, 1) = 2;
    const auto eig = sym_eig(a);
    CHECK(eig.values[0] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(eig.values[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("sym_eig: reconstruction and orthonormality on random SPD 5x5") {
    Rng rng(7);
    const Matrix a = random_spd(5, rng);
    const auto eig = sym_eig(a);

    Matrix lambda(5, 5, 0.0);
    for (std::size_t i = 0; i < 5; ++i) lambda(i, i) = eig.values[i];
    const Matrix recon = matmul(matmul(eig.vectors, lambda), transpose(eig.vectors));
    CHECK(max_abs_diff(recon, a) < 1e-8);

    const Matrix vtv = matmul(transpose(eig.vectors), eig.vectors);
    CHECK(max_abs_diff(vtv, Matrix::identity(5)) < 1e-8);
}

TEST_CASE("sym_eig: a*V = V*diag within 1e-8 * norm") {
    Rng rng(11);
    const Matrix a = random_spd(8, rng);
    const auto eig = sym_eig(a);
    const Matrix av = matmul(a, eig.vectors);
    Matrix vl = eig.vectors;
    for (std::size_t i = 0; i < vl.rows(); ++i)
        for (std::size_t j = 0; j < vl.cols(); ++j) vl(i, j) *= eig.values[j];
    CHECK(max_abs_diff(av, vl) < 1e-8 * frobenius_norm(a));
}

TEST_CASE("sym_eig: eigenvalue sum equals trace") {
    Rng rng(3);
    for (int rep = 0; rep < 10; ++rep) {
        const std::size_t n = 2 + rep % 6;
        const Matrix a = random_spd(n, rng);
        const auto eig = sym_eig(a);
        double trace = 0.0, sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) trace += a(i, i);
        for (double v : eig.values) sum += v;
        CHECK(sum == doctest::Approx(trace).epsilon(1e-8));
    }
}

TEST_CASE("sym_eig: rejects non-finite and asymmetric input") {
    Matrix bad(2, 2, 0.0);
    bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(sym_eig(bad), InputError);

    Matrix asym(2, 2, 0.0);
    asym(0, 1) = 1.0;
    asym(1, 0) = 0.5;
    CHECK_THROWS_AS(sym_eig(asym), InputError);
}

TEST_CASE("inv_sqrt_psd: identity maps to identity") {
    const Matrix r = inv_sqrt_psd(Matrix::identity(4), 0.0);
    CHECK(max_abs_diff(r, Matrix::identity(4)) < 1e-10);
    // Applying it twice keeps the identity, exactly up to 1e-10.
    const Matrix rr = inv_sqrt_psd(r, 0.0);
    CHECK(max_abs_diff(rr, Matrix::identity(4)) < 1e-10);
}

TEST_CASE("inv_sqrt_psd: diagonal case") {
    Matrix d(2, 2, 0.0);
    d(0, 0) = 4.0;
    d(1, 1) = 9.0;
    const Matrix r = inv_sqrt_psd(d, 0.0);
    CHECK(r(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(r(1, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(std::abs(r(0, 1)) < 1e-14);
}

TEST_CASE("inv_sqrt_psd: R (a + ridge I) R = I on random SPD") {
    Rng rng(19);
    const Matrix a = random_spd(6, rng);
    const double ridge = 1e-4;
    const Matrix r = inv_sqrt_psd(a, ridge);
    Matrix shifted = a;
    for (std::size_t i = 0; i < 6; ++i) shifted(i, i) += ridge;
    const Matrix check = matmul(matmul(r, shifted), r);
    CHECK(max_abs_diff(check, Matrix::identity(6)) < 1e-7);
}

TEST_CASE("inv_sqrt_psd: non-positive eigenvalue raises naming the value") {
    Matrix d(2, 2, 0.0);
    d(0, 0) = 1.0;
    d(1, 1) = -2.0;
    CHECK_THROWS_WITH_AS(inv_sqrt_psd(d, 0.0),
                         doctest::Contains("eigenvalue"), SingularityError);
}

TEST_CASE("svd_values: diagonal and zero matrices") {
    Matrix d(2, 2, 0.0);
    d(0, 0) = 3.0;
    d(1, 1) = 1.0;
    const auto sv = svd_values(d);
    CHECK(sv[0] == doctest::Approx(3.0));
    CHECK(sv[1] == doctest::Approx(1.0));

    const auto zeros = svd_values(Matrix(3, 2, 0.0));
    for (double s : zeros) CHECK(s == 0.0);
}

TEST_CASE("svd_values: Frobenius identity and transpose invariance") {
    Rng rng(23);
    Matrix m(4, 3);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 3; ++j) m(i, j) = rng.normal();

    const auto sv = svd_values(m);
    double sq = 0.0;
    for (double s : sv) {
        CHECK(s >= 0.0);
        sq += s * s;
    }
    const double fro = frobenius_norm(m);
    CHECK(sq == doctest::Approx(fro * fro).epsilon(1e-8));

    const auto svt = svd_values(transpose(m));
    REQUIRE(svt.size() == sv.size());
    for (std::size_t i = 0; i < sv.size(); ++i)
        CHECK(svt[i] == doctest::Approx(sv[i]).epsilon(1e-10));

    // Descending order.
    for (std::size_t i = 0; i + 1 < sv.size(); ++i) CHECK(sv[i] >= sv[i + 1]);
}
