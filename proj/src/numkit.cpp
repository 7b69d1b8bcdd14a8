#include "gaitfuse/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "gaitfuse/errors.hpp"

namespace gaitfuse::numkit {

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

bool all_finite(const Matrix& a) {
    const double* p = a.data();
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!std::isfinite(p[i])) return false;
    }
    return true;
}

bool all_finite(const Vector& v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw DimensionError("matmul: inner dimensions differ");
    Matrix c(a.rows(), b.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const double* brow = b.row(k);
            double* crow = c.row(i);
            for (std::size_t j = 0; j < b.cols(); ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    }
    return t;
}

Vector matvec(const Matrix& a, const Vector& x) {
    if (a.cols() != x.size()) throw DimensionError("matvec: dimension mismatch");
    Vector y(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* row = a.row(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) acc += row[j] * x[j];
        y[i] = acc;
    }
    return y;
}

Vector matvec_transposed(const Matrix& a, const Vector& x) {
    if (a.rows() != x.size()) throw DimensionError("matvec_transposed: dimension mismatch");
    Vector y(a.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* row = a.row(i);
        const double xi = x[i];
        for (std::size_t j = 0; j < a.cols(); ++j) y[j] += row[j] * xi;
    }
    return y;
}

double frobenius_norm(const Matrix& a) {
    double acc = 0.0;
    const double* p = a.data();
    for (std::size_t i = 0; i < a.size(); ++i) acc += p[i] * p[i];
    return std::sqrt(acc);
}

double dot(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) throw DimensionError("dot: length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

namespace {

double max_abs(const Matrix& a) {
    double m = 0.0;
    const double* p = a.data();
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(p[i]));
    return m;
}

// Symmetrized copy; rejects inputs that are not square, not finite, or
// asymmetric beyond tolerance.
Matrix checked_symmetrize(const Matrix& a, const char* who) {
    if (a.rows() != a.cols() || a.rows() == 0) {
        throw DimensionError(std::string(who) + ": matrix must be square and non-empty");
    }
    if (!all_finite(a)) throw InputError(std::string(who) + ": non-finite entries");
    const double scale = std::max(1.0, max_abs(a));
    Matrix s(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            if (std::abs(a(i, j) - a(j, i)) > kSymmetryTol * scale) {
                throw InputError(std::string(who) + ": matrix is not symmetric at (" +
                                 std::to_string(i) + "," + std::to_string(j) + ")");
            }
            s(i, j) = 0.5 * (a(i, j) + a(j, i));
        }
    }
    return s;
}

double off_diagonal_norm(const Matrix& a) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            if (i != j) acc += a(i, j) * a(i, j);
        }
    }
    return std::sqrt(acc);
}

}  // namespace

SymEig sym_eig(const Matrix& input) {
    Matrix a = checked_symmetrize(input, "sym_eig");
    const std::size_t n = a.rows();
    Matrix v = Matrix::identity(n);

    const double stop = kJacobiOffTol * std::max(1.0, frobenius_norm(a));
    for (int sweep = 0; sweep < kJacobiMaxSweeps; ++sweep) {
        if (off_diagonal_norm(a) <= stop) break;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;

                const double app = a(p, p);
                const double aqq = a(q, q);
                a(p, p) = app - t * apq;
                a(q, q) = aqq + t * apq;
                a(p, q) = 0.0;
                a(q, p) = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    if (i == p || i == q) continue;
                    const double aip = a(i, p);
                    const double aiq = a(i, q);
                    a(i, p) = c * aip - s * aiq;
                    a(p, i) = a(i, p);
                    a(i, q) = s * aip + c * aiq;
                    a(q, i) = a(i, q);
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vip = v(i, p);
                    const double viq = v(i, q);
                    v(i, p) = c * vip - s * viq;
                    v(i, q) = s * vip + c * viq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&a](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

    SymEig out;
    out.values.resize(n);
    out.vectors = Matrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        out.values[j] = a(order[j], order[j]);
        for (std::size_t i = 0; i < n; ++i) out.vectors(i, j) = v(i, order[j]);
    }
    return out;
}

Matrix inv_sqrt_psd(const Matrix& a, double ridge) {
    Matrix shifted = checked_symmetrize(a, "inv_sqrt_psd");
    for (std::size_t i = 0; i < shifted.rows(); ++i) shifted(i, i) += ridge;

    const SymEig eig = sym_eig(shifted);
    for (std::size_t i = 0; i < eig.values.size(); ++i) {
        if (eig.values[i] <= 0.0) {
            throw SingularityError("inv_sqrt_psd: eigenvalue " + std::to_string(i) +
                                   " = " + std::to_string(eig.values[i]) +
                                   " is not positive");
        }
    }

    const std::size_t n = shifted.rows();
    Matrix r(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                acc += eig.vectors(i, k) * eig.vectors(j, k) / std::sqrt(eig.values[k]);
            }
            r(i, j) = acc;
            r(j, i) = acc;
        }
    }
    return r;
}

Vector svd_values(const Matrix& m) {
    if (m.rows() == 0 || m.cols() == 0) throw DimensionError("svd_values: empty matrix");
    if (!all_finite(m)) throw InputError("svd_values: non-finite entries");

    // Gram matrix of the smaller side keeps the Jacobi problem as small as
    // possible; its eigenvalues are the squared singular values.
    const bool tall = m.rows() >= m.cols();
    const Matrix mt = transpose(m);
    const Matrix gram = tall ? matmul(mt, m) : matmul(m, mt);

    const SymEig eig = sym_eig(gram);
    Vector sv(eig.values.size());
    for (std::size_t i = 0; i < sv.size(); ++i) {
        sv[i] = std::sqrt(std::max(0.0, eig.values[i]));
    }
    return sv;
}

}  // namespace gaitfuse::numkit
