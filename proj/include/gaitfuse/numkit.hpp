#pragma once

#include <cstddef>
#include <vector>

namespace gaitfuse::numkit {

using Vector = std::vector<double>;

// Dense row-major matrix of doubles. Small sizes only (a few thousand
// entries per side at most); everything is stored and computed directly.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix identity(std::size_t n);

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double* row(std::size_t i) { return data_.data() + i * cols_; }
    const double* row(std::size_t i) const { return data_.data() + i * cols_; }

    Vector row_vec(std::size_t i) const {
        return Vector(row(i), row(i) + cols_);
    }

    bool operator==(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_ && data_ == other.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Module tolerances. Fixed constants rather than per-call knobs so every
// caller sees the same contract.
inline constexpr double kSymmetryTol = 1e-9;      // max allowed |a_ij - a_ji|, relative
inline constexpr double kJacobiOffTol = 1e-13;    // off-diagonal mass at convergence, relative
inline constexpr int kJacobiMaxSweeps = 64;

struct SymEig {
    Vector values;   // descending
    Matrix vectors;  // eigenvectors as columns, same order as values
};

// Symmetric eigendecomposition by cyclic Jacobi rotations. The input is
// checked for finiteness and symmetry (within kSymmetryTol, relative to the
// largest entry), then symmetrized by averaging before the sweeps.
SymEig sym_eig(const Matrix& a);

// Inverse square root of a symmetric PSD matrix: returns R with
// R (a + ridge I) R = I. Throws SingularityError naming the offending
// eigenvalue if any eigenvalue of (a + ridge I) is <= 0.
Matrix inv_sqrt_psd(const Matrix& a, double ridge);

// Singular values of an arbitrary matrix, descending. Computed from the
// eigenvalues of the smaller Gram matrix.
Vector svd_values(const Matrix& m);

// Basic dense kernels shared by the rest of the library.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Vector matvec(const Matrix& a, const Vector& x);
Vector matvec_transposed(const Matrix& a, const Vector& x);  // a^T x
double frobenius_norm(const Matrix& a);
double dot(const Vector& a, const Vector& b);
bool all_finite(const Matrix& a);
bool all_finite(const Vector& v);

}  // namespace gaitfuse::numkit
