#include "optbench/linalg.hpp"

#include <cmath>
#include <string>

namespace optbench::linalg {

SpdMatrix::SpdMatrix(Eigen::MatrixXd values) : data_(std::move(values)) {
    if (data_.rows() != data_.cols())
        throw ShapeError("spd: matrix is " + std::to_string(data_.rows()) + "x" +
                         std::to_string(data_.cols()) + ", expected square");
    for (Index i = 0; i < data_.rows(); ++i)
        for (Index j = i + 1; j < data_.cols(); ++j) {
            const double d = std::abs(data_(i, j) - data_(j, i));
            if (!(d <= 1e-12 * std::max(1.0, std::abs(data_(i, j)))))
                throw ShapeError("spd: asymmetric at (" + std::to_string(i) + "," +
                                 std::to_string(j) + "): " + std::to_string(data_(i, j)) +
                                 " vs " + std::to_string(data_(j, i)));
        }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw ShapeError("matmul: ranks " + std::to_string(a.rank()) + " and " +
                         std::to_string(b.rank()) + ", expected 2 and 2");
    if (a.dim(1) != b.dim(0))
        throw ShapeError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    Tensor out({a.dim(0), b.dim(1)});
    out.mat().noalias() = a.mat() * b.mat();
    return out;
}

double dot(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() != b.size())
        throw ShapeError("dot: lengths " + std::to_string(a.size()) + " and " +
                         std::to_string(b.size()));
    return a.dot(b);
}

double dot(const Tensor& a, const Tensor& b) {
    if (a.rank() != 1 || b.rank() != 1)
        throw ShapeError("dot: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                         ", expected rank-1");
    return dot(a.vec(), b.vec());
}

double norm2(const Eigen::VectorXd& a) { return std::sqrt(a.dot(a)); }

double norm2(const Tensor& a) {
    if (a.rank() != 1)
        throw ShapeError("norm2: shape " + shape_str(a.shape()) + ", expected rank-1");
    return norm2(a.vec());
}

Eigen::VectorXd cholesky_solve(const SpdMatrix& a, const Eigen::VectorXd& b) {
    const Index n = a.n();
    if (b.size() != n)
        throw ShapeError("cholesky_solve: rhs length " + std::to_string(b.size()) +
                         " for system of dimension " + std::to_string(n));

    // Lower factor, column by column.
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
    const Eigen::MatrixXd& A = a.data();
    for (Index j = 0; j < n; ++j) {
        const double pivot = A(j, j) - L.row(j).head(j).squaredNorm();
        if (!(pivot > 0.0))
            throw DefinitenessError("cholesky_solve: non-positive pivot " +
                                        std::to_string(pivot) + " at index " + std::to_string(j),
                                    int(j));
        L(j, j) = std::sqrt(pivot);
        for (Index i = j + 1; i < n; ++i)
            L(i, j) = (A(i, j) - L.row(i).head(j).dot(L.row(j).head(j))) / L(j, j);
    }

    // L y = b, then L^T x = y.
    Eigen::VectorXd y(n);
    for (Index i = 0; i < n; ++i)
        y(i) = (b(i) - L.row(i).head(i).dot(y.head(i))) / L(i, i);
    Eigen::VectorXd x(n);
    for (Index i = n - 1; i >= 0; --i)
        x(i) = (y(i) - L.col(i).tail(n - i - 1).dot(x.tail(n - i - 1))) / L(i, i);
    return x;
}

Tensor cholesky_solve(const SpdMatrix& a, const Tensor& b) {
    if (b.rank() != 1)
        throw ShapeError("cholesky_solve: rhs shape " + shape_str(b.shape()) +
                         ", expected rank-1");
    return Tensor({a.n()}, cholesky_solve(a, b.vec()));
}

} // namespace optbench::linalg
