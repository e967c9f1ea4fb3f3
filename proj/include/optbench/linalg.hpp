#pragma once

#include <Eigen/Dense>

#include "optbench/tensor.hpp"

namespace optbench::linalg {

/// Symmetric positive-(semi)definite matrix candidate. Construction checks
/// symmetry to |A(i,j) - A(j,i)| <= 1e-12 * max(1, |A(i,j)|); definiteness
/// is only established by cholesky_solve.
class SpdMatrix {
public:
    explicit SpdMatrix(Eigen::MatrixXd values);

    Index n() const { return data_.rows(); }
    const Eigen::MatrixXd& data() const { return data_; }

private:
    Eigen::MatrixXd data_;
};

/// Standard matrix product of two rank-2 tensors.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Inner product of two equal-length vectors.
double dot(const Eigen::VectorXd& a, const Eigen::VectorXd& b);
double dot(const Tensor& a, const Tensor& b);

/// Euclidean norm, sqrt(dot(a, a)).
double norm2(const Eigen::VectorXd& a);
double norm2(const Tensor& a);

/// Solve a x = b by Cholesky factorization (no explicit inverse). Throws
/// DefinitenessError with the failing pivot index when a is not positive
/// definite; the LM caller reacts by raising its damping factor.
Eigen::VectorXd cholesky_solve(const SpdMatrix& a, const Eigen::VectorXd& b);
Tensor cholesky_solve(const SpdMatrix& a, const Tensor& b);

} // namespace optbench::linalg
