#pragma once

#include <Eigen/Dense>

#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "optbench/errors.hpp"

namespace optbench {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

/// Row-major dynamic matrix; the layout every rank-2 Tensor maps onto.
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Index shape_numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), Index{1}, std::multiplies<Index>());
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ']';
    return os.str();
}

/// Dense n-dimensional array of doubles, row-major contiguous. The single
/// value carrier between modules; linear-algebra views are Eigen maps over
/// the flat storage.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape)
        : shape_(std::move(shape)), data_(Eigen::VectorXd::Zero(shape_numel(shape_))) {}

    Tensor(Shape shape, Eigen::VectorXd data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (shape_numel(shape_) != data_.size())
            throw ShapeError("tensor: shape " + shape_str(shape_) + " does not hold " +
                             std::to_string(data_.size()) + " values");
    }

    static Tensor from(Shape shape, std::initializer_list<double> values) {
        Eigen::VectorXd v(Index(values.size()));
        Index i = 0;
        for (double x : values) v[i++] = x;
        return Tensor(std::move(shape), std::move(v));
    }

    Index rank() const { return Index(shape_.size()); }
    const Shape& shape() const { return shape_; }
    Index dim(Index i) const { return shape_[std::size_t(i)]; }
    Index size() const { return data_.size(); }
    bool empty() const { return data_.size() == 0; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    Eigen::VectorXd& vec() { return data_; }
    const Eigen::VectorXd& vec() const { return data_; }

    double& operator[](Index flat) { return data_[flat]; }
    double operator[](Index flat) const { return data_[flat]; }

    template <typename... Ix>
    double& operator()(Ix... ix) { return data_[flat_index(ix...)]; }
    template <typename... Ix>
    double operator()(Ix... ix) const { return data_[flat_index(ix...)]; }

    /// Rank-2 view. Throws unless rank() == 2.
    Eigen::Map<RowMat> mat() {
        require_rank2();
        return {data_.data(), shape_[0], shape_[1]};
    }
    Eigen::Map<const RowMat> mat() const {
        require_rank2();
        return {data_.data(), shape_[0], shape_[1]};
    }

    /// Same storage, new shape (sizes must agree).
    Tensor reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const { return data_.allFinite(); }

private:
    template <typename... Ix>
    Index flat_index(Ix... ix) const {
        const Index idx[] = {Index(ix)...};
        Index flat = 0;
        for (std::size_t d = 0; d < sizeof...(Ix); ++d) flat = flat * shape_[d] + idx[d];
        return flat;
    }
    void require_rank2() const {
        if (rank() != 2)
            throw ShapeError("tensor: rank-2 view of " + shape_str(shape_));
    }

    Shape shape_;
    Eigen::VectorXd data_;
};

} // namespace optbench
