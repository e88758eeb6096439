#pragma once

#include <Eigen/Core>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "forkcast/errors.hpp"

namespace forkcast {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

/// Dense row-major tensor of doubles. Shapes are small integer vectors;
/// rank is anything the caller needs (the engine uses up to 4 axes).
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        data_.setZero(count(shape_));
    }

    Tensor(std::vector<int> shape, std::initializer_list<double> values)
        : shape_(std::move(shape)) {
        if (static_cast<Eigen::Index>(values.size()) != count(shape_))
            throw ShapeError("initializer size does not match shape");
        data_.resize(count(shape_));
        Eigen::Index i = 0;
        for (double v : values) data_[i++] = v;
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

    /// Storage only; caller must assign every element.
    static Tensor uninit(std::vector<int> shape) {
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_.resize(count(t.shape_));
        return t;
    }

    static Tensor full(std::vector<int> shape, double v) {
        Tensor t(std::move(shape));
        t.data_.setConstant(v);
        return t;
    }

    static Tensor scalar(double v) {
        Tensor t({1});
        t.data_[0] = v;
        return t;
    }

    const std::vector<int>& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int axis) const { return shape_[static_cast<size_t>(axis)]; }
    Eigen::Index size() const { return data_.size(); }

    Eigen::ArrayXd& array() { return data_; }
    const Eigen::ArrayXd& array() const { return data_; }
    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](Eigen::Index i) { return data_[i]; }
    double operator[](Eigen::Index i) const { return data_[i]; }

    double& at(int i, int j) { return data_[static_cast<Eigen::Index>(i) * dim(1) + j]; }
    double at(int i, int j) const { return data_[static_cast<Eigen::Index>(i) * dim(1) + j]; }
    double& at(int i, int j, int k) {
        return data_[(static_cast<Eigen::Index>(i) * dim(1) + j) * dim(2) + k];
    }
    double at(int i, int j, int k) const {
        return data_[(static_cast<Eigen::Index>(i) * dim(1) + j) * dim(2) + k];
    }
    double& at(int i, int j, int k, int l) {
        return data_[((static_cast<Eigen::Index>(i) * dim(1) + j) * dim(2) + k) * dim(3) + l];
    }
    double at(int i, int j, int k, int l) const {
        return data_[((static_cast<Eigen::Index>(i) * dim(1) + j) * dim(2) + k) * dim(3) + l];
    }

    /// 2-d view with explicit extents (product must equal size()).
    MatMap mat(int rows, int cols) {
        if (static_cast<Eigen::Index>(rows) * cols != size())
            throw ShapeError("mat view does not cover tensor");
        return MatMap(data_.data(), rows, cols);
    }
    ConstMatMap mat(int rows, int cols) const {
        if (static_cast<Eigen::Index>(rows) * cols != size())
            throw ShapeError("mat view does not cover tensor");
        return ConstMatMap(data_.data(), rows, cols);
    }

    /// Leading axis as rows, everything else flattened into columns.
    MatMap mat() { return mat(dim(0), static_cast<int>(size() / dim(0))); }
    ConstMatMap mat() const { return mat(dim(0), static_cast<int>(size() / dim(0))); }

    Tensor reshaped(std::vector<int> shape) const {
        if (count(shape) != size()) throw ShapeError("reshape changes element count");
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = data_;
        return t;
    }

    bool all_finite() const { return data_.isFinite().all(); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

private:
    static Eigen::Index count(const std::vector<int>& shape) {
        Eigen::Index n = 1;
        for (int d : shape) {
            if (d <= 0) throw ShapeError("nonpositive dimension");
            n *= d;
        }
        return n;
    }

    std::vector<int> shape_;
    Eigen::ArrayXd data_;
};

}  // namespace forkcast
