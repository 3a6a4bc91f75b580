#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace plab {

using Vec = std::vector<double>;

// Dense row-major matrix of doubles. Sized once, reused across passes.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) {
        assert(r < rows_ && c < cols_);
        return data_[r * cols_ + c];
    }
    double operator()(std::size_t r, std::size_t c) const {
        assert(r < rows_ && c < cols_);
        return data_[r * cols_ + c];
    }

    std::span<double> row(std::size_t r) {
        assert(r < rows_);
        return {data_.data() + r * cols_, cols_};
    }
    std::span<const double> row(std::size_t r) const {
        assert(r < rows_);
        return {data_.data() + r * cols_, cols_};
    }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    Vec& values() { return data_; }
    const Vec& values() const { return data_; }

    void fill(double v) { data_.assign(data_.size(), v); }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    Vec data_;
};

// Non-owning views over parameter blocks stored in a flat buffer.
struct MatView {
    double* data = nullptr;
    std::size_t rows = 0;
    std::size_t cols = 0;

    double& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    std::span<double> row(std::size_t r) const { return {data + r * cols, cols}; }
    std::span<double> flat() const { return {data, rows * cols}; }
};

struct ConstMatView {
    const double* data = nullptr;
    std::size_t rows = 0;
    std::size_t cols = 0;

    ConstMatView() = default;
    ConstMatView(const double* d, std::size_t r, std::size_t c) : data(d), rows(r), cols(c) {}
    ConstMatView(MatView v) : data(v.data), rows(v.rows), cols(v.cols) {}
    ConstMatView(const Matrix& m) : data(m.data()), rows(m.rows()), cols(m.cols()) {}

    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    std::span<const double> row(std::size_t r) const { return {data + r * cols, cols}; }
    std::span<const double> flat() const { return {data, rows * cols}; }
};

inline double dot(std::span<const double> x, std::span<const double> y) {
    assert(x.size() == y.size());
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return s;
}

// y = A x
inline void gemv(ConstMatView a, std::span<const double> x, std::span<double> y) {
    assert(x.size() == a.cols && y.size() == a.rows);
    for (std::size_t r = 0; r < a.rows; ++r) y[r] = dot(a.row(r), x);
}

// y += A x
inline void gemv_add(ConstMatView a, std::span<const double> x, std::span<double> y) {
    assert(x.size() == a.cols && y.size() == a.rows);
    for (std::size_t r = 0; r < a.rows; ++r) y[r] += dot(a.row(r), x);
}

// y += A^T x
inline void gemv_t_add(ConstMatView a, std::span<const double> x, std::span<double> y) {
    assert(x.size() == a.rows && y.size() == a.cols);
    for (std::size_t r = 0; r < a.rows; ++r) {
        const double xr = x[r];
        if (xr == 0.0) continue;
        const double* arow = a.data + r * a.cols;
        for (std::size_t c = 0; c < a.cols; ++c) y[c] += xr * arow[c];
    }
}

// A += u v^T
inline void outer_add(MatView a, std::span<const double> u, std::span<const double> v) {
    assert(u.size() == a.rows && v.size() == a.cols);
    for (std::size_t r = 0; r < a.rows; ++r) {
        const double ur = u[r];
        if (ur == 0.0) continue;
        double* arow = a.data + r * a.cols;
        for (std::size_t c = 0; c < a.cols; ++c) arow[c] += ur * v[c];
    }
}

// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    assert(x.size() == y.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

}  // namespace plab
