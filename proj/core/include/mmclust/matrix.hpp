#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <vector>

namespace mmclust {

/// Dense row-major 2-D array. The universal carrier for features,
/// embeddings, gradients and similarity tables. T is float or double;
/// training defaults to float, gradient checks run in double.
template <class T>
class Mat {
public:
    Mat() = default;

    Mat(size_t rows, size_t cols, T fill = T{0})
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Mat from(std::initializer_list<std::initializer_list<T>> rows) {
        Mat m(rows.size(), rows.size() ? rows.begin()->size() : 0);
        size_t r = 0;
        for (const auto& row : rows) {
            if (row.size() != m.cols_) throw std::invalid_argument("Mat::from: ragged rows");
            size_t c = 0;
            for (T v : row) m(r, c++) = v;
            ++r;
        }
        return m;
    }

    static Mat identity(size_t n) {
        Mat m(n, n);
        for (size_t i = 0; i < n; ++i) m(i, i) = T{1};
        return m;
    }

    size_t rows() const { return rows_; }
    size_t cols() const { return cols_; }
    size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T& operator()(size_t r, size_t c) { return data_[r * cols_ + c]; }
    const T& operator()(size_t r, size_t c) const { return data_[r * cols_ + c]; }

    std::span<T> row(size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const T> row(size_t r) const { return {data_.data() + r * cols_, cols_}; }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    std::vector<T>& values() { return data_; }
    const std::vector<T>& values() const { return data_; }

    bool same_shape(const Mat& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    template <class U>
    Mat<U> cast() const {
        Mat<U> out(rows_, cols_);
        for (size_t i = 0; i < data_.size(); ++i) out.data()[i] = static_cast<U>(data_[i]);
        return out;
    }

    bool operator==(const Mat& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
    }

private:
    size_t rows_ = 0;
    size_t cols_ = 0;
    std::vector<T> data_;
};

using Matf = Mat<float>;
using Matd = Mat<double>;

} // namespace mmclust
