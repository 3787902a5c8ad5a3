// SPDX-License-Identifier: Apache-2.0
//
// Dense kernels over Matrix<T>. All are pure: inputs are never modified.

#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>

#include "adds/numerics/matrix.hpp"

namespace adds::num {

namespace detail {
inline void require(bool ok, const std::string& op, const std::string& a, const std::string& b) {
    if (!ok) throw ShapeError(op + ": incompatible shapes " + a + " and " + b);
}
}  // namespace detail

/// A[m x k] * B[k x n].
template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
    detail::require(a.cols() == b.rows(), "matmul", a.shape(), b.shape());
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Matrix<T> out(m, n);
    for (std::size_t i = 0; i < m; ++i) {
        T* o = &out(i, 0);
        for (std::size_t p = 0; p < k; ++p) {
            const T av = a(i, p);
            const T* br = &b(p, 0);
            for (std::size_t j = 0; j < n; ++j) o[j] += av * br[j];
        }
    }
    return out;
}

/// A^T * B for A[k x m], B[k x n].
template <typename T>
Matrix<T> matmul_tn(const Matrix<T>& a, const Matrix<T>& b) {
    detail::require(a.rows() == b.rows(), "matmul_tn", a.shape(), b.shape());
    const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
    Matrix<T> out(m, n);
    for (std::size_t p = 0; p < k; ++p) {
        const T* ar = &a(p, 0);
        const T* br = &b(p, 0);
        for (std::size_t i = 0; i < m; ++i) {
            const T av = ar[i];
            T* o = &out(i, 0);
            for (std::size_t j = 0; j < n; ++j) o[j] += av * br[j];
        }
    }
    return out;
}

/// A * B^T for A[m x k], B[n x k].
template <typename T>
Matrix<T> matmul_nt(const Matrix<T>& a, const Matrix<T>& b) {
    detail::require(a.cols() == b.cols(), "matmul_nt", a.shape(), b.shape());
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    Matrix<T> out(m, n);
    for (std::size_t i = 0; i < m; ++i) {
        const T* ar = &a(i, 0);
        for (std::size_t j = 0; j < n; ++j) {
            const T* br = &b(j, 0);
            T s = 0;
            for (std::size_t p = 0; p < k; ++p) s += ar[p] * br[p];
            out(i, j) = s;
        }
    }
    return out;
}

template <typename T>
Matrix<T> transpose(const Matrix<T>& a) {
    Matrix<T> out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    return out;
}

template <typename T>
Matrix<T> add(const Matrix<T>& a, const Matrix<T>& b) {
    detail::require(a.same_shape(b), "add", a.shape(), b.shape());
    Matrix<T> out = a;
    auto o = out.data();
    auto bv = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
    return out;
}

template <typename T>
void add_into(Matrix<T>& acc, const Matrix<T>& b) {
    detail::require(acc.same_shape(b), "add_into", acc.shape(), b.shape());
    auto o = acc.data();
    auto bv = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
}

template <typename T>
Matrix<T> scale(const Matrix<T>& a, T s) {
    Matrix<T> out = a;
    for (auto& v : out.data()) v *= s;
    return out;
}

/// X[m x n] + 1 * bias[1 x n].
template <typename T>
Matrix<T> add_row_bias(const Matrix<T>& x, const Matrix<T>& bias) {
    detail::require(bias.rows() == 1 && bias.cols() == x.cols(), "add_row_bias", x.shape(), bias.shape());
    Matrix<T> out = x;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        T* o = &out(i, 0);
        for (std::size_t j = 0; j < out.cols(); ++j) o[j] += bias(0, j);
    }
    return out;
}

/// Column sums as a 1 x n row, the gradient of a broadcast row bias.
template <typename T>
Matrix<T> column_sums(const Matrix<T>& x) {
    Matrix<T> out(1, x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) out(0, j) += x(i, j);
    return out;
}

/// Row-wise softmax, stabilised by subtracting each row's max.
template <typename T>
Matrix<T> softmax_rows(const Matrix<T>& x) {
    Matrix<T> out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto in = x.row(i);
        auto o = out.row(i);
        T mx = -std::numeric_limits<T>::infinity();
        for (T v : in) mx = v > mx ? v : mx;
        T sum = 0;
        for (std::size_t j = 0; j < in.size(); ++j) {
            o[j] = std::exp(in[j] - mx);
            sum += o[j];
        }
        for (auto& v : o) v /= sum;
    }
    return out;
}

/// Backward of softmax_rows given its output Y and upstream dY.
template <typename T>
Matrix<T> softmax_rows_backward(const Matrix<T>& y, const Matrix<T>& dy) {
    detail::require(y.same_shape(dy), "softmax_rows_backward", y.shape(), dy.shape());
    Matrix<T> dx(y.rows(), y.cols());
    for (std::size_t i = 0; i < y.rows(); ++i) {
        T dot = 0;
        for (std::size_t j = 0; j < y.cols(); ++j) dot += y(i, j) * dy(i, j);
        for (std::size_t j = 0; j < y.cols(); ++j) dx(i, j) = y(i, j) * (dy(i, j) - dot);
    }
    return dx;
}

template <typename T>
Matrix<T> relu(const Matrix<T>& x) {
    Matrix<T> out = x;
    for (auto& v : out.data()) v = v > T(0) ? v : T(0);
    return out;
}

/// dX = dY where the pre-activation was positive.
template <typename T>
Matrix<T> relu_backward(const Matrix<T>& pre, const Matrix<T>& dy) {
    Matrix<T> dx = dy;
    auto p = pre.data();
    auto d = dx.data();
    for (std::size_t i = 0; i < d.size(); ++i)
        if (!(p[i] > T(0))) d[i] = T(0);
    return dx;
}

template <typename T>
T sigmoid(T z) {
    if (z >= T(0)) return T(1) / (T(1) + std::exp(-z));
    const T e = std::exp(z);
    return e / (T(1) + e);
}

/// Copy rows [begin, begin + count) into a new matrix.
template <typename T>
Matrix<T> slice_rows(const Matrix<T>& x, std::size_t begin, std::size_t count) {
    if (begin + count > x.rows()) throw ShapeError("slice_rows out of range for " + x.shape());
    Matrix<T> out(count, x.cols());
    std::copy_n(x.data().begin() + begin * x.cols(), count * x.cols(), out.data().begin());
    return out;
}

/// Columns [begin, begin + count).
template <typename T>
Matrix<T> slice_cols(const Matrix<T>& x, std::size_t begin, std::size_t count) {
    if (begin + count > x.cols()) throw ShapeError("slice_cols out of range for " + x.shape());
    Matrix<T> out(x.rows(), count);
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < count; ++j) out(i, j) = x(i, begin + j);
    return out;
}

template <typename T>
void set_cols(Matrix<T>& dst, std::size_t begin, const Matrix<T>& src) {
    if (src.rows() != dst.rows() || begin + src.cols() > dst.cols())
        throw ShapeError("set_cols: " + src.shape() + " into " + dst.shape());
    for (std::size_t i = 0; i < src.rows(); ++i)
        for (std::size_t j = 0; j < src.cols(); ++j) dst(i, begin + j) = src(i, j);
}

template <typename T>
bool all_finite(const Matrix<T>& x) {
    for (T v : x.data())
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace adds::num
