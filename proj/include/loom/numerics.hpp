#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace loom {

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::initializer_list<std::initializer_list<double>> init) {
        rows_ = init.size();
        cols_ = rows_ ? init.begin()->size() : 0;
        data_.reserve(rows_ * cols_);
        for (const auto& row : init) {
            if (row.size() != cols_) throw ShapeError("ragged initializer");
            data_.insert(data_.end(), row.begin(), row.end());
        }
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double* row(std::size_t r) { return data_.data() + r * cols_; }
    const double* row(std::size_t r) const { return data_.data() + r * cols_; }
    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }
    bool is_zero() const {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return v == 0.0; });
    }

    Matrix transposed() const {
        Matrix t(cols_, rows_);
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
        return t;
    }

    friend bool operator==(const Matrix& a, const Matrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Error-free accumulation: the running sum is kept as non-overlapping partials
// and rounded once at the end, so the result is the correctly rounded value of
// the exact sum.
class ExactSum {
public:
    ExactSum() = default;
    explicit ExactSum(double x) { add(x); }

    void add(double x) {
        if (x == 0.0) return;
        int i = 0;
        for (int j = 0; j < n_; ++j) {
            double y = p_[j];
            if (std::fabs(x) < std::fabs(y)) std::swap(x, y);
            double hi = x + y;
            double lo = y - (hi - x);
            if (lo != 0.0) p_[i++] = lo;
            x = hi;
        }
        p_[i++] = x;
        n_ = i;
    }

    void add_product(double a, double b) {
        double p = a * b;
        if (p == 0.0) return;
        double e = std::fma(a, b, -p);
        add(p);
        add(e);
    }

    double value() const {
        int n = n_;
        if (n == 0) return 0.0;
        double hi = p_[--n];
        double lo = 0.0;
        while (n > 0) {
            double x = hi;
            double y = p_[--n];
            hi = x + y;
            double yr = hi - x;
            lo = y - yr;
            if (lo != 0.0) break;
        }
        if (n > 0 && ((lo < 0.0 && p_[n - 1] < 0.0) || (lo > 0.0 && p_[n - 1] > 0.0))) {
            double y = lo * 2.0;
            double x = hi + y;
            double yr = x - hi;
            if (y == yr) hi = x;
        }
        return hi;
    }

private:
    double p_[80];
    int n_ = 0;
};

inline double exact_dot(const double* a, const double* b, std::size_t n) {
    ExactSum s;
    for (std::size_t i = 0; i < n; ++i) s.add_product(a[i], b[i]);
    return s.value();
}

inline Matrix relu(const Matrix& m) {
    Matrix out = m;
    for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
    return out;
}

inline Matrix add(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("add: shape mismatch");
    Matrix out = a;
    for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] += b.data()[i];
    return out;
}

// Each entry is the correctly rounded inner product.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimension mismatch");
    Matrix out(a.rows(), b.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        for (std::size_t c = 0; c < b.cols(); ++c) {
            ExactSum s;
            for (std::size_t k = 0; k < a.cols(); ++k) s.add_product(a(r, k), b(k, c));
            out(r, c) = s.value();
        }
    }
    return out;
}

// Tie set of a row: indices equal to the row maximum (exact comparison).
inline void argmax_set(const double* row, std::size_t n, std::vector<std::size_t>& out) {
    out.clear();
    double best = row[0];
    for (std::size_t k = 1; k < n; ++k) best = std::max(best, row[k]);
    for (std::size_t k = 0; k < n; ++k)
        if (row[k] == best) out.push_back(k);
}

inline Matrix hardmax_rows(const Matrix& m) {
    if (m.cols() == 0) throw ShapeError("hardmax_rows: empty row");
    Matrix out(m.rows(), m.cols());
    std::vector<std::size_t> ties;
    for (std::size_t r = 0; r < m.rows(); ++r) {
        argmax_set(m.row(r), m.cols(), ties);
        double w = 1.0 / static_cast<double>(ties.size());
        for (std::size_t k : ties) out(r, k) = w;
    }
    return out;
}

inline void softmax_row(const double* row, std::size_t n, double* out) {
    double mx = row[0];
    for (std::size_t k = 1; k < n; ++k) mx = std::max(mx, row[k]);
    ExactSum total;
    for (std::size_t k = 0; k < n; ++k) {
        out[k] = std::exp(row[k] - mx);
        total.add(out[k]);
    }
    double z = total.value();
    for (std::size_t k = 0; k < n; ++k) out[k] /= z;
}

inline Matrix softmax_rows(const Matrix& m) {
    if (m.cols() == 0) throw ShapeError("softmax_rows: empty row");
    Matrix out(m.rows(), m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r) softmax_row(m.row(r), m.cols(), out.row(r));
    return out;
}

}  // namespace loom
