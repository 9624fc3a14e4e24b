#pragma once

#include <cstddef>
#include <vector>

#include "somnia/error.hpp"

namespace somnia {

// Minimal row-major dense matrix of doubles. Just enough for the network:
// storage, matvec with transpose, rank-1 accumulate. No expression templates,
// no views; the model code owns every loop.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0.0) {}

    double* row(int r) { return v.data() + static_cast<std::size_t>(r) * cols; }
    const double* row(int r) const { return v.data() + static_cast<std::size_t>(r) * cols; }

    double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }

    std::size_t size() const { return v.size(); }
    void zero() { std::fill(v.begin(), v.end(), 0.0); }

    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

// out += M * x   (out has length M.rows, x has length M.cols)
inline void matvec_add(const Mat& m, const double* x, double* out) {
    for (int r = 0; r < m.rows; ++r) {
        const double* mr = m.row(r);
        double acc = 0.0;
        for (int c = 0; c < m.cols; ++c) acc += mr[c] * x[c];
        out[r] += acc;
    }
}

// out += M^T * y  (out has length M.cols, y has length M.rows)
inline void matvec_t_add(const Mat& m, const double* y, double* out) {
    for (int r = 0; r < m.rows; ++r) {
        const double* mr = m.row(r);
        const double yr = y[r];
        if (yr == 0.0) continue;
        for (int c = 0; c < m.cols; ++c) out[c] += yr * mr[c];
    }
}

// M += a * x^T   (rank-1 update; a has length M.rows, x length M.cols)
inline void outer_add(Mat& m, const double* a, const double* x) {
    for (int r = 0; r < m.rows; ++r) {
        double* mr = m.row(r);
        const double ar = a[r];
        if (ar == 0.0) continue;
        for (int c = 0; c < m.cols; ++c) mr[c] += ar * x[c];
    }
}

inline void add_inplace(Mat& dst, const Mat& src) {
    require(dst.same_shape(src), "ShapeMismatch", "matrix accumulate shape");
    for (std::size_t i = 0; i < dst.v.size(); ++i) dst.v[i] += src.v[i];
}

}  // namespace somnia
