#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mmclust/matrix.hpp"

namespace mmclust {

// Normalization guard; rows with l2 norm below this pass through scaled by
// 1/eps (zero rows stay zero) instead of erroring.
inline constexpr double kNormEps = 1e-12;

/// Throws numeric_error if any entry of m is NaN or Inf.
template <class T>
void check_finite(const Mat<T>& m, const char* what);

/// Standard product a(m,k) * b(k,n). Dimension mismatch throws.
template <class T>
Mat<T> matmul(const Mat<T>& a, const Mat<T>& b);

/// a(m,k) * b(n,k)^T -> (m,n). Row-against-row dot products; this is the
/// kernel behind every similarity table.
template <class T>
Mat<T> matmul_nt(const Mat<T>& a, const Mat<T>& b);

/// a(k,m)^T * b(k,n) -> (m,n). Gradient accumulation kernel.
template <class T>
Mat<T> matmul_tn(const Mat<T>& a, const Mat<T>& b);

/// Column sums as a 1 x cols matrix.
template <class T>
Mat<T> colsum(const Mat<T>& m);

/// Adds a 1 x cols bias row to every row of m in place.
template <class T>
void add_row_inplace(Mat<T>& m, const Mat<T>& bias);

/// Each row divided by max(||row||_2, eps). Zero rows pass through.
template <class T>
Mat<T> row_l2_normalize(const Mat<T>& m, T eps = static_cast<T>(kNormEps));

/// log(sum_i exp(x_i)) with max-subtraction. Exact for a single element.
/// Empty input throws.
template <class T>
T log_sum_exp(std::span<const T> xs);

/// Central differences (f(p + eps e_i) - f(p - eps e_i)) / (2 eps) for every
/// coordinate of every parameter matrix. loss_fn must be deterministic;
/// non-finite evaluations throw numeric_error.
std::vector<Matd> finite_diff_grad(
    const std::function<double(const std::vector<Matd>&)>& loss_fn,
    std::vector<Matd> params, double eps);

/// Worst analytic-vs-numeric disagreement for one parameter tensor.
struct GradCheckReport {
    std::string tensor;
    double max_rel_error = 0.0;
    size_t worst_row = 0;
    size_t worst_col = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

/// rel err with an absolute floor so that zero-gradient coordinates compare
/// clean against finite-difference noise.
inline double grad_rel_error(double analytic, double numeric) {
    double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    return std::abs(analytic - numeric) / denom;
}

/// Compares one analytic gradient tensor against its numeric counterpart.
GradCheckReport compare_grads(const std::string& name, const Matd& analytic, const Matd& numeric);

} // namespace mmclust
