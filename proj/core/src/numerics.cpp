#include "mmclust/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mmclust/errors.hpp"

namespace mmclust {

template <class T>
void check_finite(const Mat<T>& m, const char* what) {
    for (const T& v : m.values()) {
        if (!std::isfinite(static_cast<double>(v))) {
            throw numeric_error(std::string("non-finite value in ") + what);
        }
    }
}

template <class T>
Mat<T> matmul(const Mat<T>& a, const Mat<T>& b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("matmul: a.cols != b.rows");
    Mat<T> c(a.rows(), b.cols());
    // ikj order keeps both a and b accesses row-contiguous
    for (size_t i = 0; i < a.rows(); ++i) {
        T* crow = c.data() + i * c.cols();
        for (size_t k = 0; k < a.cols(); ++k) {
            T aik = a(i, k);
            const T* brow = b.data() + k * b.cols();
            for (size_t j = 0; j < b.cols(); ++j) crow[j] += aik * brow[j];
        }
    }
    check_finite(c, "matmul result");
    return c;
}

template <class T>
Mat<T> matmul_nt(const Mat<T>& a, const Mat<T>& b) {
    if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: inner dims differ");
    Mat<T> c(a.rows(), b.rows());
    for (size_t i = 0; i < a.rows(); ++i) {
        const T* arow = a.data() + i * a.cols();
        for (size_t j = 0; j < b.rows(); ++j) {
            const T* brow = b.data() + j * b.cols();
            T acc{0};
            for (size_t k = 0; k < a.cols(); ++k) acc += arow[k] * brow[k];
            c(i, j) = acc;
        }
    }
    check_finite(c, "matmul_nt result");
    return c;
}

template <class T>
Mat<T> matmul_tn(const Mat<T>& a, const Mat<T>& b) {
    if (a.rows() != b.rows()) throw std::invalid_argument("matmul_tn: outer dims differ");
    Mat<T> c(a.cols(), b.cols());
    for (size_t k = 0; k < a.rows(); ++k) {
        const T* arow = a.data() + k * a.cols();
        const T* brow = b.data() + k * b.cols();
        for (size_t i = 0; i < a.cols(); ++i) {
            T aki = arow[i];
            T* crow = c.data() + i * c.cols();
            for (size_t j = 0; j < b.cols(); ++j) crow[j] += aki * brow[j];
        }
    }
    check_finite(c, "matmul_tn result");
    return c;
}

template <class T>
Mat<T> colsum(const Mat<T>& m) {
    Mat<T> s(1, m.cols());
    for (size_t i = 0; i < m.rows(); ++i) {
        for (size_t j = 0; j < m.cols(); ++j) s(0, j) += m(i, j);
    }
    return s;
}

template <class T>
void add_row_inplace(Mat<T>& m, const Mat<T>& bias) {
    if (bias.rows() != 1 || bias.cols() != m.cols()) {
        throw std::invalid_argument("add_row_inplace: bias must be 1 x cols");
    }
    for (size_t i = 0; i < m.rows(); ++i) {
        for (size_t j = 0; j < m.cols(); ++j) m(i, j) += bias(0, j);
    }
}

template <class T>
Mat<T> row_l2_normalize(const Mat<T>& m, T eps) {
    if (eps <= T{0}) throw std::invalid_argument("row_l2_normalize: eps must be positive");
    Mat<T> out(m.rows(), m.cols());
    for (size_t i = 0; i < m.rows(); ++i) {
        T sq{0};
        for (size_t j = 0; j < m.cols(); ++j) sq += m(i, j) * m(i, j);
        T norm = std::sqrt(sq);
        T denom = std::max(norm, eps);
        for (size_t j = 0; j < m.cols(); ++j) out(i, j) = m(i, j) / denom;
    }
    check_finite(out, "row_l2_normalize result");
    return out;
}

template <class T>
T log_sum_exp(std::span<const T> xs) {
    if (xs.empty()) throw std::invalid_argument("log_sum_exp: empty input");
    T m = xs[0];
    for (T x : xs) m = std::max(m, x);
    if (xs.size() == 1) return m;
    T acc{0};
    for (T x : xs) acc += std::exp(x - m);
    return m + std::log(acc);
}

std::vector<Matd> finite_diff_grad(
    const std::function<double(const std::vector<Matd>&)>& loss_fn,
    std::vector<Matd> params, double eps) {
    if (eps <= 0.0) throw std::invalid_argument("finite_diff_grad: eps must be positive");
    std::vector<Matd> grads;
    grads.reserve(params.size());
    for (size_t p = 0; p < params.size(); ++p) {
        Matd g(params[p].rows(), params[p].cols());
        for (size_t i = 0; i < params[p].size(); ++i) {
            double orig = params[p].values()[i];
            params[p].values()[i] = orig + eps;
            double up = loss_fn(params);
            params[p].values()[i] = orig - eps;
            double down = loss_fn(params);
            params[p].values()[i] = orig;
            if (!std::isfinite(up) || !std::isfinite(down)) {
                throw numeric_error("finite_diff_grad: non-finite loss evaluation");
            }
            g.values()[i] = (up - down) / (2.0 * eps);
        }
        grads.push_back(std::move(g));
    }
    return grads;
}

GradCheckReport compare_grads(const std::string& name, const Matd& analytic, const Matd& numeric) {
    if (!analytic.same_shape(numeric)) throw std::invalid_argument("compare_grads: shape mismatch");
    GradCheckReport rep;
    rep.tensor = name;
    for (size_t r = 0; r < analytic.rows(); ++r) {
        for (size_t c = 0; c < analytic.cols(); ++c) {
            double e = grad_rel_error(analytic(r, c), numeric(r, c));
            if (e > rep.max_rel_error) {
                rep.max_rel_error = e;
                rep.worst_row = r;
                rep.worst_col = c;
                rep.analytic = analytic(r, c);
                rep.numeric = numeric(r, c);
            }
        }
    }
    return rep;
}

#define MMCLUST_INSTANTIATE(T)                                     \
    template void check_finite<T>(const Mat<T>&, const char*);     \
    template Mat<T> matmul<T>(const Mat<T>&, const Mat<T>&);       \
    template Mat<T> matmul_nt<T>(const Mat<T>&, const Mat<T>&);    \
    template Mat<T> matmul_tn<T>(const Mat<T>&, const Mat<T>&);    \
    template Mat<T> colsum<T>(const Mat<T>&);                      \
    template void add_row_inplace<T>(Mat<T>&, const Mat<T>&);      \
    template Mat<T> row_l2_normalize<T>(const Mat<T>&, T);         \
    template T log_sum_exp<T>(std::span<const T>);

MMCLUST_INSTANTIATE(float)
MMCLUST_INSTANTIATE(double)
#undef MMCLUST_INSTANTIATE

} // namespace mmclust
