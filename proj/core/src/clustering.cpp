#include "mmclust/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "mmclust/errors.hpp"
#include "mmclust/rng.hpp"

namespace mmclust {

namespace {

template <class T>
double dist2(const Mat<T>& a, size_t ra, const Mat<T>& b, size_t rb) {
    double acc = 0.0;
    const T* pa = a.data() + ra * a.cols();
    const T* pb = b.data() + rb * b.cols();
    for (size_t j = 0; j < a.cols(); ++j) {
        double diff = static_cast<double>(pa[j]) - static_cast<double>(pb[j]);
        acc += diff * diff;
    }
    return acc;
}

template <class T>
Mat<T> kmeanspp_init(const Mat<T>& points, int k, Rng& rng) {
    const size_t n = points.rows();
    Mat<T> c(static_cast<size_t>(k), points.cols());
    size_t first = rng.index(n);
    std::copy_n(points.row(first).data(), points.cols(), c.row(0).data());

    std::vector<double> d2(n);
    for (size_t i = 0; i < n; ++i) d2[i] = dist2(points, i, c, 0);

    for (int j = 1; j < k; ++j) {
        double total = 0.0;
        for (double v : d2) total += v;
        size_t pick;
        if (total <= 0.0) {
            pick = rng.index(n); // all remaining points coincide with a centroid
        } else {
            double r = rng.uniform() * total;
            double cum = 0.0;
            pick = n - 1;
            for (size_t i = 0; i < n; ++i) {
                cum += d2[i];
                if (cum > r) {
                    pick = i;
                    break;
                }
            }
        }
        std::copy_n(points.row(pick).data(), points.cols(), c.row(static_cast<size_t>(j)).data());
        for (size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], dist2(points, i, c, static_cast<size_t>(j)));
    }
    return c;
}

} // namespace

template <class T>
std::vector<int> assign_nearest(const Mat<T>& centroids, const Mat<T>& points) {
    if (centroids.cols() != points.cols()) {
        throw std::invalid_argument("assign_nearest: dimension mismatch");
    }
    if (centroids.rows() == 0) throw std::invalid_argument("assign_nearest: no centroids");
    std::vector<int> assign(points.rows());
    for (size_t i = 0; i < points.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        int best_k = 0;
        for (size_t c = 0; c < centroids.rows(); ++c) {
            double d = dist2(points, i, centroids, c);
            if (d < best) { // strict: ties keep the lowest index
                best = d;
                best_k = static_cast<int>(c);
            }
        }
        assign[i] = best_k;
    }
    return assign;
}

template <class T>
KmeansResult<T> kmeans_fit(const Mat<T>& points, int k, int max_iters, uint64_t seed,
                           const Mat<T>* warm_start) {
    const size_t n = points.rows();
    if (k < 1) throw std::invalid_argument("kmeans_fit: k must be >= 1");
    if (n < static_cast<size_t>(k)) throw std::invalid_argument("kmeans_fit: n < k");
    if (warm_start && (warm_start->rows() != static_cast<size_t>(k) || warm_start->cols() != points.cols())) {
        throw std::invalid_argument("kmeans_fit: warm start shape mismatch");
    }

    Rng rng(seed);
    KmeansResult<T> res;
    res.centroids = warm_start ? *warm_start : kmeanspp_init(points, k, rng);

    std::vector<int> prev_assign;
    double prev_obj = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < std::max(max_iters, 1); ++iter) {
        res.assignments = assign_nearest(res.centroids, points);
        double obj = 0.0;
        for (size_t i = 0; i < n; ++i) {
            obj += dist2(points, i, res.centroids, static_cast<size_t>(res.assignments[i]));
        }
        obj /= static_cast<double>(n);
        if (obj > prev_obj + 1e-9 * (1.0 + prev_obj)) {
            throw numeric_error("kmeans_fit: objective increased across iterations");
        }
        res.objective_trace.push_back(obj);
        res.objective = obj;
        if (res.assignments == prev_assign || obj == 0.0) break;
        prev_assign = res.assignments;
        prev_obj = obj;

        // means update
        std::vector<size_t> counts(static_cast<size_t>(k), 0);
        Matd sums(static_cast<size_t>(k), points.cols());
        for (size_t i = 0; i < n; ++i) {
            size_t c = static_cast<size_t>(res.assignments[i]);
            counts[c]++;
            for (size_t j = 0; j < points.cols(); ++j) sums(c, j) += points(i, j);
        }
        for (size_t c = 0; c < static_cast<size_t>(k); ++c) {
            if (counts[c] == 0) continue;
            for (size_t j = 0; j < points.cols(); ++j) {
                res.centroids(c, j) = static_cast<T>(sums(c, j) / static_cast<double>(counts[c]));
            }
        }

        // empty-cluster repair: reseed at the farthest point of the
        // highest-inertia cluster, then take that point over
        for (size_t e = 0; e < static_cast<size_t>(k); ++e) {
            if (counts[e] > 0) continue;
            std::vector<double> inertia(static_cast<size_t>(k), 0.0);
            for (size_t i = 0; i < n; ++i) {
                size_t c = static_cast<size_t>(res.assignments[i]);
                inertia[c] += dist2(points, i, res.centroids, c);
            }
            size_t donor = 0;
            for (size_t c = 1; c < static_cast<size_t>(k); ++c) {
                if (inertia[c] > inertia[donor]) donor = c;
            }
            size_t far_pt = 0;
            double far_d = -1.0;
            for (size_t i = 0; i < n; ++i) {
                if (static_cast<size_t>(res.assignments[i]) != donor) continue;
                double d = dist2(points, i, res.centroids, donor);
                if (d > far_d) {
                    far_d = d;
                    far_pt = i;
                }
            }
            std::copy_n(points.row(far_pt).data(), points.cols(), res.centroids.row(e).data());
            res.assignments[far_pt] = static_cast<int>(e);
            counts[e] = 1;
            counts[donor]--;
        }
    }
    return res;
}

template <class T>
CentroidBank<T>::CentroidBank(int k, size_t dim, size_t capacity, uint64_t seed)
    : k_(k), dim_(dim), capacity_(capacity), seed_(seed) {
    if (k < 1 || dim == 0) throw std::invalid_argument("CentroidBank: k and dim must be positive");
    if (capacity < static_cast<size_t>(k)) {
        throw std::invalid_argument("CentroidBank: capacity must hold at least k rows");
    }
    buf_.resize(capacity * dim);
}

template <class T>
void CentroidBank<T>::push(const Mat<T>& m) {
    if (m.rows() == 0) return;
    if (m.cols() != dim_) throw std::invalid_argument("CentroidBank::push: dimension mismatch");
    for (size_t i = 0; i < m.rows(); ++i) {
        std::copy_n(m.row(i).data(), dim_, buf_.data() + buf_head_ * dim_);
        buf_head_ = (buf_head_ + 1) % capacity_;
        if (buf_count_ < capacity_) buf_count_++;
    }
}

template <class T>
Mat<T> CentroidBank<T>::buffer_matrix() const {
    Mat<T> out(buf_count_, dim_);
    // oldest first
    size_t start = (buf_head_ + capacity_ - buf_count_) % capacity_;
    for (size_t i = 0; i < buf_count_; ++i) {
        size_t slot = (start + i) % capacity_;
        std::copy_n(buf_.data() + slot * dim_, dim_, out.row(i).data());
    }
    return out;
}

template <class T>
void CentroidBank<T>::online_update(const Mat<T>& m_batch, const OnlineSchedule& sched) {
    push(m_batch);
    const size_t threshold = std::max(static_cast<size_t>(4 * k_), sched.batch_size);
    if (!initialized_) {
        if (buf_count_ < threshold) return;
        auto fit = kmeans_fit(buffer_matrix(), k_, sched.full_fit_iters,
                              mix_seed(seed_, fit_counter_++));
        centroids_ = std::move(fit.centroids);
        last_objective_ = fit.objective;
        initialized_ = true;
        steps_since_reinit_ = 0;
        return;
    }
    steps_since_reinit_++;
    if (sched.reinit_every > 0 && steps_since_reinit_ >= sched.reinit_every) {
        auto fit = kmeans_fit(buffer_matrix(), k_, sched.full_fit_iters,
                              mix_seed(seed_, fit_counter_++));
        centroids_ = std::move(fit.centroids);
        last_objective_ = fit.objective;
        steps_since_reinit_ = 0;
    } else {
        auto fit = kmeans_fit(buffer_matrix(), k_, sched.warm_iters,
                              mix_seed(seed_, fit_counter_++), &centroids_);
        centroids_ = std::move(fit.centroids);
        last_objective_ = fit.objective;
    }
}

template <class T>
void CentroidBank<T>::restore(Mat<T> centroids, bool initialized, int steps_since_reinit) {
    if (initialized &&
        (centroids.rows() != static_cast<size_t>(k_) || centroids.cols() != dim_)) {
        throw std::invalid_argument("CentroidBank::restore: centroid shape mismatch");
    }
    centroids_ = std::move(centroids);
    initialized_ = initialized;
    steps_since_reinit_ = steps_since_reinit;
}

#define MMCLUST_INSTANTIATE(T)                                                              \
    template std::vector<int> assign_nearest<T>(const Mat<T>&, const Mat<T>&);              \
    template KmeansResult<T> kmeans_fit<T>(const Mat<T>&, int, int, uint64_t, const Mat<T>*); \
    template class CentroidBank<T>;

MMCLUST_INSTANTIATE(float)
MMCLUST_INSTANTIATE(double)
#undef MMCLUST_INSTANTIATE

} // namespace mmclust
