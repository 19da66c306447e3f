#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "mmclust/matrix.hpp"

namespace mmclust {

template <class T>
struct KmeansResult {
    Mat<T> centroids;
    std::vector<int> assignments;
    double objective = 0.0;              // mean squared distance to assigned centroid
    std::vector<double> objective_trace; // per Lloyd iteration, after assignment
};

/// Lloyd iterations over points (n x d). k-means++ init when no warm start.
/// Empty clusters are repaired by reseeding at the farthest point of the
/// highest-inertia cluster. Objective is non-increasing across iterations
/// and the whole fit is deterministic per (points, k, seed).
template <class T>
KmeansResult<T> kmeans_fit(const Mat<T>& points, int k, int max_iters, uint64_t seed,
                           const Mat<T>* warm_start = nullptr);

/// Nearest centroid per row by squared Euclidean distance; ties break to the
/// lowest centroid index.
template <class T>
std::vector<int> assign_nearest(const Mat<T>& centroids, const Mat<T>& points);

struct OnlineSchedule {
    size_t batch_size = 128;
    int warm_iters = 3;     // Lloyd iterations per step once initialized
    int reinit_every = 200; // full k-means++ re-fit cadence, in steps
    int full_fit_iters = 50;
};

/// k x d centroid matrix plus a FIFO buffer of fused features from recent
/// batches. The trainer owns the bank; the cluster loss reads centroids()
/// once initialized.
template <class T>
class CentroidBank {
public:
    CentroidBank() = default;
    CentroidBank(int k, size_t dim, size_t capacity, uint64_t seed);

    /// Appends detached feature rows, evicting the oldest beyond capacity.
    void push(const Mat<T>& m);

    /// push + fit according to the schedule: full k-means++ fit once the
    /// buffer reaches max(4k, batch), warm-started Lloyd iterations per step
    /// after that, and a periodic full re-fit.
    void online_update(const Mat<T>& m_batch, const OnlineSchedule& sched);

    bool initialized() const { return initialized_; }
    const Mat<T>& centroids() const { return centroids_; }
    int k() const { return k_; }
    size_t dim() const { return dim_; }
    size_t capacity() const { return capacity_; }
    size_t buffer_size() const { return buf_count_; }
    int steps_since_full_reinit() const { return steps_since_reinit_; }

    /// Buffer contents in FIFO order (oldest first); copies out.
    Mat<T> buffer_matrix() const;

    /// Objective of the most recent fit; NaN before initialization.
    double last_objective() const { return last_objective_; }

    /// Checkpoint restore.
    void restore(Mat<T> centroids, bool initialized, int steps_since_reinit);

private:
    int k_ = 0;
    size_t dim_ = 0;
    size_t capacity_ = 0;
    uint64_t seed_ = 0;
    uint64_t fit_counter_ = 0;
    Mat<T> centroids_;
    std::vector<T> buf_;   // ring storage, capacity * dim
    size_t buf_head_ = 0;  // next write slot
    size_t buf_count_ = 0;
    bool initialized_ = false;
    int steps_since_reinit_ = 0;
    double last_objective_ = std::numeric_limits<double>::quiet_NaN();
};

} // namespace mmclust
