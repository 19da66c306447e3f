#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "mmclust/clustering.hpp"
#include "mmclust/corpus.hpp"
#include "mmclust/losses.hpp"
#include "mmclust/model.hpp"
#include "mmclust/numerics.hpp"

namespace mmclust {

/// lr = 0.5 * base_lr * (1 + cos(pi * step / total_steps))
double cosine_lr(long step, long total_steps, double base_lr);

/// Adam moment accumulators, one pair per parameter tensor in
/// for_each_tensor order.
template <class T>
struct OptimState {
    std::vector<Mat<T>> m;
    std::vector<Mat<T>> v;
    long step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static OptimState init(const ModelParams<T>& params);
};

/// Bias-corrected Adam update. A non-finite gradient aborts with a
/// diagnostic naming the offending tensor.
template <class T>
void adam_step(ModelParams<T>& params, const ModelGrads<T>& grads, OptimState<T>& state, double lr);

/// Global l2 gradient clip across all tensors; no-op when max_norm <= 0.
template <class T>
void clip_global_norm(ModelGrads<T>& grads, double max_norm);

struct TrainConfig {
    size_t epochs = 30;
    size_t batch_size = 128;
    size_t d = 64;
    size_t d_bottleneck = 0; // 0 -> d/2
    int k = 16;
    LossConfig loss;
    double base_lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double grad_clip = 10.0;
    size_t buffer_capacity = 0; // 0 -> max(8k, 2B)
    int warm_iters = 3;
    int reinit_every = 200;
    int full_fit_iters = 50;
    uint64_t seed = 0;
    size_t checkpoint_every = 0; // steps; 0 -> final checkpoint only

    void validate() const;
    size_t resolved_bottleneck() const { return d_bottleneck ? d_bottleneck : d / 2; }
    size_t resolved_buffer_capacity() const {
        return buffer_capacity ? buffer_capacity
                               : std::max(static_cast<size_t>(8 * k), 2 * batch_size);
    }
};

template <class T>
struct TrainResult {
    ModelParams<T> params;
    CentroidBank<T> bank;
    std::vector<double> epoch_mean_total; // per-epoch mean of the total loss
    size_t steps = 0;
};

/// Per step: forward_triple -> online_update(bank, detached M) ->
/// total_loss -> backward through heads and recons -> adam_step with the
/// cosine schedule. The cluster component activates only once the bank is
/// initialized. One JSON object per step goes to metrics_log when given.
/// Fully deterministic per config seed.
template <class T>
TrainResult<T> train(
    const TrainConfig& cfg, const CorpusManifest& manifest, const CorpusData<T>& data,
    std::ostream* metrics_log = nullptr,
    const std::function<void(size_t, const ModelParams<T>&, const CentroidBank<T>&)>& on_checkpoint = {});

/// Gradient-check harness configuration: a deliberately small model,
/// double precision, every loss component on by default.
struct GradCheckConfig {
    size_t b = 3;
    size_t d = 5;
    size_t d_bottleneck = 2;
    std::array<size_t, 3> raw_dims{7, 6, 5};
    int k = 2;
    LossConfig loss;
    uint64_t seed = 0;
    double fd_eps = 1e-5;
};

/// Compares analytic total-loss gradients against central finite
/// differences for every parameter tensor. The cluster assignment is held
/// fixed across perturbations (it is piecewise constant in the parameters).
std::vector<GradCheckReport> grad_check(const GradCheckConfig& cfg);

} // namespace mmclust
