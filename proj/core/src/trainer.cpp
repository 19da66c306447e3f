#include "mmclust/trainer.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

#include "mmclust/errors.hpp"
#include "mmclust/rng.hpp"

namespace mmclust {

double cosine_lr(long step, long total_steps, double base_lr) {
    if (total_steps < 1) throw std::invalid_argument("cosine_lr: total_steps must be >= 1");
    if (step < 0 || step > total_steps) throw std::invalid_argument("cosine_lr: step out of range");
    return 0.5 * base_lr *
           (1.0 + std::cos(3.14159265358979323846 * static_cast<double>(step) /
                           static_cast<double>(total_steps)));
}

template <class T>
OptimState<T> OptimState<T>::init(const ModelParams<T>& params) {
    OptimState<T> s;
    for_each_tensor(params, std::function<void(const std::string&, const Mat<T>&)>(
                                [&](const std::string&, const Mat<T>& t) {
                                    s.m.emplace_back(t.rows(), t.cols());
                                    s.v.emplace_back(t.rows(), t.cols());
                                }));
    return s;
}

template <class T>
void adam_step(ModelParams<T>& params, const ModelGrads<T>& grads, OptimState<T>& state, double lr) {
    // gather tensors in the shared fixed order
    std::vector<Mat<T>*> ps;
    std::vector<const Mat<T>*> gs;
    std::vector<std::string> names;
    for_each_tensor(params, std::function<void(const std::string&, Mat<T>&)>(
                                [&](const std::string&, Mat<T>& t) { ps.push_back(&t); }));
    for_each_tensor(grads, std::function<void(const std::string&, const Mat<T>&)>(
                               [&](const std::string& n, const Mat<T>& t) {
                                   gs.push_back(&t);
                                   names.push_back(n);
                               }));
    if (ps.size() != gs.size() || ps.size() != state.m.size()) {
        throw std::invalid_argument("adam_step: tensor count mismatch");
    }

    state.step++;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));

    for (size_t t = 0; t < ps.size(); ++t) {
        if (!ps[t]->same_shape(*gs[t])) throw std::invalid_argument("adam_step: shape mismatch");
        for (size_t i = 0; i < ps[t]->size(); ++i) {
            double g = static_cast<double>(gs[t]->values()[i]);
            if (!std::isfinite(g)) {
                throw numeric_error("adam_step: non-finite gradient in tensor " + names[t]);
            }
            double m = state.beta1 * static_cast<double>(state.m[t].values()[i]) +
                       (1.0 - state.beta1) * g;
            double v = state.beta2 * static_cast<double>(state.v[t].values()[i]) +
                       (1.0 - state.beta2) * g * g;
            state.m[t].values()[i] = static_cast<T>(m);
            state.v[t].values()[i] = static_cast<T>(v);
            double update = lr * (m / bc1) / (std::sqrt(v / bc2) + state.eps);
            ps[t]->values()[i] = static_cast<T>(static_cast<double>(ps[t]->values()[i]) - update);
        }
    }
}

template <class T>
void clip_global_norm(ModelGrads<T>& grads, double max_norm) {
    if (max_norm <= 0.0) return;
    double sq = 0.0;
    for_each_tensor(grads, std::function<void(const std::string&, const Mat<T>&)>(
                               [&](const std::string&, const Mat<T>& t) {
                                   for (const T& v : t.values()) {
                                       sq += static_cast<double>(v) * static_cast<double>(v);
                                   }
                               }));
    double norm = std::sqrt(sq);
    if (norm <= max_norm) return;
    const T scale = static_cast<T>(max_norm / norm);
    for_each_tensor(grads, std::function<void(const std::string&, Mat<T>&)>(
                               [&](const std::string&, Mat<T>& t) {
                                   for (T& v : t.values()) v *= scale;
                               }));
}

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (batch_size < 2) throw std::invalid_argument("TrainConfig: batch_size must be >= 2");
    if (d < 1 || k < 1) throw std::invalid_argument("TrainConfig: d and k must be positive");
    if (loss.delta < 0) throw std::invalid_argument("TrainConfig: delta must be >= 0");
}

template <class T>
TrainResult<T> train(
    const TrainConfig& cfg, const CorpusManifest& manifest, const CorpusData<T>& data,
    std::ostream* metrics_log,
    const std::function<void(size_t, const ModelParams<T>&, const CentroidBank<T>&)>& on_checkpoint) {
    cfg.validate();

    TrainResult<T> result;
    result.params = init_params<T>({data.video.cols(), data.audio.cols(), data.text.cols()},
                                   cfg.d, cfg.resolved_bottleneck(), cfg.seed);
    result.bank = CentroidBank<T>(cfg.k, cfg.d, cfg.resolved_buffer_capacity(),
                                  mix_seed(cfg.seed, 11));
    OptimState<T> opt = OptimState<T>::init(result.params);
    opt.beta1 = cfg.beta1;
    opt.beta2 = cfg.beta2;
    opt.eps = cfg.adam_eps;

    OnlineSchedule sched;
    sched.batch_size = cfg.batch_size;
    sched.warm_iters = cfg.warm_iters;
    sched.reinit_every = cfg.reinit_every;
    sched.full_fit_iters = cfg.full_fit_iters;

    const size_t batches_per_epoch =
        make_batches(manifest, cfg.batch_size, mix_seed(cfg.seed, 1000)).size();
    const long total_steps = static_cast<long>(cfg.epochs * batches_per_epoch);

    size_t step = 0;
    for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto batches = make_batches(manifest, cfg.batch_size, mix_seed(cfg.seed, 1000 + epoch));
        double epoch_sum = 0.0;
        for (const Batch& batch : batches) {
            BatchData<T> bd = gather_batch(manifest, data, batch);
            JointEmbeddings<T> fwd = forward_triple(result.params, bd);

            result.bank.online_update(fwd.m, sched); // M is detached: values only

            std::vector<std::vector<int>> positives;
            const std::vector<std::vector<int>>* pos_ptr = nullptr;
            if (cfg.loss.variant == ContrastiveVariant::milnce) {
                positives = milnce_positive_sets(batch, cfg.loss.milnce_window);
                pos_ptr = &positives;
            }
            LossOutput<T> lo = total_loss(cfg.loss, fwd, result.bank, pos_ptr);
            if (!std::isfinite(lo.total)) {
                throw numeric_error("train: non-finite loss at step " + std::to_string(step));
            }

            ModelGrads<T> grads = backward_triple(result.params, fwd, lo.d_ev, lo.d_ea, lo.d_et,
                                                  lo.d_rv, lo.d_ra, lo.d_rt);
            clip_global_norm(grads, cfg.grad_clip);
            double lr = cosine_lr(static_cast<long>(step), total_steps, cfg.base_lr);
            adam_step(result.params, grads, opt, lr);

            if (metrics_log) {
                nlohmann::json j{{"step", step},
                                 {"lr", lr},
                                 {"total", lo.total},
                                 {"mms", lo.components.count("mms") ? lo.components.at("mms") : 0.0},
                                 {"cluster", lo.components.count("cluster") ? lo.components.at("cluster") : 0.0},
                                 {"recon", lo.components.count("recon") ? lo.components.at("recon") : 0.0},
                                 {"bank_initialized", result.bank.initialized()}};
                (*metrics_log) << j.dump() << "\n";
            }
            epoch_sum += lo.total;
            ++step;
            if (on_checkpoint && cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) {
                on_checkpoint(step, result.params, result.bank);
            }
        }
        result.epoch_mean_total.push_back(epoch_sum / static_cast<double>(batches.size()));
    }
    result.steps = step;
    if (on_checkpoint) on_checkpoint(step, result.params, result.bank);
    return result;
}

std::vector<GradCheckReport> grad_check(const GradCheckConfig& cfg) {
    Rng rng(mix_seed(cfg.seed, 31));

    // small random batch, double precision
    BatchData<double> bd{Matd(cfg.b, cfg.raw_dims[0]), Matd(cfg.b, cfg.raw_dims[1]),
                         Matd(cfg.b, cfg.raw_dims[2])};
    for (double& v : bd.video.values()) v = rng.normal();
    for (double& v : bd.audio.values()) v = rng.normal();
    for (double& v : bd.text.values()) v = rng.normal();

    ModelParams<double> params = init_params<double>(cfg.raw_dims, cfg.d, cfg.d_bottleneck, cfg.seed);

    // fixed centroids in embedding space
    Matd centroids(static_cast<size_t>(cfg.k), cfg.d);
    for (double& v : centroids.values()) v = rng.normal();
    centroids = row_l2_normalize(centroids);

    // synthetic temporal metadata for MIL-NCE positive sets
    Batch fake;
    for (size_t i = 0; i < cfg.b; ++i) {
        fake.clip_indices.push_back(i);
        fake.video_of.push_back(static_cast<int>(i / 2));
        fake.pos_in_video.push_back(static_cast<int>(i % 2));
    }
    std::vector<std::vector<int>> positives = milnce_positive_sets(fake, cfg.loss.milnce_window);
    const std::vector<std::vector<int>>* pos_ptr =
        cfg.loss.variant == ContrastiveVariant::milnce ? &positives : nullptr;

    // assignment from the base point, held fixed across perturbations
    JointEmbeddings<double> base_fwd = forward_triple(params, bd);
    std::vector<int> assignments = assign_nearest(centroids, base_fwd.m);
    const Matd* cptr = cfg.loss.enable_cluster ? &centroids : nullptr;
    const std::vector<int>* aptr = cfg.loss.enable_cluster ? &assignments : nullptr;

    // analytic gradients
    LossOutput<double> lo = total_loss_with_assignments(cfg.loss, base_fwd, cptr, aptr, pos_ptr);
    ModelGrads<double> analytic =
        backward_triple(params, base_fwd, lo.d_ev, lo.d_ea, lo.d_et, lo.d_rv, lo.d_ra, lo.d_rt);

    // flatten tensors in the shared order
    std::vector<Matd*> tensor_ptrs;
    std::vector<std::string> names;
    for_each_tensor(params, std::function<void(const std::string&, Matd&)>(
                                [&](const std::string& n, Matd& t) {
                                    tensor_ptrs.push_back(&t);
                                    names.push_back(n);
                                }));
    std::vector<Matd> flat;
    for (Matd* p : tensor_ptrs) flat.push_back(*p);

    auto loss_fn = [&](const std::vector<Matd>& vals) {
        for (size_t i = 0; i < tensor_ptrs.size(); ++i) *tensor_ptrs[i] = vals[i];
        JointEmbeddings<double> fwd = forward_triple(params, bd);
        LossOutput<double> l = total_loss_with_assignments(cfg.loss, fwd, cptr, aptr, pos_ptr);
        return l.total;
    };
    std::vector<Matd> numeric = finite_diff_grad(loss_fn, flat, cfg.fd_eps);
    for (size_t i = 0; i < tensor_ptrs.size(); ++i) *tensor_ptrs[i] = flat[i]; // restore

    std::vector<const Matd*> analytic_ptrs;
    for_each_tensor(analytic, std::function<void(const std::string&, const Matd&)>(
                                  [&](const std::string&, const Matd& t) {
                                      analytic_ptrs.push_back(&t);
                                  }));

    std::vector<GradCheckReport> reports;
    for (size_t i = 0; i < names.size(); ++i) {
        reports.push_back(compare_grads(names[i], *analytic_ptrs[i], numeric[i]));
    }
    return reports;
}

#define MMCLUST_INSTANTIATE(T)                                                            \
    template struct OptimState<T>;                                                       \
    template void adam_step<T>(ModelParams<T>&, const ModelGrads<T>&, OptimState<T>&, double); \
    template void clip_global_norm<T>(ModelGrads<T>&, double);                            \
    template TrainResult<T> train<T>(                                                     \
        const TrainConfig&, const CorpusManifest&, const CorpusData<T>&, std::ostream*,   \
        const std::function<void(size_t, const ModelParams<T>&, const CentroidBank<T>&)>&);

MMCLUST_INSTANTIATE(float)
MMCLUST_INSTANTIATE(double)
#undef MMCLUST_INSTANTIATE

} // namespace mmclust
