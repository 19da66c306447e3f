#include "mmclust/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "mmclust/errors.hpp"
#include "mmclust/numerics.hpp"

namespace mmclust {

namespace {

template <class T>
void accumulate(Mat<T>& into, const Mat<T>& from) {
    if (into.empty()) {
        into = from;
        return;
    }
    if (!into.same_shape(from)) throw std::invalid_argument("gradient accumulation shape mismatch");
    for (size_t i = 0; i < into.size(); ++i) into.values()[i] += from.values()[i];
}

// softmax over a logit vector via max-subtraction; returns probabilities
template <class T>
void softmax_inplace(std::vector<T>& logits) {
    T m = logits[0];
    for (T v : logits) m = std::max(m, v);
    T sum{0};
    for (T& v : logits) {
        v = std::exp(v - m);
        sum += v;
    }
    for (T& v : logits) v /= sum;
}

} // namespace

template <class T>
SimLoss<T> mms_from_similarity(const Mat<T>& s, double delta) {
    if (s.rows() != s.cols()) throw std::invalid_argument("mms_from_similarity: square matrix required");
    const size_t b = s.rows();
    if (b == 0) throw std::invalid_argument("mms_from_similarity: empty batch");
    const T d = static_cast<T>(delta);
    const T inv_b = static_cast<T>(1) / static_cast<T>(b);

    SimLoss<T> out;
    out.dsim = Mat<T>(b, b);
    double loss = 0.0;
    std::vector<T> logits(b);

    for (size_t i = 0; i < b; ++i) {
        // row direction: positive vs audio-side imposters s_ij
        for (size_t j = 0; j < b; ++j) logits[j] = s(i, j);
        logits[i] = s(i, i) - d;
        T lse = log_sum_exp<T>(logits);
        loss -= static_cast<double>((s(i, i) - d) - lse);
        softmax_inplace(logits);
        for (size_t j = 0; j < b; ++j) out.dsim(i, j) += inv_b * logits[j];
        out.dsim(i, i) -= inv_b;

        // column direction: positive vs text-side imposters s_ki
        for (size_t k = 0; k < b; ++k) logits[k] = s(k, i);
        logits[i] = s(i, i) - d;
        lse = log_sum_exp<T>(logits);
        loss -= static_cast<double>((s(i, i) - d) - lse);
        softmax_inplace(logits);
        for (size_t k = 0; k < b; ++k) out.dsim(k, i) += inv_b * logits[k];
        out.dsim(i, i) -= inv_b;
    }
    out.value = loss / static_cast<double>(b);
    return out;
}

template <class T>
SimLoss<T> nce_from_similarity(const Mat<T>& s) {
    if (s.rows() != s.cols()) throw std::invalid_argument("nce_from_similarity: square matrix required");
    const size_t b = s.rows();
    if (b == 0) throw std::invalid_argument("nce_from_similarity: empty batch");
    const T inv_b = static_cast<T>(1) / static_cast<T>(b);

    SimLoss<T> out;
    out.dsim = Mat<T>(b, b);
    double loss = 0.0;
    std::vector<T> logits(b);

    for (size_t i = 0; i < b; ++i) {
        for (size_t j = 0; j < b; ++j) logits[j] = s(i, j);
        T lse = log_sum_exp<T>(logits);
        loss -= static_cast<double>(s(i, i) - lse);
        softmax_inplace(logits);
        for (size_t j = 0; j < b; ++j) out.dsim(i, j) += inv_b * logits[j];
        out.dsim(i, i) -= inv_b;

        for (size_t k = 0; k < b; ++k) logits[k] = s(k, i);
        lse = log_sum_exp<T>(logits);
        loss -= static_cast<double>(s(i, i) - lse);
        softmax_inplace(logits);
        for (size_t k = 0; k < b; ++k) out.dsim(k, i) += inv_b * logits[k];
        out.dsim(i, i) -= inv_b;
    }
    out.value = loss / static_cast<double>(b);
    return out;
}

template <class T>
SimLoss<T> milnce_from_similarity(const Mat<T>& s, const std::vector<std::vector<int>>& positives) {
    if (s.rows() != s.cols()) throw std::invalid_argument("milnce_from_similarity: square matrix required");
    const size_t b = s.rows();
    if (positives.size() != b) throw std::invalid_argument("milnce_from_similarity: positive set count mismatch");
    for (const auto& p : positives) {
        if (p.empty()) throw std::invalid_argument("milnce_from_similarity: empty positive set");
        for (int idx : p) {
            if (idx < 0 || static_cast<size_t>(idx) >= b) {
                throw std::invalid_argument("milnce_from_similarity: positive index out of range");
            }
        }
    }
    const T inv_b = static_cast<T>(1) / static_cast<T>(b);

    SimLoss<T> out;
    out.dsim = Mat<T>(b, b);
    double loss = 0.0;
    std::vector<T> logits(b);
    std::vector<T> pos_logits;

    auto direction = [&](bool row_dir) {
        for (size_t i = 0; i < b; ++i) {
            for (size_t j = 0; j < b; ++j) logits[j] = row_dir ? s(i, j) : s(j, i);
            pos_logits.clear();
            for (int p : positives[i]) pos_logits.push_back(logits[static_cast<size_t>(p)]);
            T lse_pos = log_sum_exp<T>(std::span<const T>(pos_logits));
            T lse_all = log_sum_exp<T>(std::span<const T>(logits));
            loss -= static_cast<double>(lse_pos - lse_all);

            std::vector<T> full = logits;
            softmax_inplace(full);
            softmax_inplace(pos_logits);
            for (size_t j = 0; j < b; ++j) {
                T g = inv_b * full[j];
                if (row_dir) out.dsim(i, j) += g; else out.dsim(j, i) += g;
            }
            for (size_t pi = 0; pi < positives[i].size(); ++pi) {
                size_t j = static_cast<size_t>(positives[i][pi]);
                T g = inv_b * pos_logits[pi];
                if (row_dir) out.dsim(i, j) -= g; else out.dsim(j, i) -= g;
            }
        }
    };
    direction(true);
    direction(false);
    out.value = loss / static_cast<double>(b);
    return out;
}

namespace {

template <class T, class SimFn>
PairLoss<T> pair_from_sim(const Mat<T>& x, const Mat<T>& y, SimFn&& fn) {
    if (!x.same_shape(y)) throw std::invalid_argument("pair loss: embedding shape mismatch");
    Mat<T> s = matmul_nt(x, y);
    SimLoss<T> sl = fn(s);
    PairLoss<T> out;
    out.value = sl.value;
    out.dx = matmul(sl.dsim, y);      // dL/dx_i = sum_j dS_ij y_j
    out.dy = matmul_tn(sl.dsim, x);   // dL/dy_j = sum_i dS_ij x_i
    return out;
}

} // namespace

template <class T>
PairLoss<T> mms_pair_loss(const Mat<T>& x, const Mat<T>& y, double delta) {
    return pair_from_sim(x, y, [&](const Mat<T>& s) { return mms_from_similarity(s, delta); });
}

template <class T>
PairLoss<T> nce_pair_loss(const Mat<T>& x, const Mat<T>& y) {
    return pair_from_sim(x, y, [&](const Mat<T>& s) { return nce_from_similarity(s); });
}

template <class T>
PairLoss<T> milnce_pair_loss(const Mat<T>& x, const Mat<T>& y,
                             const std::vector<std::vector<int>>& positives) {
    return pair_from_sim(x, y, [&](const Mat<T>& s) { return milnce_from_similarity(s, positives); });
}

std::vector<std::vector<int>> milnce_positive_sets(const Batch& batch, int window) {
    if (window < 1) throw std::invalid_argument("milnce_positive_sets: window must be >= 1");
    const size_t b = batch.clip_indices.size();
    std::vector<std::vector<int>> sets(b);
    for (size_t i = 0; i < b; ++i) {
        sets[i].push_back(static_cast<int>(i));
        for (size_t j = 0; j < b; ++j) {
            if (j == i) continue;
            if (batch.video_of[i] == batch.video_of[j] &&
                std::abs(batch.pos_in_video[i] - batch.pos_in_video[j]) <= window) {
                sets[i].push_back(static_cast<int>(j));
            }
        }
    }
    return sets;
}

template <class T>
CentroidLoss<T> centroid_loss_modality(const Mat<T>& e, const Mat<T>& centroids,
                                       const std::vector<int>& assign, double delta) {
    if (e.cols() != centroids.cols()) throw std::invalid_argument("centroid_loss: dim mismatch");
    if (assign.size() != e.rows()) throw std::invalid_argument("centroid_loss: assignment count mismatch");
    const size_t b = e.rows();
    const size_t k = centroids.rows();
    for (int a : assign) {
        if (a < 0 || static_cast<size_t>(a) >= k) {
            throw std::invalid_argument("centroid_loss: assignment index out of range");
        }
    }
    const T inv_b = static_cast<T>(1) / static_cast<T>(b);

    Mat<T> logits_all = matmul_nt(e, centroids); // b x k
    CentroidLoss<T> out;
    out.de = Mat<T>(e.rows(), e.cols());
    double loss = 0.0;
    std::vector<T> logits(k);
    for (size_t i = 0; i < b; ++i) {
        for (size_t c = 0; c < k; ++c) logits[c] = logits_all(i, c);
        const size_t pos = static_cast<size_t>(assign[i]);
        T positive = logits[pos] - static_cast<T>(delta);
        T lse = log_sum_exp<T>(std::span<const T>(logits)); // all centroids, no margin
        loss -= static_cast<double>(positive - lse);
        softmax_inplace(logits);
        // dE_i = (1/B) (sum_k p_k mu_k - mu')
        for (size_t c = 0; c < k; ++c) {
            T w = inv_b * logits[c];
            for (size_t j = 0; j < e.cols(); ++j) out.de(i, j) += w * centroids(c, j);
        }
        for (size_t j = 0; j < e.cols(); ++j) out.de(i, j) -= inv_b * centroids(pos, j);
    }
    out.value = loss / static_cast<double>(b);
    return out;
}

template <class T>
LossOutput<T> contrastive_total(const LossConfig& cfg, const Mat<T>& e_v, const Mat<T>& e_a,
                                const Mat<T>& e_t,
                                const std::vector<std::vector<int>>* milnce_positives) {
    auto pair = [&](const Mat<T>& x, const Mat<T>& y) -> PairLoss<T> {
        switch (cfg.variant) {
            case ContrastiveVariant::mms: return mms_pair_loss(x, y, cfg.delta);
            case ContrastiveVariant::nce: return nce_pair_loss(x, y);
            default:
                if (!milnce_positives) {
                    throw std::invalid_argument("milnce variant requires positive sets");
                }
                return milnce_pair_loss(x, y, *milnce_positives);
        }
    };

    LossOutput<T> out;
    PairLoss<T> ta = pair(e_t, e_a);
    PairLoss<T> vt = pair(e_v, e_t);
    PairLoss<T> av = pair(e_a, e_v);
    out.components["l_ta"] = ta.value;
    out.components["l_vt"] = vt.value;
    out.components["l_va"] = av.value;
    out.components["mms"] = ta.value + vt.value + av.value;
    out.total = out.components["mms"];
    accumulate(out.d_et, ta.dx);
    accumulate(out.d_ea, ta.dy);
    accumulate(out.d_ev, vt.dx);
    accumulate(out.d_et, vt.dy);
    accumulate(out.d_ea, av.dx);
    accumulate(out.d_ev, av.dy);
    return out;
}

template <class T>
LossOutput<T> cluster_loss_total(const Mat<T>& e_v, const Mat<T>& e_a, const Mat<T>& e_t,
                                 const Mat<T>& centroids, const std::vector<int>& assignments,
                                 double delta) {
    LossOutput<T> out;
    CentroidLoss<T> lv = centroid_loss_modality(e_v, centroids, assignments, delta);
    CentroidLoss<T> la = centroid_loss_modality(e_a, centroids, assignments, delta);
    CentroidLoss<T> lt = centroid_loss_modality(e_t, centroids, assignments, delta);
    out.components["l_v"] = lv.value;
    out.components["l_a"] = la.value;
    out.components["l_t"] = lt.value;
    out.components["cluster"] = lv.value + la.value + lt.value;
    out.total = out.components["cluster"];
    out.d_ev = std::move(lv.de);
    out.d_ea = std::move(la.de);
    out.d_et = std::move(lt.de);
    out.cluster_active = true;
    return out;
}

template <class T>
LossOutput<T> reconstruction_loss(const Mat<T>& r_v, const Mat<T>& r_a, const Mat<T>& r_t,
                                  const Mat<T>& e_v, const Mat<T>& e_a, const Mat<T>& e_t) {
    LossOutput<T> out;
    auto one = [&](const Mat<T>& r, const Mat<T>& e, Mat<T>& dr, Mat<T>& de) -> double {
        if (!r.same_shape(e)) throw std::invalid_argument("reconstruction_loss: shape mismatch");
        const T scale = static_cast<T>(2) / static_cast<T>(r.rows());
        dr = Mat<T>(r.rows(), r.cols());
        de = Mat<T>(e.rows(), e.cols());
        double loss = 0.0;
        for (size_t i = 0; i < r.size(); ++i) {
            double diff = static_cast<double>(r.values()[i]) - static_cast<double>(e.values()[i]);
            loss += diff * diff;
            dr.values()[i] = scale * static_cast<T>(diff);
            de.values()[i] = -scale * static_cast<T>(diff);
        }
        return loss / static_cast<double>(r.rows());
    };
    double v = one(r_v, e_v, out.d_rv, out.d_ev);
    double a = one(r_a, e_a, out.d_ra, out.d_ea);
    double t = one(r_t, e_t, out.d_rt, out.d_et);
    out.components["recon"] = v + a + t;
    out.total = out.components["recon"];
    return out;
}

template <class T>
LossOutput<T> total_loss_with_assignments(const LossConfig& cfg, const JointEmbeddings<T>& emb,
                                          const Mat<T>* centroids,
                                          const std::vector<int>* assignments,
                                          const std::vector<std::vector<int>>* milnce_positives) {
    LossOutput<T> out = contrastive_total(cfg, emb.e_v, emb.e_a, emb.e_t, milnce_positives);

    if (cfg.enable_cluster && centroids && assignments) {
        LossOutput<T> cl =
            cluster_loss_total(emb.e_v, emb.e_a, emb.e_t, *centroids, *assignments, cfg.delta);
        out.total += cl.total;
        for (const auto& [k, v] : cl.components) out.components[k] = v;
        accumulate(out.d_ev, cl.d_ev);
        accumulate(out.d_ea, cl.d_ea);
        accumulate(out.d_et, cl.d_et);
        out.cluster_active = true;
    }

    if (cfg.enable_recon) {
        LossOutput<T> rc = reconstruction_loss(emb.r_v, emb.r_a, emb.r_t, emb.e_v, emb.e_a, emb.e_t);
        out.total += rc.total;
        out.components["recon"] = rc.components["recon"];
        accumulate(out.d_ev, rc.d_ev);
        accumulate(out.d_ea, rc.d_ea);
        accumulate(out.d_et, rc.d_et);
        out.d_rv = std::move(rc.d_rv);
        out.d_ra = std::move(rc.d_ra);
        out.d_rt = std::move(rc.d_rt);
    }

    // zero placeholders so backward_triple always sees full shapes
    if (out.d_rv.empty()) {
        out.d_rv = Mat<T>(emb.r_v.rows(), emb.r_v.cols());
        out.d_ra = Mat<T>(emb.r_a.rows(), emb.r_a.cols());
        out.d_rt = Mat<T>(emb.r_t.rows(), emb.r_t.cols());
    }
    return out;
}

template <class T>
LossOutput<T> total_loss(const LossConfig& cfg, const JointEmbeddings<T>& emb,
                         const CentroidBank<T>& bank,
                         const std::vector<std::vector<int>>* milnce_positives) {
    if (cfg.enable_cluster && bank.initialized()) {
        std::vector<int> assign = assign_nearest(bank.centroids(), emb.m);
        return total_loss_with_assignments(cfg, emb, &bank.centroids(), &assign, milnce_positives);
    }
    return total_loss_with_assignments<T>(cfg, emb, nullptr, nullptr, milnce_positives);
}

#define MMCLUST_INSTANTIATE(T)                                                                     \
    template SimLoss<T> mms_from_similarity<T>(const Mat<T>&, double);                             \
    template SimLoss<T> nce_from_similarity<T>(const Mat<T>&);                                     \
    template SimLoss<T> milnce_from_similarity<T>(const Mat<T>&, const std::vector<std::vector<int>>&); \
    template PairLoss<T> mms_pair_loss<T>(const Mat<T>&, const Mat<T>&, double);                   \
    template PairLoss<T> nce_pair_loss<T>(const Mat<T>&, const Mat<T>&);                           \
    template PairLoss<T> milnce_pair_loss<T>(const Mat<T>&, const Mat<T>&, const std::vector<std::vector<int>>&); \
    template CentroidLoss<T> centroid_loss_modality<T>(const Mat<T>&, const Mat<T>&, const std::vector<int>&, double); \
    template LossOutput<T> contrastive_total<T>(const LossConfig&, const Mat<T>&, const Mat<T>&, const Mat<T>&, const std::vector<std::vector<int>>*); \
    template LossOutput<T> cluster_loss_total<T>(const Mat<T>&, const Mat<T>&, const Mat<T>&, const Mat<T>&, const std::vector<int>&, double); \
    template LossOutput<T> reconstruction_loss<T>(const Mat<T>&, const Mat<T>&, const Mat<T>&, const Mat<T>&, const Mat<T>&, const Mat<T>&); \
    template LossOutput<T> total_loss_with_assignments<T>(const LossConfig&, const JointEmbeddings<T>&, const Mat<T>*, const std::vector<int>*, const std::vector<std::vector<int>>*); \
    template LossOutput<T> total_loss<T>(const LossConfig&, const JointEmbeddings<T>&, const CentroidBank<T>&, const std::vector<std::vector<int>>*);

MMCLUST_INSTANTIATE(float)
MMCLUST_INSTANTIATE(double)
#undef MMCLUST_INSTANTIATE

} // namespace mmclust
