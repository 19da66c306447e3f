#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>

#include "mmclust/corpus.hpp"
#include "mmclust/matrix.hpp"

namespace mmclust {

enum class Modality { video = 0, audio = 1, text = 2 };
inline constexpr std::array<Modality, 3> kModalities{Modality::video, Modality::audio, Modality::text};
inline const char* modality_tag(Modality m) {
    switch (m) {
        case Modality::video: return "v";
        case Modality::audio: return "a";
        default: return "t";
    }
}

/// Projection head: fully-connected layer followed by a gated unit.
///   Z1 = X W1 + b1;  E = l2norm(Z1 * sigmoid(Z1 W2 + b2))
/// Biases are stored as 1 x d matrices.
template <class T>
struct HeadParams {
    Mat<T> w1; // D_raw x d
    Mat<T> b1; // 1 x d
    Mat<T> w2; // d x d
    Mat<T> b2; // 1 x d
};

/// Two linear layers reconstructing the d-dim embedding from the raw
/// feature: R = (X W_enc + b_enc) W_dec + b_dec.
template <class T>
struct ReconParams {
    Mat<T> w_enc; // D_raw x d_bottleneck
    Mat<T> b_enc; // 1 x d_bottleneck
    Mat<T> w_dec; // d_bottleneck x d
    Mat<T> b_dec; // 1 x d
};

template <class T>
struct ModelParams {
    std::array<HeadParams<T>, 3> heads;
    std::array<ReconParams<T>, 3> recons;
    size_t d = 0;
    size_t d_bottleneck = 0;
    std::array<size_t, 3> raw_dims{};
    uint64_t seed = 0;

    HeadParams<T>& head(Modality m) { return heads[static_cast<size_t>(m)]; }
    const HeadParams<T>& head(Modality m) const { return heads[static_cast<size_t>(m)]; }
    ReconParams<T>& recon(Modality m) { return recons[static_cast<size_t>(m)]; }
    const ReconParams<T>& recon(Modality m) const { return recons[static_cast<size_t>(m)]; }
};

/// Xavier-uniform weights, zero biases, deterministic per seed.
template <class T>
ModelParams<T> init_params(const std::array<size_t, 3>& raw_dims, size_t d, size_t d_bottleneck,
                           uint64_t seed);

template <class T>
struct HeadCache {
    Mat<T> x;    // input
    Mat<T> z1;   // pre-gate activations
    Mat<T> gate; // sigmoid(Z1 W2 + b2)
    Mat<T> z2;   // gated, pre-normalization
    Mat<T> e;    // normalized output
};

template <class T>
struct ReconCache {
    Mat<T> x;
    Mat<T> hidden;
};

template <class T>
struct HeadGrads {
    Mat<T> w1, b1, w2, b2;
};

template <class T>
struct ReconGrads {
    Mat<T> w_enc, b_enc, w_dec, b_dec;
};

/// Forward through the head; E has unit-norm rows.
template <class T>
Mat<T> head_forward(const HeadParams<T>& p, const Mat<T>& x, HeadCache<T>& cache);

/// Exact gradients of the forward composition (normalization Jacobian
/// included). Returns dX through the out-parameter when non-null.
template <class T>
HeadGrads<T> head_backward(const HeadParams<T>& p, const HeadCache<T>& cache, const Mat<T>& de,
                           Mat<T>* dx = nullptr);

template <class T>
Mat<T> recon_forward(const ReconParams<T>& p, const Mat<T>& x, ReconCache<T>& cache);

template <class T>
ReconGrads<T> recon_backward(const ReconParams<T>& p, const ReconCache<T>& cache, const Mat<T>& dr,
                             Mat<T>* dx = nullptr);

/// Per-batch outputs of all three heads plus the fused mean and the
/// reconstruction branches.
template <class T>
struct JointEmbeddings {
    Mat<T> e_v, e_a, e_t;
    Mat<T> m; // (E_v + E_a + E_t) / 3, row-wise
    Mat<T> r_v, r_a, r_t;
    std::array<HeadCache<T>, 3> head_caches;
    std::array<ReconCache<T>, 3> recon_caches;

    const Mat<T>& embedding(Modality mo) const {
        switch (mo) {
            case Modality::video: return e_v;
            case Modality::audio: return e_a;
            default: return e_t;
        }
    }
};

template <class T>
JointEmbeddings<T> forward_triple(const ModelParams<T>& params, const BatchData<T>& batch);

template <class T>
struct ModelGrads {
    std::array<HeadGrads<T>, 3> heads;
    std::array<ReconGrads<T>, 3> recons;
};

/// Backpropagates loss gradients w.r.t. the six outputs (E_v,E_a,E_t and
/// R_v,R_a,R_t) into parameter gradients. The fused mean M carries no
/// gradient path; it only feeds cluster assignment.
template <class T>
ModelGrads<T> backward_triple(const ModelParams<T>& params, const JointEmbeddings<T>& fwd,
                              const Mat<T>& d_ev, const Mat<T>& d_ea, const Mat<T>& d_et,
                              const Mat<T>& d_rv, const Mat<T>& d_ra, const Mat<T>& d_rt);

/// Head forward without keeping the cache.
template <class T>
Mat<T> project_rows(const HeadParams<T>& p, const Mat<T>& x);

/// Per-clip embeddings for a whole corpus, rows in manifest clip order.
/// Feature rows are gathered per clip (so a misaligned clip picks up its
/// corrupted text row).
template <class T>
struct CorpusEmbeddings {
    Mat<T> e_v, e_a, e_t, m;
};

template <class T>
CorpusEmbeddings<T> embed_clips(const ModelParams<T>& params, const CorpusManifest& manifest,
                                const CorpusData<T>& data);

/// Visits every trainable tensor in a fixed order shared by gradients and
/// optimizer state: per modality w1,b1,w2,b2 then per modality
/// enc_w,enc_b,dec_w,dec_b.
template <class T>
void for_each_tensor(ModelParams<T>& p, const std::function<void(const std::string&, Mat<T>&)>& fn);
template <class T>
void for_each_tensor(const ModelParams<T>& p,
                     const std::function<void(const std::string&, const Mat<T>&)>& fn);
template <class T>
void for_each_tensor(ModelGrads<T>& g, const std::function<void(const std::string&, Mat<T>&)>& fn);
template <class T>
void for_each_tensor(const ModelGrads<T>& g,
                     const std::function<void(const std::string&, const Mat<T>&)>& fn);

} // namespace mmclust
