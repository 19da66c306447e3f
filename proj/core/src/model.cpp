#include "mmclust/model.hpp"

#include <cmath>
#include <stdexcept>

#include "mmclust/numerics.hpp"
#include "mmclust/rng.hpp"

namespace mmclust {

namespace {

template <class T>
Mat<T> xavier_uniform(size_t rows, size_t cols, Rng& rng) {
    Mat<T> w(rows, cols);
    double s = std::sqrt(6.0 / static_cast<double>(rows + cols));
    for (T& v : w.values()) v = static_cast<T>(rng.uniform(-s, s));
    return w;
}

template <class T>
Mat<T> sigmoid(const Mat<T>& m) {
    Mat<T> out(m.rows(), m.cols());
    for (size_t i = 0; i < m.size(); ++i) {
        out.values()[i] = static_cast<T>(1) / (static_cast<T>(1) + std::exp(-m.values()[i]));
    }
    return out;
}

} // namespace

template <class T>
ModelParams<T> init_params(const std::array<size_t, 3>& raw_dims, size_t d, size_t d_bottleneck,
                           uint64_t seed) {
    if (d == 0 || d_bottleneck == 0 || raw_dims[0] == 0 || raw_dims[1] == 0 || raw_dims[2] == 0) {
        throw std::invalid_argument("init_params: dims must be positive");
    }
    ModelParams<T> p;
    p.d = d;
    p.d_bottleneck = d_bottleneck;
    p.raw_dims = raw_dims;
    p.seed = seed;
    Rng rng(mix_seed(seed, 21));
    for (size_t m = 0; m < 3; ++m) {
        p.heads[m].w1 = xavier_uniform<T>(raw_dims[m], d, rng);
        p.heads[m].b1 = Mat<T>(1, d);
        p.heads[m].w2 = xavier_uniform<T>(d, d, rng);
        p.heads[m].b2 = Mat<T>(1, d);
    }
    for (size_t m = 0; m < 3; ++m) {
        p.recons[m].w_enc = xavier_uniform<T>(raw_dims[m], d_bottleneck, rng);
        p.recons[m].b_enc = Mat<T>(1, d_bottleneck);
        // decoder scaled down so the reconstruction starts near zero and the
        // regularizer ramps in instead of dominating the first steps
        p.recons[m].w_dec = xavier_uniform<T>(d_bottleneck, d, rng);
        for (T& v : p.recons[m].w_dec.values()) v *= static_cast<T>(0.1);
        p.recons[m].b_dec = Mat<T>(1, d);
    }
    return p;
}

template <class T>
Mat<T> head_forward(const HeadParams<T>& p, const Mat<T>& x, HeadCache<T>& cache) {
    if (x.cols() != p.w1.rows()) throw std::invalid_argument("head_forward: input dim mismatch");
    cache.x = x;
    cache.z1 = matmul(x, p.w1);
    add_row_inplace(cache.z1, p.b1);
    Mat<T> pre_gate = matmul(cache.z1, p.w2);
    add_row_inplace(pre_gate, p.b2);
    cache.gate = sigmoid(pre_gate);
    cache.z2 = Mat<T>(cache.z1.rows(), cache.z1.cols());
    for (size_t i = 0; i < cache.z2.size(); ++i) {
        cache.z2.values()[i] = cache.z1.values()[i] * cache.gate.values()[i];
    }
    cache.e = row_l2_normalize(cache.z2);
    return cache.e;
}

template <class T>
HeadGrads<T> head_backward(const HeadParams<T>& p, const HeadCache<T>& cache, const Mat<T>& de,
                           Mat<T>* dx) {
    if (!de.same_shape(cache.e)) throw std::invalid_argument("head_backward: dE shape mismatch");

    // through the row normalization: dZ2 = (dE - E (E . dE)) / max(||Z2||, eps)
    const T eps = static_cast<T>(kNormEps);
    Mat<T> dz2(de.rows(), de.cols());
    for (size_t i = 0; i < de.rows(); ++i) {
        T sq{0};
        for (size_t j = 0; j < de.cols(); ++j) sq += cache.z2(i, j) * cache.z2(i, j);
        T norm = std::sqrt(sq);
        if (norm > eps) {
            T dot{0};
            for (size_t j = 0; j < de.cols(); ++j) dot += cache.e(i, j) * de(i, j);
            for (size_t j = 0; j < de.cols(); ++j) {
                dz2(i, j) = (de(i, j) - cache.e(i, j) * dot) / norm;
            }
        } else {
            for (size_t j = 0; j < de.cols(); ++j) dz2(i, j) = de(i, j) / eps;
        }
    }

    // through the gate: Z2 = Z1 * G, G = sigmoid(Z1 W2 + b2)
    Mat<T> dz1(dz2.rows(), dz2.cols());
    Mat<T> dpre(dz2.rows(), dz2.cols());
    for (size_t i = 0; i < dz2.size(); ++i) {
        T g = cache.gate.values()[i];
        dz1.values()[i] = dz2.values()[i] * g;
        dpre.values()[i] = dz2.values()[i] * cache.z1.values()[i] * g * (static_cast<T>(1) - g);
    }

    HeadGrads<T> grads;
    grads.w2 = matmul_tn(cache.z1, dpre);
    grads.b2 = colsum(dpre);
    Mat<T> dz1_from_gate = matmul_nt(dpre, p.w2); // dpre * W2^T
    for (size_t i = 0; i < dz1.size(); ++i) dz1.values()[i] += dz1_from_gate.values()[i];

    grads.w1 = matmul_tn(cache.x, dz1);
    grads.b1 = colsum(dz1);
    if (dx) *dx = matmul_nt(dz1, p.w1);
    return grads;
}

template <class T>
Mat<T> recon_forward(const ReconParams<T>& p, const Mat<T>& x, ReconCache<T>& cache) {
    if (x.cols() != p.w_enc.rows()) throw std::invalid_argument("recon_forward: input dim mismatch");
    cache.x = x;
    cache.hidden = matmul(x, p.w_enc);
    add_row_inplace(cache.hidden, p.b_enc);
    Mat<T> r = matmul(cache.hidden, p.w_dec);
    add_row_inplace(r, p.b_dec);
    return r;
}

template <class T>
ReconGrads<T> recon_backward(const ReconParams<T>& p, const ReconCache<T>& cache, const Mat<T>& dr,
                             Mat<T>* dx) {
    if (dr.rows() != cache.hidden.rows() || dr.cols() != p.w_dec.cols()) {
        throw std::invalid_argument("recon_backward: dR shape mismatch");
    }
    ReconGrads<T> grads;
    grads.w_dec = matmul_tn(cache.hidden, dr);
    grads.b_dec = colsum(dr);
    Mat<T> dh = matmul_nt(dr, p.w_dec);
    grads.w_enc = matmul_tn(cache.x, dh);
    grads.b_enc = colsum(dh);
    if (dx) *dx = matmul_nt(dh, p.w_enc);
    return grads;
}

template <class T>
JointEmbeddings<T> forward_triple(const ModelParams<T>& params, const BatchData<T>& batch) {
    JointEmbeddings<T> out;
    out.e_v = head_forward(params.head(Modality::video), batch.video, out.head_caches[0]);
    out.e_a = head_forward(params.head(Modality::audio), batch.audio, out.head_caches[1]);
    out.e_t = head_forward(params.head(Modality::text), batch.text, out.head_caches[2]);
    out.m = Mat<T>(out.e_v.rows(), out.e_v.cols());
    const T third = static_cast<T>(1) / static_cast<T>(3);
    for (size_t i = 0; i < out.m.size(); ++i) {
        out.m.values()[i] =
            (out.e_v.values()[i] + out.e_a.values()[i] + out.e_t.values()[i]) * third;
    }
    out.r_v = recon_forward(params.recon(Modality::video), batch.video, out.recon_caches[0]);
    out.r_a = recon_forward(params.recon(Modality::audio), batch.audio, out.recon_caches[1]);
    out.r_t = recon_forward(params.recon(Modality::text), batch.text, out.recon_caches[2]);
    return out;
}

template <class T>
ModelGrads<T> backward_triple(const ModelParams<T>& params, const JointEmbeddings<T>& fwd,
                              const Mat<T>& d_ev, const Mat<T>& d_ea, const Mat<T>& d_et,
                              const Mat<T>& d_rv, const Mat<T>& d_ra, const Mat<T>& d_rt) {
    ModelGrads<T> g;
    g.heads[0] = head_backward(params.head(Modality::video), fwd.head_caches[0], d_ev);
    g.heads[1] = head_backward(params.head(Modality::audio), fwd.head_caches[1], d_ea);
    g.heads[2] = head_backward(params.head(Modality::text), fwd.head_caches[2], d_et);
    g.recons[0] = recon_backward(params.recon(Modality::video), fwd.recon_caches[0], d_rv);
    g.recons[1] = recon_backward(params.recon(Modality::audio), fwd.recon_caches[1], d_ra);
    g.recons[2] = recon_backward(params.recon(Modality::text), fwd.recon_caches[2], d_rt);
    return g;
}

template <class T>
Mat<T> project_rows(const HeadParams<T>& p, const Mat<T>& x) {
    HeadCache<T> cache;
    return head_forward(p, x, cache);
}

template <class T>
CorpusEmbeddings<T> embed_clips(const ModelParams<T>& params, const CorpusManifest& manifest,
                                const CorpusData<T>& data) {
    const size_t n = manifest.clips.size();
    BatchData<T> all{Mat<T>(n, data.video.cols()), Mat<T>(n, data.audio.cols()),
                     Mat<T>(n, data.text.cols())};
    for (size_t i = 0; i < n; ++i) {
        const ClipRecord& c = manifest.clips[i];
        std::copy_n(data.video.row(c.v_row).data(), data.video.cols(), all.video.row(i).data());
        std::copy_n(data.audio.row(c.a_row).data(), data.audio.cols(), all.audio.row(i).data());
        std::copy_n(data.text.row(c.t_row).data(), data.text.cols(), all.text.row(i).data());
    }
    CorpusEmbeddings<T> out;
    out.e_v = project_rows(params.head(Modality::video), all.video);
    out.e_a = project_rows(params.head(Modality::audio), all.audio);
    out.e_t = project_rows(params.head(Modality::text), all.text);
    out.m = Mat<T>(n, params.d);
    const T third = static_cast<T>(1) / static_cast<T>(3);
    for (size_t i = 0; i < out.m.size(); ++i) {
        out.m.values()[i] = (out.e_v.values()[i] + out.e_a.values()[i] + out.e_t.values()[i]) * third;
    }
    return out;
}

namespace {

template <class P, class Fn>
void visit_tensors(P&& p, Fn&& fn) {
    static const char* mods[3] = {"v", "a", "t"};
    for (size_t m = 0; m < 3; ++m) {
        std::string base = std::string("head.") + mods[m] + ".";
        fn(base + "w1", p.heads[m].w1);
        fn(base + "b1", p.heads[m].b1);
        fn(base + "w2", p.heads[m].w2);
        fn(base + "b2", p.heads[m].b2);
    }
    for (size_t m = 0; m < 3; ++m) {
        std::string base = std::string("recon.") + mods[m] + ".";
        fn(base + "enc_w", p.recons[m].w_enc);
        fn(base + "enc_b", p.recons[m].b_enc);
        fn(base + "dec_w", p.recons[m].w_dec);
        fn(base + "dec_b", p.recons[m].b_dec);
    }
}

} // namespace

template <class T>
void for_each_tensor(ModelParams<T>& p, const std::function<void(const std::string&, Mat<T>&)>& fn) {
    visit_tensors(p, fn);
}
template <class T>
void for_each_tensor(const ModelParams<T>& p,
                     const std::function<void(const std::string&, const Mat<T>&)>& fn) {
    visit_tensors(p, fn);
}
template <class T>
void for_each_tensor(ModelGrads<T>& g, const std::function<void(const std::string&, Mat<T>&)>& fn) {
    visit_tensors(g, fn);
}
template <class T>
void for_each_tensor(const ModelGrads<T>& g,
                     const std::function<void(const std::string&, const Mat<T>&)>& fn) {
    visit_tensors(g, fn);
}

#define MMCLUST_INSTANTIATE(T)                                                                    \
    template ModelParams<T> init_params<T>(const std::array<size_t, 3>&, size_t, size_t, uint64_t); \
    template Mat<T> head_forward<T>(const HeadParams<T>&, const Mat<T>&, HeadCache<T>&);          \
    template HeadGrads<T> head_backward<T>(const HeadParams<T>&, const HeadCache<T>&, const Mat<T>&, Mat<T>*); \
    template Mat<T> recon_forward<T>(const ReconParams<T>&, const Mat<T>&, ReconCache<T>&);       \
    template ReconGrads<T> recon_backward<T>(const ReconParams<T>&, const ReconCache<T>&, const Mat<T>&, Mat<T>*); \
    template JointEmbeddings<T> forward_triple<T>(const ModelParams<T>&, const BatchData<T>&);    \
    template Mat<T> project_rows<T>(const HeadParams<T>&, const Mat<T>&);                         \
    template CorpusEmbeddings<T> embed_clips<T>(const ModelParams<T>&, const CorpusManifest&,     \
                                                const CorpusData<T>&);                            \
    template ModelGrads<T> backward_triple<T>(const ModelParams<T>&, const JointEmbeddings<T>&,   \
                                              const Mat<T>&, const Mat<T>&, const Mat<T>&,        \
                                              const Mat<T>&, const Mat<T>&, const Mat<T>&);       \
    template void for_each_tensor<T>(ModelParams<T>&, const std::function<void(const std::string&, Mat<T>&)>&); \
    template void for_each_tensor<T>(const ModelParams<T>&, const std::function<void(const std::string&, const Mat<T>&)>&); \
    template void for_each_tensor<T>(ModelGrads<T>&, const std::function<void(const std::string&, Mat<T>&)>&); \
    template void for_each_tensor<T>(const ModelGrads<T>&, const std::function<void(const std::string&, const Mat<T>&)>&);

MMCLUST_INSTANTIATE(float)
MMCLUST_INSTANTIATE(double)
#undef MMCLUST_INSTANTIATE

} // namespace mmclust
