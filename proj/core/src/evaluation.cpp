#include "mmclust/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "mmclust/clustering.hpp"
#include "mmclust/errors.hpp"
#include "mmclust/numerics.hpp"

namespace mmclust {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

SimilarityTable crossmodal_similarity(const Matd& text, const Matd& video, const Matd& audio,
                                      SimilarityMode mode, std::vector<std::string> query_ids,
                                      std::vector<std::string> candidate_ids) {
    SimilarityTable table;
    switch (mode) {
        case SimilarityMode::video_only:
            table.s = matmul_nt(text, video);
            break;
        case SimilarityMode::audio_only:
            table.s = matmul_nt(text, audio);
            break;
        default: {
            if (video.rows() != audio.rows()) {
                throw std::invalid_argument("crossmodal_similarity: candidates not aligned");
            }
            Matd sv = matmul_nt(text, video);
            Matd sa = matmul_nt(text, audio);
            table.s = Matd(sv.rows(), sv.cols());
            for (size_t i = 0; i < sv.size(); ++i) {
                table.s.values()[i] = 0.5 * (sv.values()[i] + sa.values()[i]);
            }
        }
    }
    table.query_ids = std::move(query_ids);
    table.candidate_ids = std::move(candidate_ids);
    return table;
}

std::vector<size_t> retrieval_ranks(const Matd& s, const std::vector<size_t>& gt) {
    if (gt.size() != s.rows()) throw std::invalid_argument("retrieval_ranks: one gt per query required");
    std::vector<size_t> ranks(s.rows());
    for (size_t q = 0; q < s.rows(); ++q) {
        if (gt[q] >= s.cols()) throw std::invalid_argument("retrieval_ranks: gt index out of range");
        const double target = s(q, gt[q]);
        size_t rank = 1;
        for (size_t j = 0; j < s.cols(); ++j) {
            if (j == gt[q]) continue;
            if (s(q, j) > target || (s(q, j) == target && j < gt[q])) ++rank;
        }
        ranks[q] = rank;
    }
    return ranks;
}

RetrievalMetrics retrieval_metrics(const Matd& s, const std::vector<size_t>& gt) {
    std::vector<size_t> ranks = retrieval_ranks(s, gt);
    RetrievalMetrics m;
    const double n = static_cast<double>(ranks.size());
    for (size_t r : ranks) {
        if (r <= 1) m.r1 += 1.0;
        if (r <= 5) m.r5 += 1.0;
        if (r <= 10) m.r10 += 1.0;
    }
    m.r1 /= n;
    m.r5 /= n;
    m.r10 /= n;
    std::sort(ranks.begin(), ranks.end());
    m.median_rank = static_cast<double>(ranks[(ranks.size() - 1) / 2]); // lower median
    return m;
}

namespace {

// per-caption max similarity over each video's clips; videos without clips
// stay at -inf
std::vector<std::vector<double>> per_caption_video_max(const Matd& s_clip,
                                                       const std::vector<int>& clip_video,
                                                       int n_videos) {
    std::vector<std::vector<double>> vmax(s_clip.rows(), std::vector<double>(n_videos, kNegInf));
    for (size_t q = 0; q < s_clip.rows(); ++q) {
        for (size_t c = 0; c < s_clip.cols(); ++c) {
            double v = s_clip(q, c);
            int vid = clip_video[c];
            if (v > vmax[q][vid]) vmax[q][vid] = v;
        }
    }
    return vmax;
}

} // namespace

std::vector<std::vector<int>> full_video_rankings(const Matd& s_clip,
                                                  const std::vector<int>& clip_video, int n_videos,
                                                  const std::vector<std::vector<int>>& query_sets,
                                                  FullVideoMethod method, int k_vote) {
    if (clip_video.size() != s_clip.cols()) {
        throw std::invalid_argument("full_video_rankings: clip_video size mismatch");
    }
    for (int v : clip_video) {
        if (v < 0 || v >= n_videos) throw std::invalid_argument("full_video_rankings: bad video index");
    }
    if (k_vote < 1) throw std::invalid_argument("full_video_rankings: k_vote must be >= 1");

    const auto vmax = per_caption_video_max(s_clip, clip_video, n_videos);

    std::vector<std::vector<int>> rankings;
    rankings.reserve(query_sets.size());
    for (const std::vector<int>& captions : query_sets) {
        if (captions.empty()) throw std::invalid_argument("full_video_rankings: caption set empty");
        for (int q : captions) {
            if (q < 0 || static_cast<size_t>(q) >= s_clip.rows()) {
                throw std::invalid_argument("full_video_rankings: caption index out of range");
            }
        }

        std::vector<double> capavg(n_videos, 0.0);
        for (int v = 0; v < n_videos; ++v) {
            double sum = 0.0;
            for (int q : captions) sum += vmax[static_cast<size_t>(q)][v];
            capavg[v] = sum / static_cast<double>(captions.size());
        }

        std::vector<long> votes(n_videos, 0);
        if (method == FullVideoMethod::mv_clip) {
            std::vector<size_t> idx(s_clip.cols());
            for (int q : captions) {
                std::iota(idx.begin(), idx.end(), size_t{0});
                const size_t take = std::min<size_t>(static_cast<size_t>(k_vote), idx.size());
                std::partial_sort(idx.begin(), idx.begin() + take, idx.end(),
                                  [&](size_t a, size_t b) {
                                      double sa = s_clip(q, a), sb = s_clip(q, b);
                                      if (sa != sb) return sa > sb;
                                      return a < b;
                                  });
                for (size_t t = 0; t < take; ++t) votes[clip_video[idx[t]]]++;
            }
        } else if (method == FullVideoMethod::mv_video) {
            std::vector<int> vidx(n_videos);
            for (int q : captions) {
                std::iota(vidx.begin(), vidx.end(), 0);
                const size_t take = std::min<size_t>(static_cast<size_t>(k_vote), vidx.size());
                std::partial_sort(vidx.begin(), vidx.begin() + take, vidx.end(),
                                  [&](int a, int b) {
                                      double sa = vmax[static_cast<size_t>(q)][a];
                                      double sb = vmax[static_cast<size_t>(q)][b];
                                      if (sa != sb) return sa > sb;
                                      return a < b;
                                  });
                for (size_t t = 0; t < take; ++t) votes[vidx[t]]++;
            }
        }

        std::vector<int> ranking(n_videos);
        std::iota(ranking.begin(), ranking.end(), 0);
        if (method == FullVideoMethod::caption_avg) {
            std::sort(ranking.begin(), ranking.end(), [&](int a, int b) {
                if (capavg[a] != capavg[b]) return capavg[a] > capavg[b];
                return a < b;
            });
        } else {
            std::sort(ranking.begin(), ranking.end(), [&](int a, int b) {
                if (votes[a] != votes[b]) return votes[a] > votes[b];
                if (capavg[a] != capavg[b]) return capavg[a] > capavg[b];
                return a < b;
            });
        }
        rankings.push_back(std::move(ranking));
    }
    return rankings;
}

ClassifyResult fullvideo_classify(const Matd& s_label, const std::vector<std::vector<int>>& label_sets,
                                  const std::vector<int>& clip_video, int n_videos,
                                  const std::vector<int>& gt_video_class) {
    if (label_sets.empty()) throw std::invalid_argument("fullvideo_classify: no label sets");
    for (const auto& set : label_sets) {
        if (set.empty()) throw std::invalid_argument("fullvideo_classify: empty label set");
    }
    if (gt_video_class.size() != static_cast<size_t>(n_videos)) {
        throw std::invalid_argument("fullvideo_classify: gt size mismatch");
    }
    const auto vmax = per_caption_video_max(s_label, clip_video, n_videos);

    ClassifyResult res;
    res.predicted.resize(n_videos, 0);
    size_t correct = 0;
    for (int v = 0; v < n_videos; ++v) {
        double best = kNegInf;
        int best_c = 0;
        for (size_t c = 0; c < label_sets.size(); ++c) {
            double sum = 0.0;
            for (int q : label_sets[c]) sum += vmax[static_cast<size_t>(q)][v];
            double score = sum / static_cast<double>(label_sets[c].size());
            if (score > best) {
                best = score;
                best_c = static_cast<int>(c);
            }
        }
        res.predicted[v] = best_c;
        if (best_c == gt_video_class[v]) ++correct;
    }
    res.accuracy = static_cast<double>(correct) / static_cast<double>(n_videos);
    return res;
}

double localize_recall_video(const Matd& frame_scores,
                             const std::vector<std::pair<size_t, size_t>>& intervals,
                             LocalizeNorm norm) {
    if (intervals.size() != frame_scores.cols()) {
        throw std::invalid_argument("localize_recall: one interval per step required");
    }
    for (const auto& [start, end] : intervals) {
        if (start >= end) throw std::invalid_argument("localize_recall: empty gt interval");
    }
    const size_t frames = frame_scores.rows();
    if (norm == LocalizeNorm::per_step) {
        size_t correct = 0;
        for (size_t s = 0; s < frame_scores.cols(); ++s) {
            size_t best_t = 0;
            double best = kNegInf;
            for (size_t t = 0; t < frames; ++t) {
                if (frame_scores(t, s) > best) { // strict: earliest frame wins ties
                    best = frame_scores(t, s);
                    best_t = t;
                }
            }
            if (best_t >= intervals[s].first && best_t < intervals[s].second) ++correct;
        }
        return static_cast<double>(correct) / static_cast<double>(intervals.size());
    }
    // per-clip variant: each frame classified by its argmax step
    size_t correct = 0;
    for (size_t t = 0; t < frames; ++t) {
        size_t best_s = 0;
        double best = kNegInf;
        for (size_t s = 0; s < frame_scores.cols(); ++s) {
            if (frame_scores(t, s) > best) {
                best = frame_scores(t, s);
                best_s = s;
            }
        }
        if (t >= intervals[best_s].first && t < intervals[best_s].second) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(frames);
}

AlignmentResult align_transcript(const Matd& frame_scores, const std::vector<int>& transcript,
                                 double bg_gamma, bool znorm) {
    const size_t frames = frame_scores.rows();
    const size_t n = transcript.size();
    if (n == 0) throw std::invalid_argument("align_transcript: empty transcript");
    for (int l : transcript) {
        if (l < 0 || static_cast<size_t>(l) >= frame_scores.cols()) {
            throw std::invalid_argument("align_transcript: transcript label out of range");
        }
    }
    if (frames < n) throw std::invalid_argument("align_transcript: fewer frames than actions");

    Matd z = frame_scores;
    if (znorm) {
        for (size_t t = 0; t < frames; ++t) {
            double mean = 0.0;
            for (size_t c = 0; c < z.cols(); ++c) mean += z(t, c);
            mean /= static_cast<double>(z.cols());
            double var = 0.0;
            for (size_t c = 0; c < z.cols(); ++c) {
                double d = z(t, c) - mean;
                var += d * d;
            }
            double sd = std::sqrt(var / static_cast<double>(z.cols()));
            for (size_t c = 0; c < z.cols(); ++c) {
                z(t, c) = sd > 1e-12 ? (z(t, c) - mean) / sd : 0.0;
            }
        }
    }

    const size_t slots = 2 * n + 1; // BG, a1, BG, a2, ..., BG
    auto slot_score = [&](size_t t, size_t s) -> double {
        return (s % 2 == 1) ? z(t, transcript[(s - 1) / 2]) : bg_gamma;
    };

    Matd dp(frames, slots, kNegInf);
    std::vector<std::vector<int>> pred(frames, std::vector<int>(slots, -1));
    dp(0, 0) = slot_score(0, 0);
    dp(0, 1) = slot_score(0, 1);

    for (size_t t = 1; t < frames; ++t) {
        for (size_t s = 0; s < slots; ++s) {
            // candidate predecessors; larger slot considered first so that
            // strict comparison prefers earlier segment advancement on ties
            double best = kNegInf;
            int best_p = -1;
            auto consider = [&](size_t p) {
                if (dp(t - 1, p) > best) {
                    best = dp(t - 1, p);
                    best_p = static_cast<int>(p);
                }
            };
            consider(s);                          // stay
            if (s >= 1) consider(s - 1);          // advance from previous slot
            if (s % 2 == 1 && s >= 2) consider(s - 2); // skip an empty BG slot
            if (best_p < 0) continue;
            dp(t, s) = slot_score(t, s) + best;
            pred[t][s] = best_p;
        }
    }

    size_t end_slot = slots - 1; // final BG preferred on ties
    if (dp(frames - 1, slots - 2) > dp(frames - 1, slots - 1)) end_slot = slots - 2;
    if (dp(frames - 1, end_slot) == kNegInf) {
        throw std::invalid_argument("align_transcript: no feasible segmentation");
    }

    AlignmentResult res;
    res.score = dp(frames - 1, end_slot);
    res.frame_slots.assign(frames, 0);
    res.frame_slots[frames - 1] = static_cast<int>(end_slot);
    for (size_t t = frames - 1; t > 0; --t) {
        res.frame_slots[t - 1] = pred[t][static_cast<size_t>(res.frame_slots[t])];
    }
    res.frame_labels.assign(frames, -1);
    for (size_t t = 0; t < frames; ++t) {
        int s = res.frame_slots[t];
        if (s % 2 == 1) res.frame_labels[t] = transcript[static_cast<size_t>((s - 1) / 2)];
    }
    return res;
}

std::vector<int> truth_frame_labels(const SegmentTruth& truth) {
    if (truth.segments.empty()) return {};
    const size_t frames =
        static_cast<size_t>(std::llround(truth.segments.back().t_end * truth.fps));
    std::vector<int> labels(frames, -1);
    for (const Segment& seg : truth.segments) {
        size_t lo = static_cast<size_t>(std::llround(seg.t_start * truth.fps));
        size_t hi = static_cast<size_t>(std::llround(seg.t_end * truth.fps));
        for (size_t f = lo; f < hi && f < frames; ++f) labels[f] = seg.class_id;
    }
    return labels;
}

SegmentScores segment_metrics(const std::vector<int>& pred_frame_labels, const SegmentTruth& truth) {
    std::vector<int> gt = truth_frame_labels(truth);
    if (gt.size() != pred_frame_labels.size()) {
        throw std::invalid_argument("segment_metrics: prediction length mismatch");
    }
    SegmentScores sc;
    const size_t frames = gt.size();
    size_t acc = 0;
    for (size_t f = 0; f < frames; ++f) {
        if (pred_frame_labels[f] == gt[f]) ++acc;
    }
    sc.frame_accuracy = frames ? static_cast<double>(acc) / static_cast<double>(frames) : 0.0;

    double iod_sum = 0.0, iou_sum = 0.0;
    for (const Segment& seg : truth.segments) {
        if (seg.class_id < 0) continue;
        size_t lo = static_cast<size_t>(std::llround(seg.t_start * truth.fps));
        size_t hi = static_cast<size_t>(std::llround(seg.t_end * truth.fps));
        if (hi <= lo) continue; // segment shorter than a frame
        size_t g = hi - lo;
        size_t d = 0, inter = 0;
        for (size_t f = 0; f < frames; ++f) {
            if (pred_frame_labels[f] == seg.class_id) {
                ++d;
                if (f >= lo && f < hi) ++inter;
            }
        }
        iod_sum += d ? static_cast<double>(inter) / static_cast<double>(d) : 0.0;
        iou_sum += static_cast<double>(inter) / static_cast<double>(g + d - inter);
        sc.n_segments++;
    }
    if (sc.n_segments) {
        iod_sum /= static_cast<double>(sc.n_segments);
        iou_sum /= static_cast<double>(sc.n_segments);
    }
    sc.iod = iod_sum;
    sc.iou = iou_sum;
    return sc;
}

namespace {

// dense relabeling preserving first-appearance order
std::vector<int> densify(const std::vector<int>& labels, size_t& n_out) {
    std::map<int, int> ids;
    std::vector<int> out(labels.size());
    for (size_t i = 0; i < labels.size(); ++i) {
        auto it = ids.emplace(labels[i], static_cast<int>(ids.size())).first;
        out[i] = it->second;
    }
    n_out = ids.size();
    return out;
}

double comb2(double x) { return x * (x - 1.0) / 2.0; }

// e-maxx O(n^3) assignment with potentials; returns column per row
std::vector<int> hungarian_solve(const Matd& a) {
    const int n = static_cast<int>(a.rows());
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, std::numeric_limits<double>::infinity());
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            int i0 = p[j0], j1 = -1;
            double delta = std::numeric_limits<double>::infinity();
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> result(n, -1);
    for (int j = 1; j <= n; ++j) {
        if (p[j] > 0) result[p[j] - 1] = j - 1;
    }
    return result;
}

double assignment_cost(const Matd& a, const std::vector<int>& assign) {
    double c = 0.0;
    for (size_t i = 0; i < assign.size(); ++i) c += a(i, static_cast<size_t>(assign[i]));
    return c;
}

} // namespace

std::vector<int> hungarian(const Matd& cost) {
    if (cost.rows() != cost.cols()) throw std::invalid_argument("hungarian: square matrix required");
    const size_t n = cost.rows();
    if (n == 0) return {};
    for (double v : cost.values()) {
        if (!std::isfinite(v)) throw std::invalid_argument("hungarian: non-finite cost");
    }

    double opt = assignment_cost(cost, hungarian_solve(cost));
    const double tol = 1e-9 * (1.0 + std::abs(opt));

    // lexicographic refinement: fix rows in order to the smallest column
    // that still admits an optimal completion
    std::vector<int> result(n, -1);
    std::vector<char> col_used(n, 0);
    double fixed = 0.0;
    for (size_t r = 0; r < n; ++r) {
        for (size_t c = 0; c < n; ++c) {
            if (col_used[c]) continue;
            double sub_cost = 0.0;
            const size_t m = n - r - 1;
            if (m > 0) {
                std::vector<size_t> cols;
                for (size_t j = 0; j < n; ++j) {
                    if (!col_used[j] && j != c) cols.push_back(j);
                }
                Matd sub(m, m);
                for (size_t i = 0; i < m; ++i) {
                    for (size_t jj = 0; jj < m; ++jj) sub(i, jj) = cost(r + 1 + i, cols[jj]);
                }
                sub_cost = assignment_cost(sub, hungarian_solve(sub));
            }
            if (fixed + cost(r, c) + sub_cost <= opt + tol) {
                result[r] = static_cast<int>(c);
                col_used[c] = 1;
                fixed += cost(r, c);
                break;
            }
        }
        if (result[r] < 0) throw numeric_error("hungarian: refinement failed");
    }
    return result;
}

ClusteringScores clustering_scores(const std::vector<int>& pseudo, const std::vector<int>& gt) {
    if (pseudo.size() != gt.size() || pseudo.empty()) {
        throw std::invalid_argument("clustering_scores: label vectors must match and be non-empty");
    }
    const size_t n = pseudo.size();
    size_t nk = 0, nc = 0;
    std::vector<int> ps = densify(pseudo, nk);
    std::vector<int> gs = densify(gt, nc);

    std::vector<std::vector<size_t>> cont(nk, std::vector<size_t>(nc, 0));
    for (size_t i = 0; i < n; ++i) cont[static_cast<size_t>(ps[i])][static_cast<size_t>(gs[i])]++;
    std::vector<size_t> row_sum(nk, 0), col_sum(nc, 0);
    for (size_t i = 0; i < nk; ++i) {
        for (size_t j = 0; j < nc; ++j) {
            row_sum[i] += cont[i][j];
            col_sum[j] += cont[i][j];
        }
    }

    ClusteringScores sc;

    // mutual information and entropies, natural log
    double mi = 0.0, hk = 0.0, hc = 0.0;
    const double dn = static_cast<double>(n);
    for (size_t i = 0; i < nk; ++i) {
        if (row_sum[i]) {
            double p = row_sum[i] / dn;
            hk -= p * std::log(p);
        }
        for (size_t j = 0; j < nc; ++j) {
            if (!cont[i][j]) continue;
            double pij = cont[i][j] / dn;
            mi += pij * std::log(dn * cont[i][j] /
                                 (static_cast<double>(row_sum[i]) * static_cast<double>(col_sum[j])));
        }
    }
    for (size_t j = 0; j < nc; ++j) {
        if (col_sum[j]) {
            double p = col_sum[j] / dn;
            hc -= p * std::log(p);
        }
    }
    mi = std::max(mi, 0.0);
    sc.nmi = (hk + hc) > 0.0 ? mi / (0.5 * (hk + hc)) : 1.0;

    // adjusted rand index
    double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
    for (size_t i = 0; i < nk; ++i) {
        for (size_t j = 0; j < nc; ++j) sum_ij += comb2(static_cast<double>(cont[i][j]));
        sum_a += comb2(static_cast<double>(row_sum[i]));
    }
    for (size_t j = 0; j < nc; ++j) sum_b += comb2(static_cast<double>(col_sum[j]));
    double total_pairs = comb2(dn);
    if (total_pairs <= 0.0) {
        sc.ari = 1.0;
    } else {
        double expected = sum_a * sum_b / total_pairs;
        double max_index = 0.5 * (sum_a + sum_b);
        double denom = max_index - expected;
        sc.ari = denom != 0.0 ? (sum_ij - expected) / denom : 1.0;
    }

    // Hungarian-matched accuracy on the (padded square) negated contingency
    const size_t side = std::max(nk, nc);
    Matd match_cost(side, side, 0.0);
    for (size_t i = 0; i < nk; ++i) {
        for (size_t j = 0; j < nc; ++j) match_cost(i, j) = -static_cast<double>(cont[i][j]);
    }
    std::vector<int> perm = hungarian(match_cost);
    size_t matched = 0;
    for (size_t i = 0; i < nk; ++i) {
        if (perm[i] >= 0 && static_cast<size_t>(perm[i]) < nc) {
            matched += cont[i][static_cast<size_t>(perm[i])];
        }
    }
    sc.acc = static_cast<double>(matched) / dn;

    // mean entropy and mean max purity per cluster
    double ent = 0.0, purity = 0.0;
    for (size_t i = 0; i < nk; ++i) {
        double h = 0.0, pmax = 0.0;
        for (size_t j = 0; j < nc; ++j) {
            if (!cont[i][j]) continue;
            double p = static_cast<double>(cont[i][j]) / static_cast<double>(row_sum[i]);
            h -= p * std::log(p);
            pmax = std::max(pmax, p);
        }
        ent += h;
        purity += pmax;
    }
    sc.mean_entropy = ent / static_cast<double>(nk);
    sc.mean_max_purity = 100.0 * purity / static_cast<double>(nk);
    return sc;
}

ClusteringScores clustering_metrics(const Matd& features, const std::vector<int>& gt, int k,
                                    uint64_t seed) {
    if (gt.size() != features.rows()) {
        throw std::invalid_argument("clustering_metrics: labels must cover features");
    }
    KmeansResult<double> fit = kmeans_fit(features, k, 100, seed);
    return clustering_scores(fit.assignments, gt);
}

GapReport alignment_gap(const Matd& e_v, const Matd& e_a, const Matd& e_t,
                        const std::vector<uint8_t>& misaligned) {
    if (!e_v.same_shape(e_a) || !e_v.same_shape(e_t) || misaligned.size() != e_v.rows()) {
        throw std::invalid_argument("alignment_gap: shape mismatch");
    }
    GapReport rep;
    double aligned_sum = 0.0, mis_sum = 0.0;
    for (size_t i = 0; i < e_v.rows(); ++i) {
        double cos_sum = 0.0;
        std::vector<double> m(e_v.cols());
        double m_norm = 0.0;
        for (size_t j = 0; j < e_v.cols(); ++j) {
            m[j] = (e_v(i, j) + e_a(i, j) + e_t(i, j)) / 3.0;
            m_norm += m[j] * m[j];
        }
        m_norm = std::sqrt(m_norm);
        for (const Matd* e : {&e_v, &e_a, &e_t}) {
            double dot = 0.0, norm = 0.0;
            for (size_t j = 0; j < e->cols(); ++j) {
                dot += (*e)(i, j) * m[j];
                norm += (*e)(i, j) * (*e)(i, j);
            }
            norm = std::sqrt(norm);
            cos_sum += (norm > 1e-12 && m_norm > 1e-12) ? dot / (norm * m_norm) : 0.0;
        }
        double clip_cos = cos_sum / 3.0;
        if (misaligned[i]) {
            mis_sum += clip_cos;
            rep.n_misaligned++;
        } else {
            aligned_sum += clip_cos;
            rep.n_aligned++;
        }
    }
    rep.aligned_mean = rep.n_aligned ? aligned_sum / static_cast<double>(rep.n_aligned) : 0.0;
    if (rep.n_misaligned) rep.misaligned_mean = mis_sum / static_cast<double>(rep.n_misaligned);
    return rep;
}

void EvalReport::add(const std::string& metric, double value, const std::string& task) {
    entries_.push_back({metric, task, value, false});
}

void EvalReport::add_rate(const std::string& metric, double value, const std::string& task) {
    entries_.push_back({metric, task, value, true});
}

double EvalReport::get(const std::string& metric, const std::string& task) const {
    for (const Entry& e : entries_) {
        if (e.metric == metric && e.task == task) return e.value;
    }
    throw std::invalid_argument("EvalReport: no metric " + metric);
}

nlohmann::json EvalReport::to_json() const {
    nlohmann::json j;
    if (!config_echo_.is_null()) j["config"] = config_echo_;
    j["metrics"] = nlohmann::json::object();
    j["per_task"] = nlohmann::json::object();
    for (const Entry& e : entries_) {
        double v = e.rate ? e.value * 100.0 : e.value;
        if (e.task.empty()) {
            j["metrics"][e.metric] = v;
        } else {
            j["per_task"][e.task][e.metric] = v;
        }
    }
    return j;
}

std::string EvalReport::to_csv() const {
    std::ostringstream os;
    os << "metric,value,task\n";
    for (const Entry& e : entries_) {
        double v = e.rate ? e.value * 100.0 : e.value;
        os << e.metric << "," << v << "," << e.task << "\n";
    }
    return os.str();
}

} // namespace mmclust
