#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mmclust/evaluation.hpp"
#include "mmclust/numerics.hpp"
#include "mmclust/rng.hpp"
#include "oracles.hpp"

using namespace mmclust;

namespace {
Matd random_mat(size_t r, size_t c, Rng& rng) {
    Matd m(r, c);
    for (double& v : m.values()) v = rng.normal();
    return m;
}
} // namespace

TEST_CASE("crossmodal_similarity: averaging and modality variants") {
    Rng rng(1);
    Matd t = random_mat(3, 4, rng), v = random_mat(5, 4, rng);

    SUBCASE("equal video and audio collapse to the text-video products") {
        auto table = crossmodal_similarity(t, v, v);
        Matd want = matmul_nt(t, v);
        for (size_t i = 0; i < want.size(); ++i) {
            CHECK(table.s.values()[i] == doctest::Approx(want.values()[i]));
        }
    }

    SUBCASE("orthonormal diagonal alignment gives the identity pattern") {
        Matd eye = Matd::identity(4);
        auto table = crossmodal_similarity(eye, eye, eye);
        for (size_t i = 0; i < 4; ++i) {
            for (size_t j = 0; j < 4; ++j) CHECK(table.s(i, j) == (i == j ? 1.0 : 0.0));
        }
    }

    SUBCASE("matches the per-pair scalar oracle") {
        Matd a = random_mat(5, 4, rng);
        auto table = crossmodal_similarity(t, v, a);
        for (size_t i = 0; i < t.rows(); ++i) {
            for (size_t j = 0; j < v.rows(); ++j) {
                double dv = 0.0, da = 0.0;
                for (size_t k = 0; k < 4; ++k) {
                    dv += t(i, k) * v(j, k);
                    da += t(i, k) * a(j, k);
                }
                CHECK(table.s(i, j) == doctest::Approx(0.5 * (dv + da)).epsilon(1e-12));
            }
        }
        auto vid = crossmodal_similarity(t, v, a, SimilarityMode::video_only);
        Matd want = matmul_nt(t, v);
        for (size_t i = 0; i < want.size(); ++i) {
            CHECK(vid.s.values()[i] == doctest::Approx(want.values()[i]));
        }
    }
}

TEST_CASE("retrieval_metrics: dominant diagonal, constant table, sort oracle") {
    SUBCASE("identity-dominant diagonal") {
        Matd s = Matd::identity(12);
        std::vector<size_t> gt(12);
        std::iota(gt.begin(), gt.end(), size_t{0});
        auto m = retrieval_metrics(s, gt);
        CHECK(m.r1 == 1.0);
        CHECK(m.median_rank == 1.0);
    }

    SUBCASE("constant similarities rank by index tie-break") {
        const size_t n = 20;
        Matd s(n, n, 0.5);
        std::vector<size_t> gt(n);
        std::iota(gt.begin(), gt.end(), size_t{0});
        auto ranks = retrieval_ranks(s, gt);
        for (size_t q = 0; q < n; ++q) CHECK(ranks[q] == q + 1);
        auto m = retrieval_metrics(s, gt);
        CHECK(m.r5 == doctest::Approx(5.0 / 20.0));
        CHECK(m.r10 == doctest::Approx(10.0 / 20.0));
        CHECK(m.median_rank == 10.0); // lower median of 1..20
    }

    SUBCASE("random table matches a brute-force sort oracle") {
        Rng rng(2);
        const size_t n = 20;
        Matd s = random_mat(n, n, rng);
        std::vector<size_t> gt(n);
        for (size_t q = 0; q < n; ++q) gt[q] = rng.index(n);
        auto ranks = retrieval_ranks(s, gt);
        for (size_t q = 0; q < n; ++q) {
            std::vector<size_t> order(n);
            std::iota(order.begin(), order.end(), size_t{0});
            std::stable_sort(order.begin(), order.end(),
                             [&](size_t a, size_t b) { return s(q, a) > s(q, b); });
            size_t want = 1 + static_cast<size_t>(std::find(order.begin(), order.end(), gt[q]) -
                                                  order.begin());
            CHECK(ranks[q] == want);
        }
    }

    SUBCASE("raising the gt score never worsens any recall") {
        Rng rng(3);
        Matd s = random_mat(8, 8, rng);
        std::vector<size_t> gt(8, 3);
        auto before = retrieval_metrics(s, gt);
        for (size_t q = 0; q < 8; ++q) s(q, 3) += 1.0;
        auto after = retrieval_metrics(s, gt);
        CHECK(after.r1 >= before.r1);
        CHECK(after.r5 >= before.r5);
        CHECK(after.r10 >= before.r10);
    }

    std::vector<size_t> short_gt(2);
    CHECK_THROWS_AS(retrieval_metrics(Matd(3, 3), short_gt), std::invalid_argument);
}

TEST_CASE("full_video_rankings: single-caption single-clip degeneracy") {
    Rng rng(4);
    const int n_videos = 6;
    Matd s = random_mat(1, 6, rng); // one caption, six single-clip videos
    std::vector<int> clip_video{0, 1, 2, 3, 4, 5};
    std::vector<std::vector<int>> queries{{0}};

    std::vector<int> clip_order(6);
    std::iota(clip_order.begin(), clip_order.end(), 0);
    std::sort(clip_order.begin(), clip_order.end(), [&](int a, int b) { return s(0, a) > s(0, b); });

    for (auto method : {FullVideoMethod::mv_clip, FullVideoMethod::mv_video, FullVideoMethod::caption_avg}) {
        auto rankings = full_video_rankings(s, clip_video, n_videos, queries, method, 3);
        CHECK(rankings[0] == clip_order);
    }
}

TEST_CASE("full_video_rankings: caption averaging favors consistent evidence") {
    // two captions each decisive for video 1 via different clips
    Matd s(2, 4);
    // clips 0,1 -> video 0; clips 2,3 -> video 1
    s(0, 0) = 0.6; s(0, 1) = 0.1; s(0, 2) = 0.9; s(0, 3) = 0.1;
    s(1, 0) = 0.1; s(1, 1) = 0.5; s(1, 2) = 0.1; s(1, 3) = 0.8;
    std::vector<int> clip_video{0, 0, 1, 1};
    std::vector<std::vector<int>> queries{{0, 1}};
    auto rankings = full_video_rankings(s, clip_video, 2, queries, FullVideoMethod::caption_avg, 10);
    // video 1 averages (0.9 + 0.8)/2 vs video 0 (0.6 + 0.5)/2
    CHECK(rankings[0][0] == 1);
}

TEST_CASE("full_video_rankings: vote ties break toward the lower index") {
    // two captions, each giving one vote to each video at equal similarity
    Matd s(2, 2, 0.5);
    std::vector<int> clip_video{0, 1};
    std::vector<std::vector<int>> queries{{0, 1}};
    for (auto method : {FullVideoMethod::mv_clip, FullVideoMethod::mv_video}) {
        auto rankings = full_video_rankings(s, clip_video, 2, queries, method, 2);
        CHECK(rankings[0][0] == 0);
        CHECK(rankings[0][1] == 1);
    }
    std::vector<std::vector<int>> empty_set{{}};
    CHECK_THROWS_AS(full_video_rankings(s, clip_video, 2, empty_set, FullVideoMethod::mv_clip, 2),
                    std::invalid_argument);
}

TEST_CASE("fullvideo_classify: hand cases and a brute-force oracle") {
    SUBCASE("one class is always right") {
        Rng rng(5);
        Matd s = random_mat(2, 6, rng);
        std::vector<int> clip_video{0, 0, 1, 1, 2, 2};
        std::vector<std::vector<int>> labels{{0, 1}};
        auto res = fullvideo_classify(s, labels, clip_video, 3, {0, 0, 0});
        CHECK(res.accuracy == 1.0);
    }

    SUBCASE("5 videos x 3 classes against a scalar oracle") {
        Rng rng(6);
        Matd s = random_mat(3, 10, rng); // one caption per class, 2 clips per video
        std::vector<int> clip_video;
        for (int v = 0; v < 5; ++v) {
            clip_video.push_back(v);
            clip_video.push_back(v);
        }
        std::vector<std::vector<int>> labels{{0}, {1}, {2}};
        std::vector<int> gt{0, 1, 2, 0, 1};
        auto res = fullvideo_classify(s, labels, clip_video, 5, gt);
        size_t correct = 0;
        for (int v = 0; v < 5; ++v) {
            double best = -1e18;
            int best_c = 0;
            for (int c = 0; c < 3; ++c) {
                double m = std::max(s(c, 2 * v), s(c, 2 * v + 1));
                if (m > best) {
                    best = m;
                    best_c = c;
                }
            }
            CHECK(res.predicted[static_cast<size_t>(v)] == best_c);
            if (best_c == gt[static_cast<size_t>(v)]) ++correct;
        }
        CHECK(res.accuracy == doctest::Approx(correct / 5.0));
    }

    std::vector<std::vector<int>> empty{{}};
    CHECK_THROWS_AS(fullvideo_classify(Matd(1, 2), empty, {0, 0}, 1, {0}), std::invalid_argument);
}

TEST_CASE("localize_recall: peaks, boundaries, enumeration oracle") {
    SUBCASE("peak inside the interval") {
        Matd s(6, 1);
        s(3, 0) = 5.0;
        CHECK(localize_recall_video(s, {{2, 5}}) == 1.0);
    }
    SUBCASE("peak one frame outside the interval") {
        Matd s(6, 1);
        s(5, 0) = 5.0;
        CHECK(localize_recall_video(s, {{2, 5}}) == 0.0);
    }
    SUBCASE("ties resolve to the earliest frame") {
        Matd s(4, 1, 1.0);
        CHECK(localize_recall_video(s, {{0, 1}}) == 1.0);
        CHECK(localize_recall_video(s, {{1, 4}}) == 0.0);
    }
    SUBCASE("random scores match an exhaustive argmax oracle") {
        Rng rng(7);
        for (int trial = 0; trial < 10; ++trial) {
            Matd s = random_mat(8, 2, rng);
            std::vector<std::pair<size_t, size_t>> ivs{{1, 4}, {5, 8}};
            size_t correct = 0;
            for (size_t step = 0; step < 2; ++step) {
                size_t best_t = 0;
                for (size_t t = 1; t < 8; ++t) {
                    if (s(t, step) > s(best_t, step)) best_t = t;
                }
                if (best_t >= ivs[step].first && best_t < ivs[step].second) ++correct;
            }
            CHECK(localize_recall_video(s, ivs) == doctest::Approx(correct / 2.0));
        }
    }
    CHECK_THROWS_AS(localize_recall_video(Matd(4, 1), {{2, 2}}), std::invalid_argument);
}

TEST_CASE("align_transcript: single action with background forbidden") {
    Rng rng(8);
    Matd s = random_mat(5, 1, rng);
    auto res = align_transcript(s, {0}, -std::numeric_limits<double>::infinity(), false);
    for (int l : res.frame_labels) CHECK(l == 0);
}

TEST_CASE("align_transcript: clean two-action boundary") {
    Matd s(8, 2);
    for (size_t t = 0; t < 4; ++t) {
        s(t, 0) = 2.0;
        s(t, 1) = -2.0;
    }
    for (size_t t = 4; t < 8; ++t) {
        s(t, 0) = -2.0;
        s(t, 1) = 2.0;
    }
    auto res = align_transcript(s, {0, 1}, 0.0, false);
    for (size_t t = 0; t < 4; ++t) CHECK(res.frame_labels[t] == 0);
    for (size_t t = 4; t < 8; ++t) CHECK(res.frame_labels[t] == 1);
}

TEST_CASE("align_transcript: DP equals exhaustive enumeration on all small instances") {
    Rng rng(9);
    int cases = 0;
    for (size_t frames = 2; frames <= 8; frames += 2) {
        for (size_t n_labels = 1; n_labels <= 3; ++n_labels) {
            if (frames < n_labels) continue;
            for (int trial = 0; trial < 8; ++trial) {
                Matd s = random_mat(frames, n_labels, rng);
                std::vector<int> transcript(n_labels);
                std::iota(transcript.begin(), transcript.end(), 0);
                double gamma = rng.uniform(-1.0, 1.0);
                auto res = align_transcript(s, transcript, gamma, false);
                double want = oracles::exhaustive_alignment_score(s, transcript, gamma);
                CHECK(res.score == doctest::Approx(want).epsilon(1e-12));
                ++cases;

                // structural invariants: monotone slots covering every frame
                for (size_t t = 1; t < frames; ++t) {
                    CHECK(res.frame_slots[t] >= res.frame_slots[t - 1]);
                }
                CHECK(res.frame_labels.size() == frames);
            }
        }
    }
    CHECK(cases >= 80);
    CHECK_THROWS_AS(align_transcript(Matd(1, 2), {0, 1}, 0.0, false), std::invalid_argument);
    CHECK_THROWS_AS(align_transcript(Matd(3, 2), {}, 0.0, false), std::invalid_argument);
}

TEST_CASE("align_transcript: ties advance segments early") {
    Matd s(3, 1, 0.0); // all scores equal with gamma = 0
    auto res = align_transcript(s, {0}, 0.0, false);
    // earliest advancement: action at frame 0, background afterwards
    CHECK(res.frame_labels[0] == 0);
    CHECK(res.frame_labels[1] == -1);
    CHECK(res.frame_labels[2] == -1);
}

TEST_CASE("segment_metrics: identity, spillover, random set oracle") {
    SegmentTruth truth;
    truth.segments = {{-1, 0, 2}, {0, 2, 4}, {-1, 4, 5}, {1, 5, 8}};
    truth.fps = 1.0;

    SUBCASE("exact prediction") {
        auto sc = segment_metrics(truth_frame_labels(truth), truth);
        CHECK(sc.iod == 1.0);
        CHECK(sc.iou == 1.0);
        CHECK(sc.frame_accuracy == 1.0);
        CHECK(sc.n_segments == 2);
    }

    SUBCASE("equal-length spillover halves IoD and IoU") {
        SegmentTruth t2;
        t2.segments = {{0, 0, 2}, {-1, 2, 4}};
        std::vector<int> pred{0, 0, 0, 0}; // covers gt plus equal spill
        auto sc = segment_metrics(pred, t2);
        CHECK(sc.iod == doctest::Approx(0.5));
        CHECK(sc.iou == doctest::Approx(0.5));
    }

    SUBCASE("random predictions match set arithmetic; IoU <= IoD and recall bound") {
        Rng rng(10);
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<int> pred(8);
            for (int& p : pred) p = static_cast<int>(rng.index(3)) - 1; // -1, 0, 1
            auto sc = segment_metrics(pred, truth);
            double iod = 0, iou = 0;
            for (const Segment& seg : truth.segments) {
                if (seg.class_id < 0) continue;
                size_t g0 = static_cast<size_t>(seg.t_start), g1 = static_cast<size_t>(seg.t_end);
                size_t d = 0, inter = 0;
                for (size_t f = 0; f < 8; ++f) {
                    if (pred[f] == seg.class_id) {
                        ++d;
                        if (f >= g0 && f < g1) ++inter;
                    }
                }
                double seg_iod = d ? double(inter) / double(d) : 0.0;
                double seg_iou = double(inter) / double((g1 - g0) + d - inter);
                CHECK(seg_iou <= seg_iod + 1e-12);
                CHECK(seg_iou <= double(inter) / double(g1 - g0) + 1e-12);
                iod += seg_iod;
                iou += seg_iou;
            }
            CHECK(sc.iod == doctest::Approx(iod / 2.0));
            CHECK(sc.iou == doctest::Approx(iou / 2.0));
            CHECK(sc.iou >= 0.0);
            CHECK(sc.iod <= 1.0);
        }
    }

    std::vector<int> wrong_len(3);
    CHECK_THROWS_AS(segment_metrics(wrong_len, truth), std::invalid_argument);
}

TEST_CASE("hungarian: hand cases") {
    Matd diag = Matd::from({{0.0, 9.0, 9.0}, {9.0, 0.0, 9.0}, {9.0, 9.0, 0.0}});
    CHECK(hungarian(diag) == std::vector<int>{0, 1, 2});

    Matd two = Matd::from({{0.0, 1.0}, {1.0, 0.0}});
    CHECK(hungarian(two) == std::vector<int>{0, 1});

    CHECK_THROWS_AS(hungarian(Matd(2, 3)), std::invalid_argument);
    CHECK(hungarian(Matd(0, 0)).empty());
}

TEST_CASE("hungarian: matches exhaustive permutation search up to 7x7") {
    Rng rng(11);
    for (size_t n = 2; n <= 7; ++n) {
        for (int trial = 0; trial < 10; ++trial) {
            Matd cost = random_mat(n, n, rng);
            auto perm = hungarian(cost);
            double got = 0.0;
            std::vector<bool> used(n, false);
            for (size_t i = 0; i < n; ++i) {
                got += cost(i, static_cast<size_t>(perm[i]));
                CHECK_FALSE(used[static_cast<size_t>(perm[i])]);
                used[static_cast<size_t>(perm[i])] = true;
            }
            CHECK(got == doctest::Approx(oracles::exhaustive_assignment_cost(cost)).epsilon(1e-9));

            // never worse than the identity assignment
            double identity = 0.0;
            for (size_t i = 0; i < n; ++i) identity += cost(i, i);
            CHECK(got <= identity + 1e-9);
        }
    }
}

TEST_CASE("hungarian: lexicographically smallest among equal optima") {
    // constant matrix: every permutation optimal -> identity expected
    Matd flat(4, 4, 1.0);
    CHECK(hungarian(flat) == std::vector<int>{0, 1, 2, 3});

    // two optimal assignments, {0->0,1->1} and {0->1,1->0}; prefer 0->0
    Matd sym = Matd::from({{1.0, 1.0}, {1.0, 1.0}});
    CHECK(hungarian(sym) == std::vector<int>{0, 1});
}

TEST_CASE("clustering_scores: perfect, degenerate, invariances") {
    SUBCASE("pseudo labels equal to truth") {
        std::vector<int> gt{0, 0, 1, 1, 2, 2};
        auto sc = clustering_scores(gt, gt);
        CHECK(sc.nmi == doctest::Approx(1.0));
        CHECK(sc.ari == doctest::Approx(1.0));
        CHECK(sc.acc == doctest::Approx(1.0));
        CHECK(sc.mean_entropy == doctest::Approx(0.0));
        CHECK(sc.mean_max_purity == doctest::Approx(100.0));
    }

    SUBCASE("single cluster against two balanced classes") {
        std::vector<int> pseudo(8, 0);
        std::vector<int> gt{0, 0, 0, 0, 1, 1, 1, 1};
        auto sc = clustering_scores(pseudo, gt);
        CHECK(sc.ari == doctest::Approx(0.0));
        CHECK(sc.mean_max_purity == doctest::Approx(50.0));
        CHECK(sc.nmi == doctest::Approx(0.0));
    }

    SUBCASE("invariant under label id permutation") {
        Rng rng(12);
        std::vector<int> pseudo(30), gt(30);
        for (size_t i = 0; i < 30; ++i) {
            pseudo[i] = static_cast<int>(rng.index(4));
            gt[i] = static_cast<int>(rng.index(3));
        }
        auto base = clustering_scores(pseudo, gt);
        std::vector<int> remap{2, 0, 3, 1};
        std::vector<int> pseudo2(30), gt2(30);
        for (size_t i = 0; i < 30; ++i) {
            pseudo2[i] = remap[static_cast<size_t>(pseudo[i])];
            gt2[i] = (gt[i] + 7) * 13; // arbitrary distinct ids
        }
        auto moved = clustering_scores(pseudo2, gt2);
        CHECK(base.nmi == doctest::Approx(moved.nmi).epsilon(1e-12));
        CHECK(base.ari == doctest::Approx(moved.ari).epsilon(1e-12));
        CHECK(base.acc == doctest::Approx(moved.acc).epsilon(1e-12));
        CHECK(base.mean_entropy == doctest::Approx(moved.mean_entropy).epsilon(1e-12));
    }

    SUBCASE("Hungarian accuracy equals brute-force best permutation") {
        Rng rng(13);
        for (int trial = 0; trial < 10; ++trial) {
            std::vector<int> pseudo(24), gt(24);
            for (size_t i = 0; i < 24; ++i) {
                pseudo[i] = static_cast<int>(rng.index(5));
                gt[i] = static_cast<int>(rng.index(4));
            }
            auto sc = clustering_scores(pseudo, gt);
            double want = oracles::exhaustive_matching_accuracy(pseudo, gt, 5, 4);
            CHECK(sc.acc == doctest::Approx(want).epsilon(1e-12));
        }
    }
}

TEST_CASE("clustering_metrics: separated blobs cluster perfectly") {
    Rng rng(14);
    Matd feats(30, 3);
    std::vector<int> gt(30);
    for (size_t i = 0; i < 30; ++i) {
        int cls = static_cast<int>(i % 3);
        gt[i] = cls;
        for (size_t j = 0; j < 3; ++j) feats(i, j) = 10.0 * cls + 0.05 * rng.normal();
    }
    auto sc = clustering_metrics(feats, gt, 3, 0);
    CHECK(sc.nmi == doctest::Approx(1.0));
    CHECK(sc.ari == doctest::Approx(1.0));
    CHECK(sc.acc == doctest::Approx(1.0));
    CHECK(sc.mean_entropy == doctest::Approx(0.0));
    CHECK(sc.mean_max_purity == doctest::Approx(100.0));

    CHECK_THROWS_AS(clustering_metrics(feats, gt, 31, 0), std::invalid_argument);
}

TEST_CASE("alignment_gap: geometry cases") {
    SUBCASE("identical embeddings give aligned cosine one") {
        Matd e = row_l2_normalize(Matd::from({{1.0, 2.0, 3.0}, {2.0, -1.0, 0.5}}));
        auto rep = alignment_gap(e, e, e, {0, 0});
        CHECK(rep.aligned_mean == doctest::Approx(1.0));
        CHECK_FALSE(rep.misaligned_mean.has_value());
        CHECK(rep.n_aligned == 2);
    }

    SUBCASE("orthogonal unit triple gives 1/sqrt(3)") {
        Matd ev = Matd::from({{1.0, 0.0, 0.0}});
        Matd ea = Matd::from({{0.0, 1.0, 0.0}});
        Matd et = Matd::from({{0.0, 0.0, 1.0}});
        auto rep = alignment_gap(ev, ea, et, {0});
        CHECK(rep.aligned_mean == doctest::Approx(1.0 / std::sqrt(3.0)).epsilon(1e-12));
    }

    SUBCASE("misaligned population reported separately") {
        Matd e = row_l2_normalize(Matd::from({{1.0, 0.0}, {0.0, 1.0}}));
        Matd f = row_l2_normalize(Matd::from({{1.0, 0.0}, {1.0, 0.0}}));
        auto rep = alignment_gap(e, e, f, {0, 1});
        CHECK(rep.n_aligned == 1);
        CHECK(rep.n_misaligned == 1);
        REQUIRE(rep.misaligned_mean.has_value());
        CHECK(rep.aligned_mean > *rep.misaligned_mean);
    }
}

TEST_CASE("EvalReport: rates serialize as percentages, csv shape") {
    EvalReport rep;
    rep.add_rate("R@1", 0.125);
    rep.add("MedianR", 4.0);
    rep.add_rate("IoU", 0.5, "v01");
    auto j = rep.to_json();
    CHECK(j["metrics"]["R@1"] == doctest::Approx(12.5));
    CHECK(j["metrics"]["MedianR"] == doctest::Approx(4.0));
    CHECK(j["per_task"]["v01"]["IoU"] == doctest::Approx(50.0));
    CHECK(rep.get("R@1") == doctest::Approx(0.125)); // internal fractions
    std::string csv = rep.to_csv();
    CHECK(csv.find("metric,value,task\n") == 0);
    CHECK(csv.find("R@1,12.5,\n") != std::string::npos);
}
