#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmclust/corpus.hpp"
#include "mmclust/matrix.hpp"

namespace mmclust {

/// queries x candidates similarity with ids for reporting/export.
struct SimilarityTable {
    Matd s;
    std::vector<std::string> query_ids;
    std::vector<std::string> candidate_ids;
};

enum class SimilarityMode { video_audio, video_only, audio_only };

/// S[i][j] = (t_i . v_j + t_i . a_j) / 2 (or the single-modality variants).
/// Candidates must be aligned across the video and audio matrices.
SimilarityTable crossmodal_similarity(const Matd& text, const Matd& video, const Matd& audio,
                                      SimilarityMode mode = SimilarityMode::video_audio,
                                      std::vector<std::string> query_ids = {},
                                      std::vector<std::string> candidate_ids = {});

struct RetrievalMetrics {
    double r1 = 0.0;
    double r5 = 0.0;
    double r10 = 0.0;
    double median_rank = 0.0; // lower median for even counts
};

/// Rank of the ground-truth candidate per query, ties broken by candidate
/// index. R@K as fractions in [0,1].
RetrievalMetrics retrieval_metrics(const Matd& s, const std::vector<size_t>& gt);

/// 1-based rank per query (exposed for rank-level assertions).
std::vector<size_t> retrieval_ranks(const Matd& s, const std::vector<size_t>& gt);

enum class FullVideoMethod { mv_clip, mv_video, caption_avg };

/// Video rankings from clip-level similarities for caption-set queries.
/// mv_clip: each caption's top-k clip predictions vote for their videos.
/// mv_video: per caption, videos scored by max over their clips; top-k
/// videos vote. caption_avg: score(video) = mean over captions of
/// max-over-clips. Vote ties break by caption-averaged score, then by
/// lower video index.
std::vector<std::vector<int>> full_video_rankings(const Matd& s_clip,
                                                  const std::vector<int>& clip_video, int n_videos,
                                                  const std::vector<std::vector<int>>& query_sets,
                                                  FullVideoMethod method, int k_vote = 10);

struct ClassifyResult {
    double accuracy = 0.0;
    std::vector<int> predicted; // class per video
};

/// Zero-shot full-video classification: each class is a caption set scored
/// by caption averaging; argmax class per video (ties to the lower index).
ClassifyResult fullvideo_classify(const Matd& s_label, const std::vector<std::vector<int>>& label_sets,
                                  const std::vector<int>& clip_video, int n_videos,
                                  const std::vector<int>& gt_video_class);

enum class LocalizeNorm { per_step, per_clip };

/// One video: frame_scores is frames x steps, one [start, end) frame
/// interval per step. per_step: each step predicts its argmax frame
/// (ties to the earliest) and counts when it lands inside the interval.
double localize_recall_video(const Matd& frame_scores,
                             const std::vector<std::pair<size_t, size_t>>& intervals,
                             LocalizeNorm norm = LocalizeNorm::per_step);

struct AlignmentResult {
    std::vector<int> frame_labels; // label column per frame, -1 = background
    std::vector<int> frame_slots;  // expanded transcript slot per frame
    double score = 0.0;            // DP objective
};

/// Monotone segmentation of frames against the ordered transcript expanded
/// to [BG, a1, BG, a2, ..., BG]; background slots may be empty, action
/// slots cover at least one frame. Per-frame action scores are z-normalized
/// across labels (when znorm), background scores a constant gamma. Ties
/// resolve toward earlier segment advancement.
AlignmentResult align_transcript(const Matd& frame_scores, const std::vector<int>& transcript,
                                 double bg_gamma = 0.0, bool znorm = true);

struct SegmentTruth {
    std::vector<Segment> segments; // ordered, covering; class_id -1 = background
    double fps = 1.0;
};

struct SegmentScores {
    double iod = 0.0; // mean |G n D| / |D| over non-background gt segments
    double iou = 0.0; // mean |G n D| / |G u D|
    double frame_accuracy = 0.0;
    size_t n_segments = 0;
};

/// D is the set of predicted frames carrying a gt segment's class within
/// the video; IoD is 0 when D is empty.
SegmentScores segment_metrics(const std::vector<int>& pred_frame_labels, const SegmentTruth& truth);

/// Per-frame gt labels discretized from the segment list.
std::vector<int> truth_frame_labels(const SegmentTruth& truth);

struct ClusteringScores {
    double nmi = 0.0;          // arithmetic-mean normalization
    double ari = 0.0;
    double acc = 0.0;          // Hungarian-matched accuracy
    double mean_entropy = 0.0; // natural log
    double mean_max_purity = 0.0; // percent
};

/// Metrics from label vectors (pure part, no clustering run).
ClusteringScores clustering_scores(const std::vector<int>& pseudo, const std::vector<int>& gt);

/// Runs seeded k-means on the features, then scores against gt labels.
ClusteringScores clustering_metrics(const Matd& features, const std::vector<int>& gt, int k,
                                    uint64_t seed);

/// Minimum-cost perfect matching on a square cost matrix; returns the
/// column assigned to each row. Among equal-cost optima the
/// lexicographically smallest assignment is returned.
std::vector<int> hungarian(const Matd& cost);

struct GapReport {
    double aligned_mean = 0.0;
    std::optional<double> misaligned_mean;
    size_t n_aligned = 0;
    size_t n_misaligned = 0;
};

/// Mean cosine of each modality embedding to its clip's fused mean,
/// averaged separately over aligned and misaligned populations.
GapReport alignment_gap(const Matd& e_v, const Matd& e_a, const Matd& e_t,
                        const std::vector<uint8_t>& misaligned);

/// Metric name -> value with optional per-task breakdown. Rates are stored
/// as fractions and serialized as percentages.
class EvalReport {
public:
    void add(const std::string& metric, double value, const std::string& task = "");
    void add_rate(const std::string& metric, double value, const std::string& task = "");
    void set_config_echo(nlohmann::json cfg) { config_echo_ = std::move(cfg); }

    double get(const std::string& metric, const std::string& task = "") const;
    nlohmann::json to_json() const;
    std::string to_csv() const;

private:
    struct Entry {
        std::string metric;
        std::string task;
        double value = 0.0;
        bool rate = false;
    };
    std::vector<Entry> entries_;
    nlohmann::json config_echo_;
};

} // namespace mmclust
