#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mmclust/matrix.hpp"

namespace mmclust {

/// One narrated clip: per-modality feature rows plus optional ground truth.
struct ClipRecord {
    std::string clip_id;
    std::string video_id;
    double t_start = 0.0;
    double t_end = 0.0;
    size_t v_row = 0;
    size_t a_row = 0;
    size_t t_row = 0;
    std::optional<int> gt_class;
    bool misaligned = false; // synthetic corpora only
};

/// Ground-truth timeline segment; class_id -1 means background.
struct Segment {
    int class_id = -1;
    double t_start = 0.0;
    double t_end = 0.0;
};

struct FeatureFileRef {
    std::string path;
    size_t rows = 0;
    size_t cols = 0;
};

struct CorpusManifest {
    std::vector<ClipRecord> clips;
    FeatureFileRef video_features;
    FeatureFileRef audio_features;
    FeatureFileRef text_features;
    std::optional<FeatureFileRef> label_features; // one noiseless text row per class
    std::vector<std::string> class_names;
    std::map<std::string, std::vector<size_t>> videos;   // video_id -> clip indices by t_start
    std::map<std::string, std::vector<Segment>> segments; // localization corpora only

    size_t n_classes() const { return class_names.size(); }
};

void save_manifest(const CorpusManifest& m, const std::filesystem::path& path);

/// Loads and validates a manifest. Declared dims are checked against the
/// feature file headers; clips out of t_start order within a video throw,
/// overlapping clips only warn on stderr.
CorpusManifest load_manifest(const std::filesystem::path& path);

/// The three feature matrices (plus optional label rows) behind a manifest.
template <class T>
struct CorpusData {
    Mat<T> video;
    Mat<T> audio;
    Mat<T> text;
    Mat<T> labels;
};

template <class T>
CorpusData<T> load_corpus_data(const CorpusManifest& m, const std::filesystem::path& manifest_path);

/// Synthetic corpus generator parameters. Per class a latent prototype is
/// drawn once; clips add instance noise in latent space and map through
/// fixed random per-modality projections plus feature noise. bg_frac > 0
/// switches to localization layout (labeled segments interleaved with
/// background drawn from a dedicated background prototype).
struct SyntheticSpec {
    size_t n_classes = 8;
    size_t clips_per_video = 8;
    size_t n_videos = 128;
    size_t d_v = 96;
    size_t d_a = 80;
    size_t d_t = 72;
    size_t latent_dim = 24;
    double sigma_v = 0.1;
    double sigma_a = 0.1;
    double sigma_t = 0.1;
    double sigma_latent = 0.1;
    double p_mis = 0.0;
    double bg_frac = 0.0;
    size_t segments_per_video = 3;
    uint64_t seed = 0;
    // Distinguishes corpora drawn from the same latent space: prototypes and
    // modality maps depend only on seed, clip sampling also on this tag.
    // Held-out evaluation corpora use a different tag with the same seed.
    uint64_t corpus_tag = 0;

    void validate() const;
};

/// The fixed random structure behind a synthetic corpus: one latent
/// prototype per class plus a background prototype, and the per-modality
/// projection maps. Depends only on (seed, n_classes, latent_dim, raw dims),
/// so corpora generated with the same seed share one feature space
/// regardless of layout knobs.
struct LatentSpace {
    Matd prototypes; // n_classes x latent_dim
    Matd background; // 1 x latent_dim
    Matd w_v;        // latent_dim x d_v
    Matd w_a;
    Matd w_t;
};

LatentSpace make_latent_space(const SyntheticSpec& spec);

/// Writes manifest.json, video.mcnf, audio.mcnf, text.mcnf, labels.mcnf into
/// out_dir and returns the manifest. Deterministic per seed.
CorpusManifest gen_synthetic_corpus(const SyntheticSpec& spec, const std::filesystem::path& out_dir);

/// One training batch: clip indices plus position metadata for building
/// temporal-neighbor positive sets.
struct Batch {
    std::vector<size_t> clip_indices;
    std::vector<int> video_of;     // dense video index per row
    std::vector<int> pos_in_video; // clip position within its video
};

/// Epoch partition of clips after a seeded shuffle; a trailing batch
/// shorter than 2 is dropped. batch_size > corpus throws.
std::vector<Batch> make_batches(const CorpusManifest& m, size_t batch_size, uint64_t shuffle_seed);

/// Materializes the (B x D_raw) per-modality feature slices of a batch.
template <class T>
struct BatchData {
    Mat<T> video;
    Mat<T> audio;
    Mat<T> text;
};

template <class T>
BatchData<T> gather_batch(const CorpusManifest& m, const CorpusData<T>& data, const Batch& batch);

} // namespace mmclust
