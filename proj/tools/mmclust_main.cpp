// mmclust command line: synthetic data generation, training, gradient
// checks, zero-shot evaluation protocols and embedding export.
//
// Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numerical
// failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "mmclust/checkpoint.hpp"
#include "mmclust/clustering.hpp"
#include "mmclust/corpus.hpp"
#include "mmclust/errors.hpp"
#include "mmclust/evaluation.hpp"
#include "mmclust/io.hpp"
#include "mmclust/losses.hpp"
#include "mmclust/model.hpp"
#include "mmclust/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mmclust;

namespace {

void echo_config(const json& cfg, const fs::path& out_dir) {
    std::cout << cfg.dump(2) << "\n";
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        std::ofstream os(out_dir / "config.json");
        os << cfg.dump(2) << "\n";
    }
}

void write_report(const EvalReport& report, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    std::ofstream js(out_dir / "report.json");
    js << report.to_json().dump(2) << "\n";
    std::ofstream cs(out_dir / "report.csv");
    cs << report.to_csv();
    std::cout << report.to_json().dump(2) << "\n";
}

ContrastiveVariant parse_variant(const std::string& name) {
    if (name == "mms") return ContrastiveVariant::mms;
    if (name == "nce") return ContrastiveVariant::nce;
    if (name == "milnce") return ContrastiveVariant::milnce;
    throw std::invalid_argument("unknown loss variant: " + name);
}

struct EvalInputs {
    CorpusManifest manifest;
    CorpusData<double> data;
    Checkpoint<double> ckpt;
    CorpusEmbeddings<double> emb;
};

EvalInputs load_eval_inputs(const std::string& checkpoint, const std::string& manifest_path) {
    EvalInputs in;
    in.manifest = load_manifest(manifest_path);
    in.data = load_corpus_data<double>(in.manifest, manifest_path);
    in.ckpt = load_checkpoint<double>(checkpoint);
    const std::array<size_t, 3> dims{in.data.video.cols(), in.data.audio.cols(),
                                     in.data.text.cols()};
    if (dims != in.ckpt.params.raw_dims) {
        throw io_error("checkpoint raw dims do not match manifest feature dims");
    }
    in.emb = embed_clips(in.ckpt.params, in.manifest, in.data);
    return in;
}

// dense video index in manifest order plus per-video clip lists
struct VideoIndex {
    std::vector<std::string> ids;              // dense -> video_id
    std::vector<int> of_clip;                  // clip -> dense video
    std::vector<std::vector<int>> clips_of;    // dense video -> clips
};

VideoIndex index_videos(const CorpusManifest& m) {
    VideoIndex vi;
    vi.of_clip.assign(m.clips.size(), -1);
    for (const auto& [vid, idxs] : m.videos) {
        int dense = static_cast<int>(vi.ids.size());
        vi.ids.push_back(vid);
        vi.clips_of.emplace_back();
        for (size_t i : idxs) {
            vi.of_clip[i] = dense;
            vi.clips_of.back().push_back(static_cast<int>(i));
        }
    }
    return vi;
}

SimilarityMode parse_modality(const std::string& name) {
    if (name == "va") return SimilarityMode::video_audio;
    if (name == "v") return SimilarityMode::video_only;
    if (name == "a") return SimilarityMode::audio_only;
    throw std::invalid_argument("unknown modality mode: " + name);
}

int run_gen_data(const SyntheticSpec& spec, const std::string& out) {
    json cfg{{"command", "gen-data"},
             {"n_classes", spec.n_classes},
             {"clips_per_video", spec.clips_per_video},
             {"n_videos", spec.n_videos},
             {"d_v", spec.d_v},
             {"d_a", spec.d_a},
             {"d_t", spec.d_t},
             {"latent_dim", spec.latent_dim},
             {"sigma_v", spec.sigma_v},
             {"sigma_a", spec.sigma_a},
             {"sigma_t", spec.sigma_t},
             {"sigma_latent", spec.sigma_latent},
             {"p_mis", spec.p_mis},
             {"bg_frac", spec.bg_frac},
             {"segments_per_video", spec.segments_per_video},
             {"seed", spec.seed},
             {"corpus_tag", spec.corpus_tag},
             {"out", out}};
    echo_config(cfg, out);
    gen_synthetic_corpus(spec, out);
    return 0;
}

template <class T>
int run_train_typed(const TrainConfig& cfg, const std::string& manifest_path,
                    const std::string& out) {
    CorpusManifest manifest = load_manifest(manifest_path);
    CorpusData<T> data = load_corpus_data<T>(manifest, manifest_path);
    fs::create_directories(out);
    std::ofstream log(fs::path(out) / "metrics.jsonl");
    auto checkpoint_cb = [&](size_t step, const ModelParams<T>& p, const CentroidBank<T>& b) {
        save_checkpoint(fs::path(out) / "checkpoint", p, b, step);
    };
    TrainResult<T> result = train<T>(cfg, manifest, data, &log, checkpoint_cb);
    std::cout << "trained " << result.steps << " steps; final epoch mean loss "
              << result.epoch_mean_total.back() << "\n";
    return 0;
}

int run_grad_check(const GradCheckConfig& cfg) {
    auto reports = grad_check(cfg);
    bool ok = true;
    for (const auto& r : reports) {
        json j{{"tensor", r.tensor},
               {"max_rel_error", r.max_rel_error},
               {"row", r.worst_row},
               {"col", r.worst_col},
               {"analytic", r.analytic},
               {"numeric", r.numeric}};
        std::cout << j.dump() << "\n";
        if (r.max_rel_error > 1e-4) ok = false;
    }
    if (!ok) throw numeric_error("gradient check failed");
    return 0;
}

int run_eval_retrieval(const std::string& checkpoint, const std::string& manifest_path,
                       const std::string& out, const std::string& modality,
                       bool export_similarity) {
    EvalInputs in = load_eval_inputs(checkpoint, manifest_path);
    SimilarityTable table =
        crossmodal_similarity(in.emb.e_t, in.emb.e_v, in.emb.e_a, parse_modality(modality));
    std::vector<size_t> gt(in.manifest.clips.size());
    for (size_t i = 0; i < gt.size(); ++i) gt[i] = i;
    RetrievalMetrics m = retrieval_metrics(table.s, gt);

    EvalReport report;
    report.set_config_echo(json{{"command", "eval-retrieval"},
                                {"checkpoint", checkpoint},
                                {"manifest", manifest_path},
                                {"modality", modality},
                                {"n_queries", gt.size()}});
    report.add_rate("R@1", m.r1);
    report.add_rate("R@5", m.r5);
    report.add_rate("R@10", m.r10);
    report.add("MedianR", m.median_rank);
    write_report(report, out);
    if (export_similarity) save_matrix(table.s, fs::path(out) / "similarity.mcnf");
    return 0;
}

int run_eval_fullvideo(const std::string& checkpoint, const std::string& manifest_path,
                       const std::string& out, const std::string& method_name, int k_vote,
                       bool classify) {
    EvalInputs in = load_eval_inputs(checkpoint, manifest_path);
    VideoIndex vi = index_videos(in.manifest);

    FullVideoMethod method;
    if (method_name == "mv-clip") method = FullVideoMethod::mv_clip;
    else if (method_name == "mv-video") method = FullVideoMethod::mv_video;
    else if (method_name == "caption-avg") method = FullVideoMethod::caption_avg;
    else throw std::invalid_argument("unknown fullvideo method: " + method_name);

    SimilarityTable table = crossmodal_similarity(in.emb.e_t, in.emb.e_v, in.emb.e_a);
    const int n_videos = static_cast<int>(vi.ids.size());
    auto rankings = full_video_rankings(table.s, vi.of_clip, n_videos, vi.clips_of, method, k_vote);

    double r1 = 0, r5 = 0, r10 = 0;
    for (int v = 0; v < n_videos; ++v) {
        size_t rank = 0;
        for (size_t pos = 0; pos < rankings[v].size(); ++pos) {
            if (rankings[v][pos] == v) {
                rank = pos + 1;
                break;
            }
        }
        if (rank <= 1) r1 += 1;
        if (rank <= 5) r5 += 1;
        if (rank <= 10) r10 += 1;
    }
    EvalReport report;
    report.set_config_echo(json{{"command", "eval-fullvideo"},
                                {"checkpoint", checkpoint},
                                {"manifest", manifest_path},
                                {"fullvideo_method", method_name},
                                {"k_vote", k_vote},
                                {"n_videos", n_videos}});
    report.add_rate("R@1", r1 / n_videos);
    report.add_rate("R@5", r5 / n_videos);
    report.add_rate("R@10", r10 / n_videos);

    if (classify) {
        if (!in.manifest.label_features || in.data.labels.empty()) {
            throw io_error("eval-fullvideo --classify requires label_features in the manifest");
        }
        Matd label_emb = project_rows(in.ckpt.params.head(Modality::text), in.data.labels);
        Matd clip_avg(in.emb.e_v.rows(), in.emb.e_v.cols());
        for (size_t i = 0; i < clip_avg.size(); ++i) {
            clip_avg.values()[i] = 0.5 * (in.emb.e_v.values()[i] + in.emb.e_a.values()[i]);
        }
        Matd s_label = matmul_nt(label_emb, clip_avg);
        std::vector<std::vector<int>> label_sets(label_emb.rows());
        for (size_t c = 0; c < label_emb.rows(); ++c) label_sets[c] = {static_cast<int>(c)};

        std::vector<int> gt_class(n_videos, -1);
        for (int v = 0; v < n_videos; ++v) {
            std::map<int, int> counts;
            for (int clip : vi.clips_of[v]) {
                if (in.manifest.clips[clip].gt_class) counts[*in.manifest.clips[clip].gt_class]++;
            }
            if (counts.empty()) throw io_error("eval-fullvideo --classify requires gt classes");
            int best = counts.begin()->first, best_n = counts.begin()->second;
            for (const auto& [cls, cnt] : counts) {
                if (cnt > best_n) {
                    best = cls;
                    best_n = cnt;
                }
            }
            gt_class[v] = best;
        }
        ClassifyResult cr = fullvideo_classify(s_label, label_sets, vi.of_clip, n_videos, gt_class);
        report.add_rate("classify_top1", cr.accuracy);
    }
    write_report(report, out);
    return 0;
}

int run_eval_localize(const std::string& checkpoint, const std::string& manifest_path,
                      const std::string& out, double bg_gamma, double fps, bool znorm,
                      bool per_clip) {
    EvalInputs in = load_eval_inputs(checkpoint, manifest_path);
    if (in.manifest.segments.empty()) {
        throw io_error("eval-localize requires a manifest with ground-truth segments");
    }
    if (!in.manifest.label_features || in.data.labels.empty()) {
        throw io_error("eval-localize requires label_features in the manifest");
    }
    Matd label_emb = project_rows(in.ckpt.params.head(Modality::text), in.data.labels);

    EvalReport report;
    report.set_config_echo(json{{"command", "eval-localize"},
                                {"checkpoint", checkpoint},
                                {"manifest", manifest_path},
                                {"bg_gamma", bg_gamma},
                                {"fps", fps},
                                {"znorm", znorm}});
    double iod = 0, iou = 0, facc = 0, recall = 0;
    size_t n_videos = 0;
    for (const auto& [vid, segs] : in.manifest.segments) {
        const std::vector<size_t>& clip_rows = in.manifest.videos.at(vid);
        std::vector<int> transcript_classes;
        for (const Segment& s : segs) {
            if (s.class_id >= 0) transcript_classes.push_back(s.class_id);
        }
        if (transcript_classes.empty()) continue;

        // frames x transcript-labels similarity, video+audio averaged
        const size_t frames = clip_rows.size();
        Matd scores(frames, transcript_classes.size());
        for (size_t t = 0; t < frames; ++t) {
            // clips within a video are listed by t_start; clip index = row
            size_t clip = clip_rows[t];
            for (size_t c = 0; c < transcript_classes.size(); ++c) {
                double dot = 0.0;
                size_t lbl = static_cast<size_t>(transcript_classes[c]);
                for (size_t j = 0; j < label_emb.cols(); ++j) {
                    dot += label_emb(lbl, j) * 0.5 * (in.emb.e_v(clip, j) + in.emb.e_a(clip, j));
                }
                scores(t, c) = dot;
            }
        }

        std::vector<int> transcript(transcript_classes.size());
        for (size_t c = 0; c < transcript.size(); ++c) transcript[c] = static_cast<int>(c);
        AlignmentResult ar = align_transcript(scores, transcript, bg_gamma, znorm);
        std::vector<int> pred(frames, -1);
        for (size_t t = 0; t < frames; ++t) {
            if (ar.frame_labels[t] >= 0) pred[t] = transcript_classes[ar.frame_labels[t]];
        }
        SegmentTruth truth{segs, fps};
        SegmentScores sc = segment_metrics(pred, truth);

        std::vector<std::pair<size_t, size_t>> intervals;
        for (const Segment& s : segs) {
            if (s.class_id < 0) continue;
            intervals.emplace_back(static_cast<size_t>(std::llround(s.t_start * fps)),
                                   static_cast<size_t>(std::llround(s.t_end * fps)));
        }
        double rc = localize_recall_video(scores, intervals,
                                          per_clip ? LocalizeNorm::per_clip : LocalizeNorm::per_step);

        report.add_rate("IoD", sc.iod, vid);
        report.add_rate("IoU", sc.iou, vid);
        report.add_rate("frame_acc", sc.frame_accuracy, vid);
        report.add_rate("recall", rc, vid);
        iod += sc.iod;
        iou += sc.iou;
        facc += sc.frame_accuracy;
        recall += rc;
        ++n_videos;
    }
    if (n_videos == 0) throw io_error("eval-localize: no videos with action segments");
    report.add_rate("IoD", iod / n_videos);
    report.add_rate("IoU", iou / n_videos);
    report.add_rate("frame_acc", facc / n_videos);
    report.add_rate("recall", recall / n_videos);
    write_report(report, out);
    return 0;
}

int run_eval_cluster(const std::string& checkpoint, const std::string& manifest_path,
                     const std::string& out, int k, const std::string& features, uint64_t seed) {
    EvalInputs in = load_eval_inputs(checkpoint, manifest_path);
    std::vector<size_t> rows;
    std::vector<int> gt;
    for (size_t i = 0; i < in.manifest.clips.size(); ++i) {
        if (in.manifest.clips[i].gt_class) {
            rows.push_back(i);
            gt.push_back(*in.manifest.clips[i].gt_class);
        }
    }
    if (gt.empty()) throw io_error("eval-cluster requires gt classes in the manifest");

    Matd feats;
    if (features == "va") {
        // concatenated video+audio embeddings, the downstream feature layout
        feats = Matd(rows.size(), 2 * in.emb.e_v.cols());
        for (size_t i = 0; i < rows.size(); ++i) {
            std::copy_n(in.emb.e_v.row(rows[i]).data(), in.emb.e_v.cols(), feats.row(i).data());
            std::copy_n(in.emb.e_a.row(rows[i]).data(), in.emb.e_a.cols(),
                        feats.row(i).data() + in.emb.e_v.cols());
        }
    } else {
        const Matd* src = &in.emb.m;
        if (features == "video") src = &in.emb.e_v;
        else if (features == "audio") src = &in.emb.e_a;
        else if (features == "text") src = &in.emb.e_t;
        else if (features != "fused") throw std::invalid_argument("unknown feature selector: " + features);
        feats = Matd(rows.size(), src->cols());
        for (size_t i = 0; i < rows.size(); ++i) {
            std::copy_n(src->row(rows[i]).data(), src->cols(), feats.row(i).data());
        }
    }
    if (k <= 0) k = static_cast<int>(in.manifest.n_classes());
    ClusteringScores sc = clustering_metrics(feats, gt, k, seed);

    EvalReport report;
    report.set_config_echo(json{{"command", "eval-cluster"},
                                {"checkpoint", checkpoint},
                                {"manifest", manifest_path},
                                {"k", k},
                                {"features", features},
                                {"seed", seed}});
    report.add("NMI", sc.nmi);
    report.add("ARI", sc.ari);
    report.add("Acc", sc.acc);
    report.add("mean_entropy", sc.mean_entropy);
    report.add("mean_max_purity", sc.mean_max_purity);
    write_report(report, out);
    return 0;
}

int run_eval_gap(const std::string& checkpoint, const std::string& manifest_path,
                 const std::string& out) {
    EvalInputs in = load_eval_inputs(checkpoint, manifest_path);
    std::vector<uint8_t> flags(in.manifest.clips.size(), 0);
    for (size_t i = 0; i < flags.size(); ++i) flags[i] = in.manifest.clips[i].misaligned ? 1 : 0;
    GapReport gap = alignment_gap(in.emb.e_v, in.emb.e_a, in.emb.e_t, flags);

    EvalReport report;
    report.set_config_echo(json{{"command", "eval-gap"},
                                {"checkpoint", checkpoint},
                                {"manifest", manifest_path},
                                {"n_aligned", gap.n_aligned},
                                {"n_misaligned", gap.n_misaligned}});
    report.add("aligned_cosine", gap.aligned_mean);
    if (gap.misaligned_mean) {
        report.add("misaligned_cosine", *gap.misaligned_mean);
        report.add("gap", gap.aligned_mean - *gap.misaligned_mean);
    }
    write_report(report, out);
    return 0;
}

int run_embed(const std::string& checkpoint, const std::string& manifest_path,
              const std::string& out) {
    EvalInputs in = load_eval_inputs(checkpoint, manifest_path);
    fs::create_directories(out);
    save_matrix(in.emb.e_v, fs::path(out) / "e_v.mcnf");
    save_matrix(in.emb.e_a, fs::path(out) / "e_a.mcnf");
    save_matrix(in.emb.e_t, fs::path(out) / "e_t.mcnf");
    save_matrix(in.emb.m, fs::path(out) / "m.mcnf");
    json rows = json::array();
    for (const ClipRecord& c : in.manifest.clips) rows.push_back(c.clip_id);
    std::ofstream os(fs::path(out) / "rows.json");
    os << rows.dump(2) << "\n";
    std::cout << "wrote embeddings for " << in.manifest.clips.size() << " clips to " << out << "\n";
    return 0;
}

// Expands `--config file` into the flags the flat key=value file encodes,
// spliced in right after the subcommand so explicit flags (parsed last under
// the take-last policy) override file values.
std::vector<std::string> expand_config_args(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::string config_path;
    for (size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
    }
    if (config_path.empty()) return args;

    std::ifstream is(config_path);
    if (!is) throw io_error("cannot open config file: " + config_path);
    std::vector<std::string> injected;
    std::string line;
    while (std::getline(is, line)) {
        auto trim = [](std::string s) {
            size_t a = s.find_first_not_of(" \t\r");
            size_t b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw io_error("config file line is not key=value: " + line);
        }
        injected.push_back("--" + trim(line.substr(0, eq)));
        injected.push_back(trim(line.substr(eq + 1)));
    }

    // splice after the subcommand token (the first non-flag argument)
    size_t sub_pos = 0;
    while (sub_pos < args.size() && args[sub_pos].rfind("-", 0) == 0) ++sub_pos;
    std::vector<std::string> out(args.begin(), args.begin() + sub_pos + 1);
    out.insert(out.end(), injected.begin(), injected.end());
    out.insert(out.end(), args.begin() + sub_pos + 1, args.end());
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"mmclust: joint video/audio/text embedding training and zero-shot evaluation"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
    SyntheticSpec spec;
    std::string gen_out;
    gen->add_option("--n-classes", spec.n_classes);
    gen->add_option("--clips-per-video", spec.clips_per_video);
    gen->add_option("--n-videos", spec.n_videos);
    gen->add_option("--d-v", spec.d_v);
    gen->add_option("--d-a", spec.d_a);
    gen->add_option("--d-t", spec.d_t);
    gen->add_option("--latent-dim", spec.latent_dim);
    gen->add_option("--sigma-v", spec.sigma_v);
    gen->add_option("--sigma-a", spec.sigma_a);
    gen->add_option("--sigma-t", spec.sigma_t);
    gen->add_option("--sigma-latent", spec.sigma_latent);
    gen->add_option("--p-mis", spec.p_mis);
    gen->add_option("--bg-frac", spec.bg_frac);
    gen->add_option("--segments-per-video", spec.segments_per_video);
    gen->add_option("--seed", spec.seed);
    gen->add_option("--corpus-tag", spec.corpus_tag,
                    "draws a different corpus from the same latent space (held-out splits)");
    gen->add_option("--out", gen_out)->required();

    // train
    auto* tr = app.add_subcommand("train", "train the three projection heads");
    TrainConfig tcfg;
    std::string tr_manifest, tr_out, tr_loss = "mms", tr_dtype = "f32";
    bool tr_cluster = true, tr_recon = true;
    tr->add_option("--manifest", tr_manifest)->required();
    tr->add_option("--out", tr_out)->required();
    tr->add_option("--epochs", tcfg.epochs);
    tr->add_option("--batch-size", tcfg.batch_size);
    tr->add_option("--d", tcfg.d);
    tr->add_option("--d-bottleneck", tcfg.d_bottleneck);
    tr->add_option("--k", tcfg.k);
    tr->add_option("--delta", tcfg.loss.delta);
    tr->add_option("--loss", tr_loss)->check(CLI::IsMember({"mms", "nce", "milnce"}));
    tr->add_flag("--cluster,!--no-cluster", tr_cluster, "enable the centroid loss");
    tr->add_flag("--recon,!--no-recon", tr_recon, "enable the reconstruction loss");
    tr->add_option("--milnce-window", tcfg.loss.milnce_window);
    tr->add_option("--lr", tcfg.base_lr);
    tr->add_option("--grad-clip", tcfg.grad_clip);
    tr->add_option("--buffer-capacity", tcfg.buffer_capacity);
    tr->add_option("--i-warm", tcfg.warm_iters);
    tr->add_option("--r-reinit", tcfg.reinit_every);
    tr->add_option("--full-fit-iters", tcfg.full_fit_iters);
    tr->add_option("--seed", tcfg.seed);
    tr->add_option("--checkpoint-every", tcfg.checkpoint_every);
    tr->add_option("--dtype", tr_dtype)->check(CLI::IsMember({"f32", "f64"}));

    // grad-check
    auto* gc = app.add_subcommand("grad-check", "finite-difference gradient check");
    GradCheckConfig gcfg;
    std::string gc_loss = "mms";
    bool gc_cluster = true, gc_recon = true;
    gc->add_option("--seed", gcfg.seed);
    gc->add_option("--loss", gc_loss)->check(CLI::IsMember({"mms", "nce", "milnce"}));
    gc->add_flag("--cluster,!--no-cluster", gc_cluster);
    gc->add_flag("--recon,!--no-recon", gc_recon);
    gc->add_option("--delta", gcfg.loss.delta);

    // eval-retrieval
    auto* er = app.add_subcommand("eval-retrieval", "zero-shot text->(video+audio) clip retrieval");
    std::string er_ckpt, er_manifest, er_out, er_modality = "va";
    bool er_export = false;
    er->add_option("--checkpoint", er_ckpt)->required();
    er->add_option("--manifest", er_manifest)->required();
    er->add_option("--out", er_out)->required();
    er->add_option("--modality", er_modality)->check(CLI::IsMember({"va", "v", "a"}));
    er->add_flag("--export-similarity", er_export, "write the similarity table as MCNF");

    // eval-fullvideo
    auto* ef = app.add_subcommand("eval-fullvideo", "caption-set to full-video retrieval");
    std::string ef_ckpt, ef_manifest, ef_out, ef_method = "caption-avg";
    int ef_kvote = 10;
    bool ef_classify = false;
    ef->add_option("--checkpoint", ef_ckpt)->required();
    ef->add_option("--manifest", ef_manifest)->required();
    ef->add_option("--out", ef_out)->required();
    ef->add_option("--fullvideo-method", ef_method)
        ->check(CLI::IsMember({"mv-clip", "mv-video", "caption-avg"}));
    ef->add_option("--k-vote", ef_kvote);
    ef->add_flag("--classify", ef_classify, "also run zero-shot full-video classification");

    // eval-localize
    auto* el = app.add_subcommand("eval-localize", "transcript alignment and step localization");
    std::string el_ckpt, el_manifest, el_out;
    double el_gamma = 0.0, el_fps = 1.0;
    bool el_noznorm = false, el_perclip = false;
    el->add_option("--checkpoint", el_ckpt)->required();
    el->add_option("--manifest", el_manifest)->required();
    el->add_option("--out", el_out)->required();
    el->add_option("--bg-gamma", el_gamma);
    el->add_option("--fps", el_fps);
    el->add_flag("--no-znorm", el_noznorm, "disable per-frame z-normalization");
    el->add_flag("--per-clip", el_perclip, "per-clip recall normalization variant");

    // eval-cluster
    auto* ec = app.add_subcommand("eval-cluster", "k-means clustering metrics on embeddings");
    std::string ec_ckpt, ec_manifest, ec_out, ec_features = "fused";
    int ec_k = 0;
    uint64_t ec_seed = 0;
    ec->add_option("--checkpoint", ec_ckpt)->required();
    ec->add_option("--manifest", ec_manifest)->required();
    ec->add_option("--out", ec_out)->required();
    ec->add_option("--k", ec_k, "cluster count; 0 means number of classes");
    ec->add_option("--features", ec_features)->check(CLI::IsMember({"fused", "va", "video", "audio", "text"}));
    ec->add_option("--seed", ec_seed);

    // eval-gap
    auto* eg = app.add_subcommand("eval-gap", "aligned vs misaligned cosine to the fused mean");
    std::string eg_ckpt, eg_manifest, eg_out;
    eg->add_option("--checkpoint", eg_ckpt)->required();
    eg->add_option("--manifest", eg_manifest)->required();
    eg->add_option("--out", eg_out)->required();

    // embed
    auto* em = app.add_subcommand("embed", "export per-clip embeddings as MCNF matrices");
    std::string em_ckpt, em_manifest, em_out;
    em->add_option("--checkpoint", em_ckpt)->required();
    em->add_option("--manifest", em_manifest)->required();
    em->add_option("--out", em_out)->required();

    std::string config_path;
    for (CLI::App* sub : app.get_subcommands({})) {
        sub->add_option("--config", config_path,
                        "flat key=value config file; flags override file values");
        for (CLI::Option* opt : sub->get_options()) {
            opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
        }
    }

    try {
        std::vector<std::string> args = expand_config_args(argc, argv);
        std::vector<const char*> cargs{argv[0]};
        for (const std::string& a : args) cargs.push_back(a.c_str());
        app.parse(static_cast<int>(cargs.size()), cargs.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        std::cerr << "run with --help for usage\n";
        return 1;
    } catch (const io_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (gen->parsed()) return run_gen_data(spec, gen_out);
        if (tr->parsed()) {
            tcfg.loss.variant = parse_variant(tr_loss);
            tcfg.loss.enable_cluster = tr_cluster;
            tcfg.loss.enable_recon = tr_recon;
            json cfg{{"command", "train"},
                     {"manifest", tr_manifest},
                     {"out", tr_out},
                     {"epochs", tcfg.epochs},
                     {"batch_size", tcfg.batch_size},
                     {"d", tcfg.d},
                     {"d_bottleneck", tcfg.resolved_bottleneck()},
                     {"k", tcfg.k},
                     {"delta", tcfg.loss.delta},
                     {"loss", tr_loss},
                     {"cluster", tr_cluster},
                     {"recon", tr_recon},
                     {"milnce_window", tcfg.loss.milnce_window},
                     {"lr", tcfg.base_lr},
                     {"grad_clip", tcfg.grad_clip},
                     {"buffer_capacity", tcfg.resolved_buffer_capacity()},
                     {"i_warm", tcfg.warm_iters},
                     {"r_reinit", tcfg.reinit_every},
                     {"seed", tcfg.seed},
                     {"dtype", tr_dtype}};
            echo_config(cfg, tr_out);
            return tr_dtype == "f64" ? run_train_typed<double>(tcfg, tr_manifest, tr_out)
                                     : run_train_typed<float>(tcfg, tr_manifest, tr_out);
        }
        if (gc->parsed()) {
            gcfg.loss.variant = parse_variant(gc_loss);
            gcfg.loss.enable_cluster = gc_cluster;
            gcfg.loss.enable_recon = gc_recon;
            echo_config(json{{"command", "grad-check"},
                             {"loss", gc_loss},
                             {"cluster", gc_cluster},
                             {"recon", gc_recon},
                             {"seed", gcfg.seed}},
                        "");
            return run_grad_check(gcfg);
        }
        if (er->parsed()) return run_eval_retrieval(er_ckpt, er_manifest, er_out, er_modality, er_export);
        if (ef->parsed()) return run_eval_fullvideo(ef_ckpt, ef_manifest, ef_out, ef_method, ef_kvote, ef_classify);
        if (el->parsed()) {
            return run_eval_localize(el_ckpt, el_manifest, el_out, el_gamma, el_fps, !el_noznorm,
                                     el_perclip);
        }
        if (ec->parsed()) return run_eval_cluster(ec_ckpt, ec_manifest, ec_out, ec_k, ec_features, ec_seed);
        if (eg->parsed()) return run_eval_gap(eg_ckpt, eg_manifest, eg_out);
        if (em->parsed()) return run_embed(em_ckpt, em_manifest, em_out);
    } catch (const io_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const numeric_error& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
