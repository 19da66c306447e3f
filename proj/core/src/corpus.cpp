#include "mmclust/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include <json.hpp>

#include "mmclust/errors.hpp"
#include "mmclust/io.hpp"
#include "mmclust/rng.hpp"

namespace mmclust {

using nlohmann::json;

namespace {

json feature_ref_to_json(const FeatureFileRef& f) {
    return json{{"path", f.path}, {"rows", f.rows}, {"cols", f.cols}};
}

FeatureFileRef feature_ref_from_json(const json& j) {
    FeatureFileRef f;
    f.path = j.at("path").get<std::string>();
    f.rows = j.at("rows").get<size_t>();
    f.cols = j.at("cols").get<size_t>();
    return f;
}

void check_feature_file(const FeatureFileRef& ref, const std::filesystem::path& base,
                        const std::string& name) {
    McnfHeader h = peek_matrix(base / ref.path);
    if (h.rows != ref.rows || h.cols != ref.cols) {
        throw io_error("manifest dims for " + name + " (" + std::to_string(ref.rows) + "x" +
                       std::to_string(ref.cols) + ") do not match file header (" +
                       std::to_string(h.rows) + "x" + std::to_string(h.cols) + ")");
    }
}

} // namespace

void save_manifest(const CorpusManifest& m, const std::filesystem::path& path) {
    json j;
    j["clips"] = json::array();
    for (const ClipRecord& c : m.clips) {
        json jc{{"clip_id", c.clip_id}, {"video_id", c.video_id},
                {"t_start", c.t_start}, {"t_end", c.t_end},
                {"v_row", c.v_row},     {"a_row", c.a_row},
                {"t_row", c.t_row},     {"misaligned", c.misaligned}};
        jc["gt_class"] = c.gt_class ? json(*c.gt_class) : json(nullptr);
        j["clips"].push_back(std::move(jc));
    }
    j["video_features"] = feature_ref_to_json(m.video_features);
    j["audio_features"] = feature_ref_to_json(m.audio_features);
    j["text_features"] = feature_ref_to_json(m.text_features);
    if (m.label_features) j["label_features"] = feature_ref_to_json(*m.label_features);
    if (!m.class_names.empty()) j["class_names"] = m.class_names;
    j["videos"] = json::object();
    for (const auto& [vid, idxs] : m.videos) j["videos"][vid] = idxs;
    if (!m.segments.empty()) {
        j["segments"] = json::object();
        for (const auto& [vid, segs] : m.segments) {
            json arr = json::array();
            for (const Segment& s : segs) {
                arr.push_back(json{{"class_id", s.class_id}, {"t_start", s.t_start}, {"t_end", s.t_end}});
            }
            j["segments"][vid] = std::move(arr);
        }
    }
    std::ofstream os(path);
    if (!os) throw io_error("cannot open manifest for writing: " + path.string());
    os << j.dump(2) << "\n";
}

CorpusManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open manifest: " + path.string());
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw io_error("manifest is not valid JSON: " + std::string(e.what()));
    }

    CorpusManifest m;
    try {
        for (const json& jc : j.at("clips")) {
            ClipRecord c;
            c.clip_id = jc.at("clip_id").get<std::string>();
            c.video_id = jc.at("video_id").get<std::string>();
            c.t_start = jc.at("t_start").get<double>();
            c.t_end = jc.at("t_end").get<double>();
            c.v_row = jc.at("v_row").get<size_t>();
            c.a_row = jc.at("a_row").get<size_t>();
            c.t_row = jc.at("t_row").get<size_t>();
            c.misaligned = jc.value("misaligned", false);
            if (jc.contains("gt_class") && !jc.at("gt_class").is_null()) {
                c.gt_class = jc.at("gt_class").get<int>();
            }
            if (c.t_end <= c.t_start) {
                throw io_error("clip " + c.clip_id + ": t_end must exceed t_start");
            }
            m.clips.push_back(std::move(c));
        }
        m.video_features = feature_ref_from_json(j.at("video_features"));
        m.audio_features = feature_ref_from_json(j.at("audio_features"));
        m.text_features = feature_ref_from_json(j.at("text_features"));
        if (j.contains("label_features")) {
            m.label_features = feature_ref_from_json(j.at("label_features"));
        }
        if (j.contains("class_names")) {
            m.class_names = j.at("class_names").get<std::vector<std::string>>();
        }
        for (const auto& [vid, idxs] : j.at("videos").items()) {
            m.videos[vid] = idxs.get<std::vector<size_t>>();
        }
        if (j.contains("segments")) {
            for (const auto& [vid, arr] : j.at("segments").items()) {
                std::vector<Segment> segs;
                for (const json& js : arr) {
                    segs.push_back(Segment{js.at("class_id").get<int>(),
                                           js.at("t_start").get<double>(),
                                           js.at("t_end").get<double>()});
                }
                m.segments[vid] = std::move(segs);
            }
        }
    } catch (const json::exception& e) {
        throw io_error("manifest field error: " + std::string(e.what()));
    }

    // row indices and per-video ordering
    for (const ClipRecord& c : m.clips) {
        if (c.v_row >= m.video_features.rows || c.a_row >= m.audio_features.rows ||
            c.t_row >= m.text_features.rows) {
            throw io_error("clip " + c.clip_id + ": feature row index out of range");
        }
    }
    for (const auto& [vid, idxs] : m.videos) {
        double prev_start = -std::numeric_limits<double>::infinity();
        double prev_end = -std::numeric_limits<double>::infinity();
        for (size_t idx : idxs) {
            if (idx >= m.clips.size()) throw io_error("videos map: clip index out of range");
            const ClipRecord& c = m.clips[idx];
            if (c.t_start < prev_start) {
                throw io_error("video " + vid + ": clips not ordered by t_start");
            }
            if (c.t_start < prev_end) {
                std::cerr << "warning: video " << vid << " has overlapping clips\n";
            }
            prev_start = c.t_start;
            prev_end = c.t_end;
        }
    }
    for (const auto& [vid, segs] : m.segments) {
        for (size_t i = 0; i + 1 < segs.size(); ++i) {
            if (std::abs(segs[i].t_end - segs[i + 1].t_start) > 1e-9) {
                throw io_error("video " + vid + ": segments must be ordered, covering and non-overlapping");
            }
        }
    }

    const std::filesystem::path base = path.parent_path();
    check_feature_file(m.video_features, base, "video_features");
    check_feature_file(m.audio_features, base, "audio_features");
    check_feature_file(m.text_features, base, "text_features");
    if (m.label_features) check_feature_file(*m.label_features, base, "label_features");
    return m;
}

template <class T>
CorpusData<T> load_corpus_data(const CorpusManifest& m, const std::filesystem::path& manifest_path) {
    const std::filesystem::path base = manifest_path.parent_path();
    CorpusData<T> d;
    d.video = load_matrix<T>(base / m.video_features.path);
    d.audio = load_matrix<T>(base / m.audio_features.path);
    d.text = load_matrix<T>(base / m.text_features.path);
    if (m.label_features) d.labels = load_matrix<T>(base / m.label_features->path);
    return d;
}

void SyntheticSpec::validate() const {
    if (n_classes < 1 || clips_per_video < 1 || n_videos < 1 || d_v < 1 || d_a < 1 ||
        d_t < 1 || latent_dim < 1 || segments_per_video < 1) {
        throw std::invalid_argument("SyntheticSpec: all counts must be >= 1");
    }
    if (p_mis < 0.0 || p_mis > 1.0) throw std::invalid_argument("SyntheticSpec: p_mis must be in [0,1]");
    if (bg_frac < 0.0 || bg_frac >= 1.0) throw std::invalid_argument("SyntheticSpec: bg_frac must be in [0,1)");
    if (sigma_v < 0 || sigma_a < 0 || sigma_t < 0 || sigma_latent < 0) {
        throw std::invalid_argument("SyntheticSpec: sigmas must be non-negative");
    }
    if (bg_frac > 0.0 && segments_per_video > n_classes) {
        throw std::invalid_argument("SyntheticSpec: segments_per_video cannot exceed n_classes");
    }
}

LatentSpace make_latent_space(const SyntheticSpec& spec) {
    spec.validate();
    LatentSpace ls;
    Rng proto_rng(mix_seed(spec.seed, 1));
    ls.prototypes = Matd(spec.n_classes, spec.latent_dim);
    for (double& v : ls.prototypes.values()) v = proto_rng.normal();
    ls.background = Matd(1, spec.latent_dim);
    for (double& v : ls.background.values()) v = proto_rng.normal();

    Rng map_rng(mix_seed(spec.seed, 2));
    double scale = 1.0 / std::sqrt(static_cast<double>(spec.latent_dim));
    auto draw_map = [&](size_t d_out) {
        Matd w(spec.latent_dim, d_out);
        for (double& v : w.values()) v = map_rng.normal() * scale;
        return w;
    };
    ls.w_v = draw_map(spec.d_v);
    ls.w_a = draw_map(spec.d_a);
    ls.w_t = draw_map(spec.d_t);
    return ls;
}

namespace {

// latent row -> feature row through the fixed map, plus feature noise
void emit_features(const Matd& w, const std::vector<double>& x, double sigma, Rng& rng,
                   Matd& out, size_t row) {
    for (size_t j = 0; j < w.cols(); ++j) {
        double acc = 0.0;
        for (size_t k = 0; k < w.rows(); ++k) acc += x[k] * w(k, j);
        out(row, j) = acc + (sigma > 0.0 ? sigma * rng.normal() : 0.0);
    }
}

std::vector<double> latent_sample(const Matd& protos, size_t row, double sigma, Rng& rng) {
    std::vector<double> x(protos.cols());
    for (size_t k = 0; k < protos.cols(); ++k) {
        x[k] = protos(row, k) + (sigma > 0.0 ? sigma * rng.normal() : 0.0);
    }
    return x;
}

std::string video_name(size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "v%04zu", i);
    return buf;
}

std::string clip_name(size_t vid, size_t j) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "v%04zu_c%03zu", vid, j);
    return buf;
}

} // namespace

CorpusManifest gen_synthetic_corpus(const SyntheticSpec& spec, const std::filesystem::path& out_dir) {
    spec.validate();
    LatentSpace ls = make_latent_space(spec);

    const size_t n_clips = spec.n_videos * spec.clips_per_video;
    Matd video_feats(n_clips, spec.d_v);
    Matd audio_feats(n_clips, spec.d_a);
    Matd text_feats(n_clips, spec.d_t);

    CorpusManifest m;
    m.clips.reserve(n_clips);
    for (size_t c = 0; c < spec.n_classes; ++c) m.class_names.push_back("class_" + std::to_string(c));

    Rng clip_rng(mix_seed(mix_seed(spec.seed, 3), spec.corpus_tag));
    const bool localization = spec.bg_frac > 0.0;

    for (size_t v = 0; v < spec.n_videos; ++v) {
        const std::string vid = video_name(v);
        std::vector<int> frame_class(spec.clips_per_video, -1);

        if (!localization) {
            for (size_t j = 0; j < spec.clips_per_video; ++j) {
                frame_class[j] = static_cast<int>(clip_rng.index(spec.n_classes));
            }
        } else {
            // pick distinct classes for this video's ordered action segments
            std::vector<int> order(spec.n_classes);
            for (size_t c = 0; c < spec.n_classes; ++c) order[c] = static_cast<int>(c);
            clip_rng.shuffle(order);
            const size_t n_act = std::min(spec.segments_per_video, spec.clips_per_video);
            // action segment lengths, each >= 1
            size_t act_frames = static_cast<size_t>(
                std::llround(static_cast<double>(spec.clips_per_video) * (1.0 - spec.bg_frac)));
            act_frames = std::clamp(act_frames, n_act, spec.clips_per_video);
            std::vector<size_t> act_len(n_act, 1);
            for (size_t r = 0; r < act_frames - n_act; ++r) act_len[clip_rng.index(n_act)]++;
            // background lengths in the n_act+1 gaps, each >= 0
            std::vector<size_t> bg_len(n_act + 1, 0);
            for (size_t r = 0; r < spec.clips_per_video - act_frames; ++r) {
                bg_len[clip_rng.index(n_act + 1)]++;
            }
            size_t t = 0;
            std::vector<Segment> segs;
            for (size_t s = 0; s < n_act; ++s) {
                if (bg_len[s] > 0) {
                    segs.push_back({-1, double(t), double(t + bg_len[s])});
                    t += bg_len[s];
                }
                for (size_t f = 0; f < act_len[s]; ++f) frame_class[t + f] = order[s];
                segs.push_back({order[s], double(t), double(t + act_len[s])});
                t += act_len[s];
            }
            if (bg_len[n_act] > 0) {
                segs.push_back({-1, double(t), double(t + bg_len[n_act])});
                t += bg_len[n_act];
            }
            m.segments[vid] = std::move(segs);
        }

        for (size_t j = 0; j < spec.clips_per_video; ++j) {
            const size_t row = v * spec.clips_per_video + j;
            const int cls = frame_class[j];
            std::vector<double> x =
                cls >= 0 ? latent_sample(ls.prototypes, static_cast<size_t>(cls), spec.sigma_latent, clip_rng)
                         : latent_sample(ls.background, 0, spec.sigma_latent, clip_rng);
            emit_features(ls.w_v, x, spec.sigma_v, clip_rng, video_feats, row);
            emit_features(ls.w_a, x, spec.sigma_a, clip_rng, audio_feats, row);
            emit_features(ls.w_t, x, spec.sigma_t, clip_rng, text_feats, row);

            ClipRecord rec;
            rec.clip_id = clip_name(v, j);
            rec.video_id = vid;
            rec.t_start = static_cast<double>(j);
            rec.t_end = static_cast<double>(j + 1);
            rec.v_row = rec.a_row = rec.t_row = row;
            rec.gt_class = cls >= 0 ? std::optional<int>(cls) : std::nullopt;
            m.clips.push_back(std::move(rec));
            m.videos[vid].push_back(row);
        }
    }

    // misalignment: replace the text row with one from a different-class clip
    if (spec.p_mis > 0.0) {
        Rng mis_rng(mix_seed(mix_seed(spec.seed, 4), spec.corpus_tag));
        std::vector<size_t> original_t_row(m.clips.size());
        for (size_t i = 0; i < m.clips.size(); ++i) original_t_row[i] = m.clips[i].t_row;
        for (size_t i = 0; i < m.clips.size(); ++i) {
            if (mis_rng.uniform() >= spec.p_mis) continue;
            const std::optional<int> own = m.clips[i].gt_class;
            size_t partner = i;
            for (int attempt = 0; attempt < 64; ++attempt) {
                size_t cand = mis_rng.index(m.clips.size());
                if (m.clips[cand].gt_class != own) {
                    partner = cand;
                    break;
                }
            }
            if (partner == i) continue; // no different-class clip found
            m.clips[i].t_row = original_t_row[partner];
            m.clips[i].misaligned = true;
        }
    }

    // noiseless per-class text features for zero-shot label queries
    Matd label_feats(spec.n_classes, spec.d_t);
    for (size_t c = 0; c < spec.n_classes; ++c) {
        std::vector<double> z(spec.latent_dim);
        for (size_t k = 0; k < spec.latent_dim; ++k) z[k] = ls.prototypes(c, k);
        Rng dummy(0);
        emit_features(ls.w_t, z, 0.0, dummy, label_feats, c);
    }

    std::filesystem::create_directories(out_dir);
    save_matrix(video_feats.cast<float>(), out_dir / "video.mcnf");
    save_matrix(audio_feats.cast<float>(), out_dir / "audio.mcnf");
    save_matrix(text_feats.cast<float>(), out_dir / "text.mcnf");
    save_matrix(label_feats.cast<float>(), out_dir / "labels.mcnf");

    m.video_features = {"video.mcnf", n_clips, spec.d_v};
    m.audio_features = {"audio.mcnf", n_clips, spec.d_a};
    m.text_features = {"text.mcnf", n_clips, spec.d_t};
    m.label_features = FeatureFileRef{"labels.mcnf", spec.n_classes, spec.d_t};
    save_manifest(m, out_dir / "manifest.json");
    return m;
}

std::vector<Batch> make_batches(const CorpusManifest& m, size_t batch_size, uint64_t shuffle_seed) {
    if (batch_size < 2) throw std::invalid_argument("make_batches: batch_size must be >= 2");
    if (batch_size > m.clips.size()) {
        throw std::invalid_argument("make_batches: batch_size larger than corpus");
    }

    // dense video index and within-video position per clip
    std::vector<int> video_idx(m.clips.size(), -1);
    std::vector<int> pos(m.clips.size(), 0);
    int next_video = 0;
    for (const auto& [vid, idxs] : m.videos) {
        for (size_t p = 0; p < idxs.size(); ++p) {
            video_idx[idxs[p]] = next_video;
            pos[idxs[p]] = static_cast<int>(p);
        }
        ++next_video;
    }

    std::vector<size_t> order(m.clips.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(shuffle_seed);
    rng.shuffle(order);

    std::vector<Batch> batches;
    for (size_t start = 0; start + batch_size <= order.size(); start += batch_size) {
        Batch b;
        for (size_t i = start; i < start + batch_size; ++i) {
            b.clip_indices.push_back(order[i]);
            b.video_of.push_back(video_idx[order[i]]);
            b.pos_in_video.push_back(pos[order[i]]);
        }
        batches.push_back(std::move(b));
    }
    return batches;
}

template <class T>
BatchData<T> gather_batch(const CorpusManifest& m, const CorpusData<T>& data, const Batch& batch) {
    const size_t b = batch.clip_indices.size();
    BatchData<T> out{Mat<T>(b, data.video.cols()), Mat<T>(b, data.audio.cols()),
                     Mat<T>(b, data.text.cols())};
    for (size_t i = 0; i < b; ++i) {
        const ClipRecord& c = m.clips[batch.clip_indices[i]];
        std::copy_n(data.video.row(c.v_row).data(), data.video.cols(), out.video.row(i).data());
        std::copy_n(data.audio.row(c.a_row).data(), data.audio.cols(), out.audio.row(i).data());
        std::copy_n(data.text.row(c.t_row).data(), data.text.cols(), out.text.row(i).data());
    }
    return out;
}

template CorpusData<float> load_corpus_data<float>(const CorpusManifest&, const std::filesystem::path&);
template CorpusData<double> load_corpus_data<double>(const CorpusManifest&, const std::filesystem::path&);
template BatchData<float> gather_batch<float>(const CorpusManifest&, const CorpusData<float>&, const Batch&);
template BatchData<double> gather_batch<double>(const CorpusManifest&, const CorpusData<double>&, const Batch&);

} // namespace mmclust
