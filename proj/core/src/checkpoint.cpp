#include "mmclust/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

#include "mmclust/errors.hpp"
#include "mmclust/io.hpp"

namespace mmclust {

using nlohmann::json;

template <class T>
void save_checkpoint(const std::filesystem::path& dir, const ModelParams<T>& params,
                     const CentroidBank<T>& bank, size_t step) {
    std::filesystem::create_directories(dir);
    json index;
    index["d"] = params.d;
    index["d_bottleneck"] = params.d_bottleneck;
    index["raw_dims"] = params.raw_dims;
    index["seed"] = params.seed;
    index["step"] = step;
    index["dtype"] = sizeof(T) == 4 ? "f32" : "f64";
    index["tensors"] = json::object();
    for_each_tensor(params, std::function<void(const std::string&, const Mat<T>&)>(
                                [&](const std::string& name, const Mat<T>& t) {
                                    std::string file = name + ".mcnf";
                                    save_matrix(t, dir / file);
                                    index["tensors"][name] =
                                        json{{"file", file}, {"rows", t.rows()}, {"cols", t.cols()}};
                                }));
    index["bank"] = json{{"k", bank.k()},
                         {"dim", bank.dim()},
                         {"capacity", bank.capacity()},
                         {"initialized", bank.initialized()},
                         {"steps_since_full_reinit", bank.steps_since_full_reinit()}};
    if (bank.initialized()) {
        save_matrix(bank.centroids(), dir / "bank.centroids.mcnf");
        index["bank"]["file"] = "bank.centroids.mcnf";
    }
    std::ofstream os(dir / "index.json");
    if (!os) throw io_error("cannot write checkpoint index: " + (dir / "index.json").string());
    os << index.dump(2) << "\n";
}

template <class T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& dir) {
    std::ifstream is(dir / "index.json");
    if (!is) throw io_error("cannot open checkpoint index: " + (dir / "index.json").string());
    json index;
    try {
        is >> index;
    } catch (const json::exception& e) {
        throw io_error("checkpoint index is not valid JSON: " + std::string(e.what()));
    }

    Checkpoint<T> ck;
    try {
        ck.params.d = index.at("d").get<size_t>();
        ck.params.d_bottleneck = index.at("d_bottleneck").get<size_t>();
        ck.params.raw_dims = index.at("raw_dims").get<std::array<size_t, 3>>();
        ck.params.seed = index.at("seed").get<uint64_t>();
        ck.step = index.at("step").get<size_t>();

        const json& tensors = index.at("tensors");
        for_each_tensor(ck.params, std::function<void(const std::string&, Mat<T>&)>(
                                       [&](const std::string& name, Mat<T>& t) {
                                           const json& jt = tensors.at(name);
                                           t = load_matrix<T>(dir / jt.at("file").get<std::string>());
                                           if (t.rows() != jt.at("rows").get<size_t>() ||
                                               t.cols() != jt.at("cols").get<size_t>()) {
                                               throw io_error("checkpoint tensor " + name +
                                                              " shape mismatch");
                                           }
                                       }));

        const json& jb = index.at("bank");
        ck.bank = CentroidBank<T>(jb.at("k").get<int>(), jb.at("dim").get<size_t>(),
                                  jb.at("capacity").get<size_t>(), ck.params.seed);
        if (jb.at("initialized").get<bool>()) {
            Mat<T> c = load_matrix<T>(dir / jb.at("file").get<std::string>());
            ck.bank.restore(std::move(c), true, jb.at("steps_since_full_reinit").get<int>());
        }
    } catch (const json::exception& e) {
        throw io_error("checkpoint index field error: " + std::string(e.what()));
    }

    // model shape coherence
    for (size_t m = 0; m < 3; ++m) {
        if (ck.params.heads[m].w1.rows() != ck.params.raw_dims[m] ||
            ck.params.heads[m].w1.cols() != ck.params.d) {
            throw io_error("checkpoint head dims do not match declared raw_dims/d");
        }
    }
    return ck;
}

template void save_checkpoint<float>(const std::filesystem::path&, const ModelParams<float>&,
                                     const CentroidBank<float>&, size_t);
template void save_checkpoint<double>(const std::filesystem::path&, const ModelParams<double>&,
                                      const CentroidBank<double>&, size_t);
template Checkpoint<float> load_checkpoint<float>(const std::filesystem::path&);
template Checkpoint<double> load_checkpoint<double>(const std::filesystem::path&);

} // namespace mmclust
