#pragma once

#include <filesystem>

#include "mmclust/clustering.hpp"
#include "mmclust/model.hpp"

namespace mmclust {

/// On-disk checkpoint: one MCNF file per tensor inside a directory, plus a
/// JSON index with dims, seed, step and the centroid-bank scalar state.
template <class T>
void save_checkpoint(const std::filesystem::path& dir, const ModelParams<T>& params,
                     const CentroidBank<T>& bank, size_t step);

template <class T>
struct Checkpoint {
    ModelParams<T> params;
    CentroidBank<T> bank;
    size_t step = 0;
};

template <class T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& dir);

} // namespace mmclust
