#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "mmclust/matrix.hpp"

namespace mmclust {

/// Feature matrix file, little-endian:
///   magic "MCNF" (4 bytes), u32 version=1, u32 rows, u32 cols,
///   u8 dtype (0=f32, 1=f64), 3 pad bytes, then rows*cols values row-major.
struct McnfHeader {
    uint32_t rows = 0;
    uint32_t cols = 0;
    uint8_t dtype = 0; // 0=f32, 1=f64
};

void save_matrix(const Matf& m, const std::filesystem::path& path);
void save_matrix(const Matd& m, const std::filesystem::path& path);

/// Header only, without reading the payload.
McnfHeader peek_matrix(const std::filesystem::path& path);

/// Loads a matrix, converting value-wise from the stored dtype to T.
/// Round trips are bit-exact when T matches the stored dtype.
template <class T>
Mat<T> load_matrix(const std::filesystem::path& path);

} // namespace mmclust
