#include "mmclust/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "mmclust/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "MCNF I/O assumes a little-endian host");

namespace mmclust {

namespace {

constexpr char kMagic[4] = {'M', 'C', 'N', 'F'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& os, uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), 4);
}

uint32_t read_u32(std::istream& is, const std::filesystem::path& path) {
    uint32_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), 4)) {
        throw io_error("truncated MCNF header: " + path.string());
    }
    return v;
}

template <class T>
void save_impl(const Mat<T>& m, const std::filesystem::path& path, uint8_t dtype) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot open for writing: " + path.string());
    os.write(kMagic, 4);
    write_u32(os, kVersion);
    write_u32(os, static_cast<uint32_t>(m.rows()));
    write_u32(os, static_cast<uint32_t>(m.cols()));
    char tail[4] = {static_cast<char>(dtype), 0, 0, 0};
    os.write(tail, 4);
    os.write(reinterpret_cast<const char*>(m.data()),
             static_cast<std::streamsize>(m.size() * sizeof(T)));
    if (!os) throw io_error("write failed: " + path.string());
}

McnfHeader read_header(std::istream& is, const std::filesystem::path& path) {
    char magic[4] = {};
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
        throw io_error("bad MCNF magic: " + path.string());
    }
    uint32_t version = read_u32(is, path);
    if (version != kVersion) {
        throw io_error("unsupported MCNF version " + std::to_string(version) + ": " + path.string());
    }
    McnfHeader h;
    h.rows = read_u32(is, path);
    h.cols = read_u32(is, path);
    char tail[4] = {};
    if (!is.read(tail, 4)) throw io_error("truncated MCNF header: " + path.string());
    h.dtype = static_cast<uint8_t>(tail[0]);
    if (h.dtype > 1) throw io_error("bad MCNF dtype byte: " + path.string());
    return h;
}

template <class Stored, class T>
Mat<T> read_payload(std::istream& is, const McnfHeader& h, const std::filesystem::path& path) {
    uint64_t count = static_cast<uint64_t>(h.rows) * h.cols;
    if (count > std::numeric_limits<size_t>::max() / sizeof(Stored)) {
        throw io_error("MCNF dimension overflow: " + path.string());
    }
    std::vector<Stored> buf(count);
    if (!is.read(reinterpret_cast<char*>(buf.data()),
                 static_cast<std::streamsize>(count * sizeof(Stored)))) {
        throw io_error("truncated MCNF payload: " + path.string());
    }
    is.peek();
    if (!is.eof()) throw io_error("trailing bytes after MCNF payload: " + path.string());
    Mat<T> m(h.rows, h.cols);
    for (uint64_t i = 0; i < count; ++i) {
        Stored v = buf[i];
        if (!std::isfinite(static_cast<double>(v))) {
            throw io_error("non-finite value in MCNF payload: " + path.string());
        }
        m.values()[i] = static_cast<T>(v);
    }
    return m;
}

} // namespace

void save_matrix(const Matf& m, const std::filesystem::path& path) { save_impl(m, path, 0); }
void save_matrix(const Matd& m, const std::filesystem::path& path) { save_impl(m, path, 1); }

McnfHeader peek_matrix(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open: " + path.string());
    return read_header(is, path);
}

template <class T>
Mat<T> load_matrix(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open: " + path.string());
    McnfHeader h = read_header(is, path);
    if (h.dtype == 0) return read_payload<float, T>(is, h, path);
    return read_payload<double, T>(is, h, path);
}

template Mat<float> load_matrix<float>(const std::filesystem::path&);
template Mat<double> load_matrix<double>(const std::filesystem::path&);

} // namespace mmclust
