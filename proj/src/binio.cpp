#include "cerberus/binio.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace cerberus::binio {
namespace {

template <class T>
void put_le(std::ostream& os, T v) {
    std::array<unsigned char, sizeof(T)> b{};
    std::memcpy(b.data(), &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(b.begin(), b.end());
    }
    os.write(reinterpret_cast<const char*>(b.data()), sizeof(T));
}

template <class T>
T get_le(std::istream& is) {
    std::array<unsigned char, sizeof(T)> b{};
    if (!is.read(reinterpret_cast<char*>(b.data()), sizeof(T))) {
        throw Error("unexpected end of binary stream");
    }
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(b.begin(), b.end());
    }
    T v;
    std::memcpy(&v, b.data(), sizeof(T));
    return v;
}

}  // namespace

void put_u32(std::ostream& os, std::uint32_t v) { put_le(os, v); }
void put_u64(std::ostream& os, std::uint64_t v) { put_le(os, v); }
void put_f32(std::ostream& os, float v) { put_le(os, v); }
void put_f64(std::ostream& os, double v) { put_le(os, v); }
std::uint32_t get_u32(std::istream& is) { return get_le<std::uint32_t>(is); }
std::uint64_t get_u64(std::istream& is) { return get_le<std::uint64_t>(is); }
float get_f32(std::istream& is) { return get_le<float>(is); }
double get_f64(std::istream& is) { return get_le<double>(is); }

void expect_magic(std::istream& is, const char (&magic)[5]) {
    char got[4];
    if (!is.read(got, 4) || std::memcmp(got, magic, 4) != 0) {
        throw Error(std::string("bad magic, expected ") + magic);
    }
}

void write_dense(std::ostream& os, const Matrix& m) {
    os.write("CERB", 4);
    put_u32(os, kDenseVersion);
    put_u64(os, static_cast<std::uint64_t>(m.rows()));
    put_u64(os, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            put_f32(os, static_cast<float>(m(i, j)));
        }
    }
}

Matrix read_dense(std::istream& is) {
    expect_magic(is, "CERB");
    if (auto v = get_u32(is); v != kDenseVersion) {
        throw Error("unsupported dense matrix version " + std::to_string(v));
    }
    auto rows = get_u64(is);
    auto cols = get_u64(is);
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            m(i, j) = get_f32(is);
        }
    }
    return m;
}

void write_dense(const std::filesystem::path& path, const Matrix& m) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open " + path.string() + " for writing");
    write_dense(os, m);
    if (!os) throw Error("write failed: " + path.string());
}

Matrix read_dense(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MissingArtifact("missing file " + path.string());
    return read_dense(is);
}

}  // namespace cerberus::binio
