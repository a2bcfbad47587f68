#pragma once

#include "cerberus/common.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>

namespace cerberus::binio {

// Little-endian primitives. Readers throw Error on a short read.
void put_u32(std::ostream& os, std::uint32_t v);
void put_u64(std::ostream& os, std::uint64_t v);
void put_f32(std::ostream& os, float v);
void put_f64(std::ostream& os, double v);
std::uint32_t get_u32(std::istream& is);
std::uint64_t get_u64(std::istream& is);
float get_f32(std::istream& is);
double get_f64(std::istream& is);

void expect_magic(std::istream& is, const char (&magic)[5]);

/// Dense factor file: "CERB", version u32, rows u64, cols u64, then float32 row-major.
inline constexpr std::uint32_t kDenseVersion = 1;

void write_dense(std::ostream& os, const Matrix& m);
Matrix read_dense(std::istream& is);
void write_dense(const std::filesystem::path& path, const Matrix& m);
Matrix read_dense(const std::filesystem::path& path);

}  // namespace cerberus::binio
