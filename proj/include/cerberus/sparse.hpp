#pragma once

#include "cerberus/common.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

namespace cerberus {

struct Entry {
    std::uint32_t row = 0;
    std::uint32_t col = 0;
    double value = 0.0;

    friend bool operator==(const Entry&, const Entry&) = default;
};

/// Triplet-form matrix kept sorted by (row, col), with a per-row activity flag.
///
/// A row is active when the source had evidence for that user in the window.
/// Inactive rows are masked out of training; whatever entries they hold are ignored.
class SparseMatrix {
public:
    SparseMatrix() = default;
    SparseMatrix(std::size_t rows, std::size_t cols);

    /// Sorts and validates entries. When `row_active` is empty, a row is active iff it
    /// holds at least one entry.
    static SparseMatrix from_entries(std::size_t rows, std::size_t cols,
                                     std::vector<Entry> entries,
                                     std::vector<std::uint8_t> row_active = {});

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t nnz() const { return entries_.size(); }
    const std::vector<Entry>& entries() const { return entries_; }
    std::span<const Entry> row(std::size_t i) const;
    bool row_active(std::size_t i) const { return active_[i] != 0; }
    const std::vector<std::uint8_t>& active_flags() const { return active_; }
    std::size_t active_rows() const;

    /// Stored value or 0.
    double value(std::size_t i, std::size_t j) const;
    Matrix to_dense() const;

    friend bool operator==(const SparseMatrix& a, const SparseMatrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.entries_ == b.entries_ &&
               a.active_ == b.active_;
    }

private:
    void index_rows();

    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<Entry> entries_;
    std::vector<std::size_t> row_start_;
    std::vector<std::uint8_t> active_;
};

/// "TMSP" container: magic, version u32, rows u64, cols u64, nnz u64, nnz records of
/// (row u32, col u32, value f64), then one byte of row_active per row. Little-endian.
inline constexpr std::uint32_t kSparseVersion = 1;

void write_sparse(std::ostream& os, const SparseMatrix& m);
SparseMatrix read_sparse(std::istream& is);
void write_sparse(const std::filesystem::path& path, const SparseMatrix& m);
SparseMatrix read_sparse(const std::filesystem::path& path);

}  // namespace cerberus
