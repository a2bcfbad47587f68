#include "cerberus/sparse.hpp"

#include "cerberus/binio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>

namespace cerberus {

SparseMatrix::SparseMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), row_start_(rows + 1, 0), active_(rows, 0) {}

SparseMatrix SparseMatrix::from_entries(std::size_t rows, std::size_t cols,
                                        std::vector<Entry> entries,
                                        std::vector<std::uint8_t> row_active) {
    SparseMatrix m;
    m.rows_ = rows;
    m.cols_ = cols;
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    for (std::size_t e = 0; e < entries.size(); ++e) {
        const Entry& x = entries[e];
        if (x.row >= rows || x.col >= cols) {
            throw Error("sparse entry (" + std::to_string(x.row) + ", " + std::to_string(x.col) +
                        ") out of range");
        }
        if (!std::isfinite(x.value)) throw Error("sparse entry value is not finite");
        if (e > 0 && entries[e - 1].row == x.row && entries[e - 1].col == x.col) {
            throw Error("duplicate sparse entry (" + std::to_string(x.row) + ", " +
                        std::to_string(x.col) + ")");
        }
    }
    m.entries_ = std::move(entries);
    m.index_rows();
    if (row_active.empty()) {
        m.active_.assign(rows, 0);
        for (std::size_t i = 0; i < rows; ++i) {
            m.active_[i] = m.row_start_[i + 1] > m.row_start_[i] ? 1 : 0;
        }
    } else {
        if (row_active.size() != rows) throw Error("row_active size does not match rows");
        m.active_ = std::move(row_active);
    }
    return m;
}

void SparseMatrix::index_rows() {
    row_start_.assign(rows_ + 1, 0);
    for (const auto& e : entries_) ++row_start_[e.row + 1];
    std::partial_sum(row_start_.begin(), row_start_.end(), row_start_.begin());
}

std::span<const Entry> SparseMatrix::row(std::size_t i) const {
    return {entries_.data() + row_start_[i], row_start_[i + 1] - row_start_[i]};
}

std::size_t SparseMatrix::active_rows() const {
    return static_cast<std::size_t>(std::count(active_.begin(), active_.end(), 1));
}

double SparseMatrix::value(std::size_t i, std::size_t j) const {
    auto r = row(i);
    auto it = std::lower_bound(r.begin(), r.end(), j,
                               [](const Entry& e, std::size_t c) { return e.col < c; });
    return (it != r.end() && it->col == j) ? it->value : 0.0;
}

Matrix SparseMatrix::to_dense() const {
    Matrix d = Matrix::Zero(static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(cols_));
    for (const auto& e : entries_) d(e.row, e.col) = e.value;
    return d;
}

void write_sparse(std::ostream& os, const SparseMatrix& m) {
    os.write("TMSP", 4);
    binio::put_u32(os, kSparseVersion);
    binio::put_u64(os, m.rows());
    binio::put_u64(os, m.cols());
    binio::put_u64(os, m.nnz());
    for (const auto& e : m.entries()) {
        binio::put_u32(os, e.row);
        binio::put_u32(os, e.col);
        binio::put_f64(os, e.value);
    }
    for (auto f : m.active_flags()) os.put(static_cast<char>(f));
}

SparseMatrix read_sparse(std::istream& is) {
    binio::expect_magic(is, "TMSP");
    if (auto v = binio::get_u32(is); v != kSparseVersion) {
        throw Error("unsupported sparse matrix version " + std::to_string(v));
    }
    const auto rows = binio::get_u64(is);
    const auto cols = binio::get_u64(is);
    const auto nnz = binio::get_u64(is);
    std::vector<Entry> entries(nnz);
    for (auto& e : entries) {
        e.row = binio::get_u32(is);
        e.col = binio::get_u32(is);
        e.value = binio::get_f64(is);
    }
    std::vector<std::uint8_t> active(rows);
    for (auto& f : active) {
        char c;
        if (!is.get(c)) throw Error("unexpected end of sparse matrix flags");
        f = static_cast<std::uint8_t>(c) ? 1 : 0;
    }
    return SparseMatrix::from_entries(rows, cols, std::move(entries), std::move(active));
}

void write_sparse(const std::filesystem::path& path, const SparseMatrix& m) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open " + path.string() + " for writing");
    write_sparse(os, m);
    if (!os) throw Error("write failed: " + path.string());
}

SparseMatrix read_sparse(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MissingArtifact("missing file " + path.string());
    return read_sparse(is);
}

}  // namespace cerberus
