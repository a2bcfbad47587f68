#include "cerberus/kernels.hpp"

#include <algorithm>
#include <numeric>

namespace cerberus {

TargetMatrix::TargetMatrix(const SparseMatrix& source, double zero_weight, bool mask_inactive,
                           std::span<const HeldCell> held)
    : rows_(source.rows()), cols_(source.cols()), zero_weight_(zero_weight) {
    included_.assign(rows_, 1);
    if (mask_inactive) {
        for (std::size_t i = 0; i < rows_; ++i) included_[i] = source.row_active(i) ? 1 : 0;
    }

    std::vector<HeldCell> hs(held.begin(), held.end());
    std::sort(hs.begin(), hs.end(), [](const HeldCell& a, const HeldCell& b) {
        return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    for (std::size_t h = 0; h < hs.size(); ++h) {
        if (hs[h].row >= rows_ || hs[h].col >= cols_) throw Error("held-out cell out of range");
        if (h > 0 && hs[h].row == hs[h - 1].row && hs[h].col == hs[h - 1].col) {
            throw Error("duplicate held-out cell");
        }
    }

    row_start_.assign(rows_ + 1, 0);
    auto hit = hs.begin();
    for (std::size_t i = 0; i < rows_; ++i) {
        auto hend = std::find_if(hit, hs.end(), [i](const HeldCell& c) { return c.row != i; });
        if (included_[i]) {
            auto entries = source.row(i);
            auto e = entries.begin();
            auto hc = hit;
            while (e != entries.end() || hc != hend) {
                if (hc == hend || (e != entries.end() && e->col < hc->col)) {
                    cells_.push_back({e->col, e->value, 1.0});
                    ++e;
                } else if (e == entries.end() || hc->col < e->col) {
                    cells_.push_back({hc->col, 0.0, 0.0});
                    ++hc;
                } else {
                    cells_.push_back({e->col, e->value, 0.0});
                    ++e;
                    ++hc;
                }
            }
        }
        hit = hend;
        row_start_[i + 1] = cells_.size();
    }

    col_start_.assign(cols_ + 1, 0);
    for (const auto& c : cells_) ++col_start_[c.col + 1];
    std::partial_sum(col_start_.begin(), col_start_.end(), col_start_.begin());
    col_refs_.resize(cells_.size());
    std::vector<std::size_t> fill(col_start_.begin(), col_start_.end() - 1);
    for (std::size_t i = 0; i < rows_; ++i) {
        for (std::size_t p = row_start_[i]; p < row_start_[i + 1]; ++p) {
            col_refs_[fill[cells_[p].col]++] = {static_cast<std::uint32_t>(i),
                                                static_cast<std::uint32_t>(p)};
        }
    }
}

namespace kernels {
namespace {

void check_shapes(const TargetMatrix& t, const Factors& f) {
    if (static_cast<std::size_t>(f.rows.rows()) != t.rows() ||
        static_cast<std::size_t>(f.cols.rows()) != t.cols() || f.rows.cols() != f.cols.cols()) {
        throw Error("factor shapes do not match the target matrix");
    }
    if (f.row_bias && static_cast<std::size_t>(f.row_bias->size()) != t.rows()) {
        throw Error("row bias length does not match the target matrix");
    }
    if (f.col_bias && static_cast<std::size_t>(f.col_bias->size()) != t.cols()) {
        throw Error("column bias length does not match the target matrix");
    }
}

}  // namespace

double weighted_recon(const TargetMatrix& target, const Factors& f, const Grads& g) {
    check_shapes(target, f);
    const Matrix& R = f.rows;
    const Matrix& C = f.cols;
    const auto m = static_cast<Eigen::Index>(target.rows());
    const auto n = static_cast<Eigen::Index>(target.cols());
    const auto k = R.cols();
    const double c0 = target.zero_weight();
    const double dn = static_cast<double>(n);

    // Column aggregates for the dense (all-cells) part of the loss.
    const Matrix Gc = C.transpose() * C;
    const Vector sc = C.colwise().sum().transpose();
    Vector rc = Vector::Zero(k);
    double sum_cb = 0.0, sum_cb2 = 0.0;
    if (f.col_bias) {
        rc = C.transpose() * (*f.col_bias);
        sum_cb = f.col_bias->sum();
        sum_cb2 = f.col_bias->squaredNorm();
    }

    std::vector<double> row_loss(static_cast<std::size_t>(m), 0.0);
    std::vector<double> cell_grad(target.listed(), 0.0);

#pragma omp parallel for schedule(dynamic, 32)
    for (Eigen::Index i = 0; i < m; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        if (!target.row_included(ui)) continue;
        const Vector u = R.row(i).transpose();
        const double bu = f.row_bias ? (*f.row_bias)[i] : 0.0;
        const Vector Gu = Gc * u;
        const double us = u.dot(sc);
        const double dense = u.dot(Gu) + 2.0 * bu * us + 2.0 * u.dot(rc) + dn * bu * bu +
                             2.0 * bu * sum_cb + sum_cb2;
        double loss = c0 * dense;
        Vector gu = 2.0 * c0 * (Gu + bu * sc + rc);
        double gbu = 2.0 * c0 * (us + dn * bu + sum_cb);

        const std::size_t off = target.row_offset(ui);
        const auto cells = target.row_cells(ui);
        for (std::size_t p = 0; p < cells.size(); ++p) {
            const auto j = static_cast<Eigen::Index>(cells[p].col);
            const double pred = R.row(i).dot(C.row(j)) + bu + (f.col_bias ? (*f.col_bias)[j] : 0.0);
            const double diff = pred - cells[p].value;
            loss += cells[p].weight * diff * diff - c0 * pred * pred;
            const double gc = 2.0 * (cells[p].weight * diff - c0 * pred);
            cell_grad[off + p] = gc;
            gu.noalias() += gc * C.row(j).transpose();
            gbu += gc;
        }
        if (g.rows) g.rows->row(i) += gu.transpose();
        if (g.row_bias) (*g.row_bias)[i] += gbu;
        row_loss[ui] = loss;
    }

    if (g.cols || g.col_bias) {
        std::vector<Eigen::Index> inc;
        for (Eigen::Index i = 0; i < m; ++i) {
            if (target.row_included(static_cast<std::size_t>(i))) inc.push_back(i);
        }
        Matrix Ri(static_cast<Eigen::Index>(inc.size()), k);
        Vector bi = Vector::Zero(static_cast<Eigen::Index>(inc.size()));
        for (std::size_t r = 0; r < inc.size(); ++r) {
            Ri.row(static_cast<Eigen::Index>(r)) = R.row(inc[r]);
            if (f.row_bias) bi[static_cast<Eigen::Index>(r)] = (*f.row_bias)[inc[r]];
        }
        const Matrix Gr = Ri.transpose() * Ri;
        const Vector sr = Ri.colwise().sum().transpose();
        const Vector rr = Ri.transpose() * bi;
        const double sum_rb = bi.sum();
        const double n_inc = static_cast<double>(inc.size());

#pragma omp parallel for schedule(dynamic, 32)
        for (Eigen::Index j = 0; j < n; ++j) {
            const Vector v = C.row(j).transpose();
            const double bv = f.col_bias ? (*f.col_bias)[j] : 0.0;
            Vector gv = 2.0 * c0 * (Gr * v + rr + bv * sr);
            double gbv = 2.0 * c0 * (v.dot(sr) + sum_rb + n_inc * bv);
            for (const auto& ref : target.col_cells(static_cast<std::size_t>(j))) {
                const double gc = cell_grad[ref.cell];
                gv.noalias() += gc * R.row(ref.row).transpose();
                gbv += gc;
            }
            if (g.cols) g.cols->row(j) += gv.transpose();
            if (g.col_bias) (*g.col_bias)[j] += gbv;
        }
    }

    double total = 0.0;
    for (double l : row_loss) total += l;
    return total;
}

double weighted_recon_reference(const TargetMatrix& target, const Factors& f, const Grads& g) {
    check_shapes(target, f);
    const Matrix& R = f.rows;
    const Matrix& C = f.cols;
    const double c0 = target.zero_weight();
    double total = 0.0;
    for (std::size_t i = 0; i < target.rows(); ++i) {
        if (!target.row_included(i)) continue;
        const auto ii = static_cast<Eigen::Index>(i);
        const auto cells = target.row_cells(i);
        std::size_t p = 0;
        for (std::size_t j = 0; j < target.cols(); ++j) {
            const auto jj = static_cast<Eigen::Index>(j);
            double a = 0.0, w = c0;
            if (p < cells.size() && cells[p].col == j) {
                a = cells[p].value;
                w = cells[p].weight;
                ++p;
            }
            double pred = 0.0;
            for (Eigen::Index q = 0; q < R.cols(); ++q) pred += R(ii, q) * C(jj, q);
            if (f.row_bias) pred += (*f.row_bias)[ii];
            if (f.col_bias) pred += (*f.col_bias)[jj];
            const double diff = pred - a;
            total += w * diff * diff;
            const double gd = 2.0 * w * diff;
            for (Eigen::Index q = 0; q < R.cols(); ++q) {
                if (g.rows) (*g.rows)(ii, q) += gd * C(jj, q);
                if (g.cols) (*g.cols)(jj, q) += gd * R(ii, q);
            }
            if (g.row_bias) (*g.row_bias)[ii] += gd;
            if (g.col_bias) (*g.col_bias)[jj] += gd;
        }
    }
    return total;
}

}  // namespace kernels
}  // namespace cerberus
