#include "cerberus/recurrent.hpp"

#include <cmath>

namespace cerberus {
namespace {

using CMap = Eigen::Map<const Matrix>;
using MMap = Eigen::Map<Matrix>;
using CVMap = Eigen::Map<const Eigen::RowVectorXd>;
using MVMap = Eigen::Map<Eigen::RowVectorXd>;

Matrix sigmoid(const Matrix& z) {
    return (1.0 / (1.0 + (-z.array()).exp())).matrix();
}

void xavier(double* w, int rows, int cols, std::mt19937_64& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> u(-a, a);
    for (long i = 0; i < static_cast<long>(rows) * cols; ++i) w[i] = u(rng);
}

struct StepCache {
    Matrix x, h_prev, c_prev, i, f, g, o, c, tanh_c, h;
    std::vector<Matrix> pre, act, mask;  // per dense layer
    Matrix y;
};

}  // namespace

RecurrentNet::Layout RecurrentNet::layout(const RecurrentShape& s) {
    Layout l;
    const std::size_t H = static_cast<std::size_t>(s.hidden);
    std::size_t p = 0;
    l.wx = p;
    p += 4 * H * static_cast<std::size_t>(s.input);
    l.wh = p;
    p += 4 * H * H;
    l.b = p;
    p += 4 * H;
    std::size_t prev = H;
    for (int d : s.dense) {
        l.dw.push_back(p);
        p += static_cast<std::size_t>(d) * prev;
        l.db.push_back(p);
        p += static_cast<std::size_t>(d);
        prev = static_cast<std::size_t>(d);
    }
    l.wo = p;
    p += static_cast<std::size_t>(s.output) * prev;
    l.bo = p;
    p += static_cast<std::size_t>(s.output);
    l.total = p;
    return l;
}

RecurrentNet::RecurrentNet(RecurrentShape shape, std::uint64_t seed) : shape_(std::move(shape)) {
    if (shape_.input < 1 || shape_.hidden < 1 || shape_.output < 1) {
        throw ConfigError("recurrent network sizes must be >= 1");
    }
    for (int d : shape_.dense) {
        if (d < 1) throw ConfigError("dense layer sizes must be >= 1");
    }
    at_ = layout(shape_);
    params_.assign(at_.total, 0.0);
    std::mt19937_64 rng(seed);
    const int H = shape_.hidden;
    xavier(&params_[at_.wx], 4 * H, shape_.input, rng);
    xavier(&params_[at_.wh], 4 * H, H, rng);
    for (int j = H; j < 2 * H; ++j) params_[at_.b + static_cast<std::size_t>(j)] = 1.0;
    int prev = H;
    for (std::size_t l = 0; l < shape_.dense.size(); ++l) {
        xavier(&params_[at_.dw[l]], shape_.dense[l], prev, rng);
        prev = shape_.dense[l];
    }
    xavier(&params_[at_.wo], shape_.output, prev, rng);
}

std::vector<Matrix> RecurrentNet::forward(const std::vector<Matrix>& xs) const {
    std::vector<Matrix> ys;
    const int H = shape_.hidden;
    const double* P = params_.data();
    CMap Wx(P + at_.wx, 4 * H, shape_.input);
    CMap Wh(P + at_.wh, 4 * H, H);
    CVMap b(P + at_.b, 4 * H);
    if (xs.empty()) return ys;
    const auto B = xs[0].rows();
    Matrix h = Matrix::Zero(B, H), c = Matrix::Zero(B, H);
    for (const Matrix& x : xs) {
        Matrix z = x * Wx.transpose() + h * Wh.transpose();
        z.rowwise() += b;
        const Matrix i = sigmoid(z.leftCols(H));
        const Matrix f = sigmoid(z.middleCols(H, H));
        const Matrix g = z.middleCols(2 * H, H).array().tanh().matrix();
        const Matrix o = sigmoid(z.rightCols(H));
        c = (f.array() * c.array() + i.array() * g.array()).matrix();
        h = (o.array() * c.array().tanh()).matrix();
        Matrix a = h;
        int prev = H;
        for (std::size_t l = 0; l < shape_.dense.size(); ++l) {
            const int d = shape_.dense[l];
            CMap W(P + at_.dw[l], d, prev);
            CVMap bl(P + at_.db[l], d);
            Matrix pre = a * W.transpose();
            pre.rowwise() += bl;
            a = pre.cwiseMax(0.0);
            prev = d;
        }
        CMap Wo(P + at_.wo, shape_.output, prev);
        CVMap bo(P + at_.bo, shape_.output);
        Matrix y = a * Wo.transpose();
        y.rowwise() += bo;
        ys.push_back(std::move(y));
    }
    return ys;
}

double RecurrentNet::loss(const std::vector<Matrix>& xs, const std::vector<Matrix>& ys,
                          double dropout, std::mt19937_64* rng, std::vector<double>* grad) const {
    if (xs.size() != ys.size() || xs.empty()) throw Error("sequence and target lengths differ");
    if (dropout < 0 || dropout >= 1) throw ConfigError("dropout must lie in [0, 1)");
    if (dropout > 0 && !rng) throw Error("dropout requires a random stream");
    const int H = shape_.hidden;
    const double* P = params_.data();
    CMap Wx(P + at_.wx, 4 * H, shape_.input);
    CMap Wh(P + at_.wh, 4 * H, H);
    CVMap b(P + at_.b, 4 * H);
    CMap Wo(P + at_.wo, shape_.output,
            shape_.dense.empty() ? H : shape_.dense.back());
    CVMap bo(P + at_.bo, shape_.output);
    const auto B = xs[0].rows();
    const double keep = 1.0 - dropout;
    std::bernoulli_distribution coin(keep);

    std::vector<StepCache> cache(xs.size());
    Matrix h = Matrix::Zero(B, H), c = Matrix::Zero(B, H);
    double sse = 0.0;
    for (std::size_t s = 0; s < xs.size(); ++s) {
        StepCache& k = cache[s];
        k.x = xs[s];
        k.h_prev = h;
        k.c_prev = c;
        Matrix z = k.x * Wx.transpose() + h * Wh.transpose();
        z.rowwise() += b;
        k.i = sigmoid(z.leftCols(H));
        k.f = sigmoid(z.middleCols(H, H));
        k.g = z.middleCols(2 * H, H).array().tanh().matrix();
        k.o = sigmoid(z.rightCols(H));
        k.c = (k.f.array() * c.array() + k.i.array() * k.g.array()).matrix();
        k.tanh_c = k.c.array().tanh().matrix();
        k.h = (k.o.array() * k.tanh_c.array()).matrix();
        h = k.h;
        c = k.c;
        Matrix a = k.h;
        int prev = H;
        for (std::size_t l = 0; l < shape_.dense.size(); ++l) {
            const int d = shape_.dense[l];
            CMap W(P + at_.dw[l], d, prev);
            CVMap bl(P + at_.db[l], d);
            Matrix pre = a * W.transpose();
            pre.rowwise() += bl;
            Matrix mask = Matrix::Ones(B, d);
            if (dropout > 0) {
                for (Eigen::Index r = 0; r < B; ++r) {
                    for (Eigen::Index q = 0; q < d; ++q) mask(r, q) = coin(*rng) ? 1.0 / keep : 0.0;
                }
            }
            a = (pre.cwiseMax(0.0).array() * mask.array()).matrix();
            k.pre.push_back(std::move(pre));
            k.mask.push_back(std::move(mask));
            k.act.push_back(a);
            prev = d;
        }
        k.y = a * Wo.transpose();
        k.y.rowwise() += bo;
        if (ys[s].rows() != B || ys[s].cols() != shape_.output) {
            throw Error("target batch has the wrong shape");
        }
        sse += (k.y - ys[s]).squaredNorm();
    }
    const double N = static_cast<double>(xs.size()) * static_cast<double>(B) * shape_.output;
    if (!grad) return sse / N;

    grad->assign(params_.size(), 0.0);
    double* G = grad->data();
    MMap gWx(G + at_.wx, 4 * H, shape_.input);
    MMap gWh(G + at_.wh, 4 * H, H);
    MVMap gb(G + at_.b, 4 * H);
    MMap gWo(G + at_.wo, Wo.rows(), Wo.cols());
    MVMap gbo(G + at_.bo, shape_.output);

    Matrix dh_next = Matrix::Zero(B, H), dc_next = Matrix::Zero(B, H);
    for (std::size_t s = xs.size(); s-- > 0;) {
        const StepCache& k = cache[s];
        const Matrix dy = (2.0 / N) * (k.y - ys[s]);
        const Matrix& last = k.act.empty() ? k.h : k.act.back();
        gWo.noalias() += dy.transpose() * last;
        gbo += dy.colwise().sum();
        Matrix da = dy * Wo;
        for (std::size_t l = shape_.dense.size(); l-- > 0;) {
            const int d = shape_.dense[l];
            const int prev = l == 0 ? H : shape_.dense[l - 1];
            CMap W(P + at_.dw[l], d, prev);
            MMap gW(G + at_.dw[l], d, prev);
            MVMap gbl(G + at_.db[l], d);
            const Matrix dpre =
                (da.array() * k.mask[l].array() * (k.pre[l].array() > 0.0).cast<double>()).matrix();
            const Matrix& below = l == 0 ? k.h : k.act[l - 1];
            gW.noalias() += dpre.transpose() * below;
            gbl += dpre.colwise().sum();
            da = dpre * W;
        }
        const Matrix dh = da + dh_next;
        const Matrix dc = (dc_next.array() +
                           dh.array() * k.o.array() * (1.0 - k.tanh_c.array().square()))
                              .matrix();
        Matrix dz(B, 4 * H);
        dz.leftCols(H) = (dc.array() * k.g.array() * k.i.array() * (1.0 - k.i.array())).matrix();
        dz.middleCols(H, H) =
            (dc.array() * k.c_prev.array() * k.f.array() * (1.0 - k.f.array())).matrix();
        dz.middleCols(2 * H, H) =
            (dc.array() * k.i.array() * (1.0 - k.g.array().square())).matrix();
        dz.rightCols(H) =
            (dh.array() * k.tanh_c.array() * k.o.array() * (1.0 - k.o.array())).matrix();
        gWx.noalias() += dz.transpose() * k.x;
        gWh.noalias() += dz.transpose() * k.h_prev;
        gb += dz.colwise().sum();
        dh_next = dz * Wh;
        dc_next = (dc.array() * k.f.array()).matrix();
    }
    return sse / N;
}

}  // namespace cerberus
