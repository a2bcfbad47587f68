#include "cerberus/factorize.hpp"

#include "cerberus/adam.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace cerberus {
namespace {

void check_finite(const LossBreakdown& lb) {
    const std::pair<const char*, double> terms[] = {
        {"recon_A", lb.recon_A}, {"recon_C", lb.recon_C}, {"l2", lb.l2}, {"smooth", lb.smooth}};
    for (const auto& [name, v] : terms) {
        if (!std::isfinite(v)) throw Error(std::string("non-finite value in loss term ") + name);
    }
}

// sum_t lambda1 |X_t|^2 where a static list (one matrix) is counted once per timestep.
double l2_term(const std::vector<Matrix>& xs, int T, double lambda1, std::vector<Matrix>* grad) {
    if (xs.empty()) return 0.0;
    const double reps = xs.size() == 1 ? static_cast<double>(T) : 1.0;
    double s = 0.0;
    for (std::size_t t = 0; t < xs.size(); ++t) {
        s += reps * xs[t].squaredNorm();
        if (grad) (*grad)[t] += (2.0 * lambda1 * reps) * xs[t];
    }
    return lambda1 * s;
}

double smooth_term(const std::vector<Matrix>& xs, double lambda2, std::vector<Matrix>* grad) {
    double s = 0.0;
    for (std::size_t t = 0; t + 1 < xs.size(); ++t) {
        const Matrix d = xs[t + 1] - xs[t];
        s += d.squaredNorm();
        if (grad) {
            (*grad)[t + 1] += (2.0 * lambda2) * d;
            (*grad)[t] -= (2.0 * lambda2) * d;
        }
    }
    return lambda2 * s;
}

void check_model_dims(const EmbeddingSet& m, const ModelDims& d, const Variant& v) {
    if (m.variant.kind != v.kind) {
        throw Error("model variant " + m.variant.name + " does not match objective variant " +
                    v.name);
    }
    if (m.dims.T != d.T || m.dims.m != d.m || (v.uses_adjacency && m.dims.n != d.n) ||
        (v.uses_content && m.dims.d != d.d)) {
        throw Error("model dimensions do not match the bundle");
    }
}

}  // namespace

bool HoldoutMask::empty() const {
    auto none = [](const auto& per_t) {
        return std::all_of(per_t.begin(), per_t.end(), [](const auto& v) { return v.empty(); });
    };
    return none(A) && none(C);
}

HoldoutMask make_holdout(const MatrixBundle& bundle, double fraction, std::uint64_t seed) {
    if (!(fraction > 0 && fraction < 1)) throw ConfigError("holdout fraction must lie in (0, 1)");
    std::mt19937_64 rng(seed);
    auto sample = [&](const SparseMatrix& s) {
        std::vector<HeldCell> out;
        for (std::size_t i = 0; i < s.rows(); ++i) {
            if (!s.row_active(i)) continue;
            auto row = s.row(i);
            const auto h = static_cast<std::size_t>(
                std::floor(fraction * static_cast<double>(row.size()) + 0.5));
            if (h == 0) continue;
            std::vector<std::size_t> idx(row.size());
            std::iota(idx.begin(), idx.end(), 0);
            for (std::size_t a = 0; a < h; ++a) {
                std::uniform_int_distribution<std::size_t> pick(a, idx.size() - 1);
                std::swap(idx[a], idx[pick(rng)]);
                const Entry& e = row[idx[a]];
                out.push_back({e.row, e.col, e.value, true});
            }
            std::vector<std::uint32_t> zeros;
            std::size_t p = 0;
            for (std::uint32_t j = 0; j < s.cols(); ++j) {
                if (p < row.size() && row[p].col == j) {
                    ++p;
                } else {
                    zeros.push_back(j);
                }
            }
            const std::size_t hz = std::min(h, zeros.size());
            for (std::size_t a = 0; a < hz; ++a) {
                std::uniform_int_distribution<std::size_t> pick(a, zeros.size() - 1);
                std::swap(zeros[a], zeros[pick(rng)]);
                out.push_back({static_cast<std::uint32_t>(i), zeros[a], 0.0, false});
            }
        }
        return out;
    };
    HoldoutMask mask;
    for (int t = 0; t < bundle.T(); ++t) {
        mask.A.push_back(sample(bundle.A[t]));
        mask.C.push_back(sample(bundle.C[t]));
    }
    return mask;
}

Objective::Objective(const MatrixBundle& bundle, const ModelConfig& cfg, const HoldoutMask* holdout)
    : cfg_(cfg), variant_(make_variant(cfg.variant)) {
    cfg.validate();
    validate_bundle(bundle);
    if (variant_.time_aggregated && bundle.T() != 1) {
        throw Error("variant " + variant_.name + " requires a time-aggregated bundle (T = 1)");
    }
    dims_ = {bundle.T(), bundle.users.size(), bundle.context.size(), bundle.vocab.size()};
    if (holdout && (holdout->A.size() != static_cast<std::size_t>(bundle.T()) ||
                    holdout->C.size() != static_cast<std::size_t>(bundle.T()))) {
        throw Error("holdout mask does not match the bundle's timesteps");
    }
    for (int t = 0; t < bundle.T(); ++t) {
        if (variant_.uses_adjacency) {
            A_.emplace_back(bundle.A[t], cfg.c0, cfg.mask_missing,
                            holdout ? std::span<const HeldCell>(holdout->A[t])
                                    : std::span<const HeldCell>());
        }
        if (variant_.uses_content) {
            C_.emplace_back(bundle.C[t], cfg.c0, cfg.mask_missing,
                            holdout ? std::span<const HeldCell>(holdout->C[t])
                                    : std::span<const HeldCell>());
        }
    }
}

LossBreakdown Objective::evaluate(const EmbeddingSet& model, EmbeddingSet* grad) const {
    check_model_dims(model, dims_, variant_);
    if (grad) grad->set_zero();
    LossBreakdown lb;
    const bool biases = model.has_biases();
    for (int t = 0; t < dims_.T; ++t) {
        const auto ts = static_cast<std::size_t>(t);
        const std::size_t iu = model.U.size() == 1 ? 0 : ts;
        if (variant_.uses_adjacency) {
            const std::size_t iv = model.V.size() == 1 ? 0 : ts;
            kernels::Factors f{model.U[iu], model.V[iv], biases ? &model.bias_user_A[ts] : nullptr,
                               biases ? &model.bias_ctx[ts] : nullptr};
            kernels::Grads g;
            if (grad) {
                g = {&grad->U[iu], &grad->V[iv], biases ? &grad->bias_user_A[ts] : nullptr,
                     biases ? &grad->bias_ctx[ts] : nullptr};
            }
            lb.recon_A += kernels::weighted_recon(A_[ts], f, g);
        }
        if (variant_.uses_content) {
            const std::size_t iw = model.W.size() == 1 ? 0 : ts;
            kernels::Factors f{model.U[iu], model.W[iw], biases ? &model.bias_user_C[ts] : nullptr,
                               biases ? &model.bias_word[ts] : nullptr};
            kernels::Grads g;
            if (grad) {
                g = {&grad->U[iu], &grad->W[iw], biases ? &grad->bias_user_C[ts] : nullptr,
                     biases ? &grad->bias_word[ts] : nullptr};
            }
            lb.recon_C += kernels::weighted_recon(C_[ts], f, g);
        }
    }

    const double l1 = cfg_.lambda1, l2 = cfg_.lambda2;
    lb.l2 = l2_term(model.U, dims_.T, l1, grad ? &grad->U : nullptr) +
            l2_term(model.V, dims_.T, l1, grad ? &grad->V : nullptr) +
            l2_term(model.W, dims_.T, l1, grad ? &grad->W : nullptr);
    lb.smooth = smooth_term(model.U, l2, grad ? &grad->U : nullptr) +
                smooth_term(model.V, l2, grad ? &grad->V : nullptr) +
                smooth_term(model.W, l2, grad ? &grad->W : nullptr);
    lb.total = lb.recon_A + lb.recon_C + lb.l2 + lb.smooth;
    return lb;
}

LossBreakdown loss(const EmbeddingSet& model, const MatrixBundle& bundle, const ModelConfig& cfg) {
    auto lb = Objective(bundle, cfg).evaluate(model);
    check_finite(lb);
    return lb;
}

TrainResult train(const MatrixBundle& bundle, const ModelConfig& cfg, const HoldoutMask* holdout,
                  const EpochCallback& on_epoch) {
    Objective obj(bundle, cfg, holdout);
    TrainResult res;
    res.model = init_model(cfg, obj.dims(), cfg.seed);
    EmbeddingSet grad = res.model;
    EmbeddingSet mom1 = res.model;
    EmbeddingSet mom2 = res.model;
    mom1.set_zero();
    mom2.set_zero();
    auto pb = param_blocks(res.model);
    auto gb = param_blocks(grad);
    auto m1 = param_blocks(mom1);
    auto m2 = param_blocks(mom2);
    const AdamConfig adam{cfg.learning_rate};

    int stalled = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const LossBreakdown lb = obj.evaluate(res.model, &grad);
        if (!std::isfinite(lb.total)) {
            throw Error("training diverged at epoch " + std::to_string(epoch));
        }
        res.trace.push_back(lb);
        if (on_epoch) on_epoch(epoch, lb);
        if (epoch > 0) {
            const double prev = res.trace[res.trace.size() - 2].total;
            const double rel = (prev - lb.total) / std::max(std::abs(prev), 1e-300);
            stalled = rel < cfg.early_stop_tol ? stalled + 1 : 0;
            if (stalled >= cfg.early_stop_patience) break;
        }
        for (std::size_t b = 0; b < pb.size(); ++b) {
            adam_update(adam, pb[b].values, gb[b].values, m1[b].values, m2[b].values, epoch + 1);
            if (!cfg.relax_nonneg && !pb[b].is_bias) {
                for (double& x : pb[b].values) x = std::max(x, 0.0);
            }
        }
        ++res.epochs_run;
    }
    const LossBreakdown last = obj.evaluate(res.model);
    if (!std::isfinite(last.total)) {
        throw Error("training diverged at epoch " + std::to_string(res.epochs_run));
    }
    res.trace.push_back(last);
    return res;
}

GradientCheckReport gradient_check(const EmbeddingSet& model, const MatrixBundle& bundle,
                                   const ModelConfig& cfg, int n_probes, std::uint64_t seed,
                                   const HoldoutMask* holdout) {
    Objective obj(bundle, cfg, holdout);
    EmbeddingSet grad = model;
    const double f0 = obj.evaluate(model, &grad).total;
    // below this the central difference is dominated by rounding in the loss
    const double floor = 1e-6 * std::max(1.0, std::abs(f0));
    EmbeddingSet work = model;
    auto wb = param_blocks(work);
    auto gb = param_blocks(grad);

    std::vector<std::size_t> nonempty;
    for (std::size_t b = 0; b < wb.size(); ++b) {
        if (!wb[b].values.empty()) nonempty.push_back(b);
    }
    GradientCheckReport rep;
    if (nonempty.empty()) return rep;

    constexpr double h = 1e-5;
    std::mt19937_64 rng(seed);
    for (int p = 0; p < n_probes; ++p) {
        const std::size_t b = nonempty[static_cast<std::size_t>(p) % nonempty.size()];
        std::uniform_int_distribution<std::size_t> pick(0, wb[b].values.size() - 1);
        const std::size_t idx = pick(rng);
        double& x = wb[b].values[idx];
        const double orig = x;
        x = orig + h;
        const double up = obj.evaluate(work).total;
        x = orig - h;
        const double down = obj.evaluate(work).total;
        x = orig;
        const double gn = (up - down) / (2.0 * h);
        const double ga = gb[b].values[idx];
        const double rel = std::abs(ga - gn) / std::max(floor, std::abs(ga) + std::abs(gn));
        rep.max_rel_error = std::max(rep.max_rel_error, rel);
        ++rep.probes;
        if (wb[b].is_bias) {
            rep.max_rel_error_bias = std::max(rep.max_rel_error_bias, rel);
            ++rep.bias_probes;
        }
    }
    return rep;
}

Matrix reconstruct(const EmbeddingSet& model, int t, Source which) {
    if (t < 0 || t >= model.T()) {
        throw Error("timestep " + std::to_string(t) + " outside [0, " + std::to_string(model.T()) +
                    ")");
    }
    const auto ts = static_cast<std::size_t>(t);
    const bool adj = which == Source::A;
    if (adj && !model.variant.uses_adjacency) {
        throw Error("variant " + model.variant.name + " has no adjacency factors");
    }
    if (!adj && !model.variant.uses_content) {
        throw Error("variant " + model.variant.name + " has no content factors");
    }
    const Matrix& X = adj ? model.context_at(t) : model.words_at(t);
    Matrix out = model.users_at(t) * X.transpose();
    if (model.has_biases()) {
        const Vector& rb = adj ? model.bias_user_A[ts] : model.bias_user_C[ts];
        const Vector& cb = adj ? model.bias_ctx[ts] : model.bias_word[ts];
        out.colwise() += rb;
        out.rowwise() += cb.transpose();
    }
    return out;
}

ReconMetrics reconstruction_metrics(std::span<const double> nz_abs_errors,
                                    std::span<const double> zero_abs_errors, double c0) {
    ReconMetrics r;
    r.n_nz = nz_abs_errors.size();
    r.n_zero = zero_abs_errors.size();
    const double snz = std::accumulate(nz_abs_errors.begin(), nz_abs_errors.end(), 0.0);
    const double sz = std::accumulate(zero_abs_errors.begin(), zero_abs_errors.end(), 0.0);
    const double denom = static_cast<double>(r.n_nz) + c0 * static_cast<double>(r.n_zero);
    if (r.n_nz + r.n_zero == 0 || !(denom > 0)) throw Error("empty holdout");
    r.nz_mae = r.n_nz ? snz / static_cast<double>(r.n_nz) : 0.0;
    r.zero_mae = r.n_zero ? sz / static_cast<double>(r.n_zero) : 0.0;
    r.wmae = (snz + c0 * sz) / denom;
    return r;
}

ReconMetrics eval_reconstruction(const EmbeddingSet& model, const HoldoutMask& holdout,
                                 Source which, double c0) {
    const auto& per_t = which == Source::A ? holdout.A : holdout.C;
    if (per_t.size() != static_cast<std::size_t>(model.T())) {
        throw Error("holdout mask does not match the model's timesteps");
    }
    std::vector<double> nz, zero;
    for (int t = 0; t < model.T(); ++t) {
        if (per_t[static_cast<std::size_t>(t)].empty()) continue;
        const Matrix pred = reconstruct(model, t, which);
        for (const auto& c : per_t[static_cast<std::size_t>(t)]) {
            const double e = std::abs(pred(c.row, c.col) - c.value);
            (c.observed ? nz : zero).push_back(e);
        }
    }
    return reconstruction_metrics(nz, zero, c0);
}

}  // namespace cerberus
