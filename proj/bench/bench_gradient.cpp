// Times the dense serial reference kernel against the sparse OpenMP kernel on a random
// target matrix and checks that both agree.

#include "cerberus/kernels.hpp"

#include <CLI11.hpp>
#include <omp.h>

#include <chrono>
#include <iostream>
#include <random>

using namespace cerberus;

namespace {

SparseMatrix random_target(std::size_t m, std::size_t n, double density, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Entry> entries;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (u(rng) < density) {
                entries.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j), u(rng)});
            }
        }
    }
    return SparseMatrix::from_entries(m, n, std::move(entries));
}

template <class F>
double time_ms(int reps, F&& f) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        f();
        const std::chrono::duration<double, std::milli> dt = std::chrono::steady_clock::now() - t0;
        best = std::min(best, dt.count());
    }
    return best;
}

}  // namespace

int main(int argc, char** argv) {
    std::size_t m = 2000, n = 1000;
    int k = 32, reps = 5;
    double density = 0.01;
    CLI::App app{"gradient kernel benchmark"};
    app.add_option("--m", m, "rows");
    app.add_option("--n", n, "columns");
    app.add_option("--k", k, "latent dimension");
    app.add_option("--density", density, "fraction of listed cells");
    app.add_option("--reps", reps, "repetitions (best time is reported)");
    CLI11_PARSE(app, argc, argv);

    std::mt19937_64 rng(7);
    const SparseMatrix s = random_target(m, n, density, rng);
    const TargetMatrix target(s, 0.01, true);
    std::normal_distribution<double> g(0.0, 0.1);
    Matrix R(m, k), C(n, k);
    for (Eigen::Index i = 0; i < R.size(); ++i) R.data()[i] = g(rng);
    for (Eigen::Index i = 0; i < C.size(); ++i) C.data()[i] = g(rng);
    Vector rb = Vector::Zero(m), cb = Vector::Zero(n);
    const kernels::Factors f{R, C, &rb, &cb};

    Matrix gr_ref = Matrix::Zero(m, k), gc_ref = Matrix::Zero(n, k);
    Matrix gr = Matrix::Zero(m, k), gc = Matrix::Zero(n, k);
    double loss_ref = 0.0, loss = 0.0;
    const double t_ref = time_ms(reps, [&] {
        gr_ref.setZero();
        gc_ref.setZero();
        loss_ref = kernels::weighted_recon_reference(target, f, {&gr_ref, &gc_ref, nullptr, nullptr});
    });
    const double t_par = time_ms(reps, [&] {
        gr.setZero();
        gc.setZero();
        loss = kernels::weighted_recon(target, f, {&gr, &gc, nullptr, nullptr});
    });
    const double diff = std::max((gr - gr_ref).cwiseAbs().maxCoeff(), (gc - gc_ref).cwiseAbs().maxCoeff());
    std::cout << "m=" << m << " n=" << n << " k=" << k << " nnz=" << s.nnz()
              << " threads=" << omp_get_max_threads() << "\n"
              << "reference (dense, serial): " << t_ref << " ms\n"
              << "weighted_recon (sparse, OpenMP): " << t_par << " ms\n"
              << "speedup: " << t_ref / t_par << "x\n"
              << "loss difference: " << std::abs(loss - loss_ref) << ", max gradient difference: " << diff
              << "\n";
    const double scale = std::max(1.0, std::abs(loss_ref));
    if (std::abs(loss - loss_ref) > 1e-9 * scale || diff > 1e-9) {
        std::cerr << "kernels disagree\n";
        return 1;
    }
    return 0;
}
