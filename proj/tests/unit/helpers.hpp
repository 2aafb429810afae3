#pragma once

#include "tensorgp/factor_model.hpp"

#include <Eigen/Dense>

#include <random>
#include <vector>

namespace testutil {

inline tgp::FactorModel random_model(tgp::Decomposition kind, std::vector<int> ranks, int dim, int inducing,
                                     std::uint64_t seed, double ls = 0.3,
                                     tgp::KernelFamily family = tgp::KernelFamily::SquaredExponential) {
    tgp::ModelLayout layout;
    layout.decomposition = kind;
    layout.ranks = std::move(ranks);
    for (int i = 0; i < dim; ++i) {
        tgp::KernelSpec k;
        k.family = family;
        k.length_scale = ls;
        k.nugget = 1e-9;
        layout.kernels.push_back(k);
        layout.inducing_counts.push_back(inducing);
        layout.box.push_back({0.0, 1.0});
    }
    return tgp::initialize_model(layout, seed, 1.0);
}

inline Eigen::MatrixXd random_points(int count, int dim, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    Eigen::MatrixXd p(count, dim);
    for (int m = 0; m < count; ++m)
        for (int j = 0; j < dim; ++j) p(m, j) = u(rng);
    return p;
}

inline std::vector<double> row(const Eigen::MatrixXd& p, Eigen::Index m) {
    std::vector<double> out(static_cast<std::size_t>(p.cols()));
    for (Eigen::Index j = 0; j < p.cols(); ++j) out[static_cast<std::size_t>(j)] = p(m, j);
    return out;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace testutil
