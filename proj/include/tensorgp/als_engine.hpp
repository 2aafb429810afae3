#pragma once

#include "tensorgp/factor_model.hpp"
#include "tensorgp/geometry.hpp"
#include "tensorgp/linearization.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace tgp {

/// How the per-dimension regularized least-squares problem is factorized.
enum class LeastSquares {
    QR,        ///< Householder QR of the stacked weighted rows and identity block
    Cholesky,  ///< normal equations; squares the condition number
};

struct SolverConfig {
    double alpha_interior = 1e6;
    double alpha_boundary = 1e6;
    int outer_iters = 100;
    int inner_sweeps = 1;
    Linearizer linearizer = Linearizer::Newton;
    AdvectionFreeze advection = AdvectionFreeze::Multiplier;
    LeastSquares least_squares = LeastSquares::QR;
    /// Stop once the relative objective change stays below this for 3 iterations.
    double convergence_tol = 1e-10;
    std::uint64_t seed = 0;

    void validate() const;
};

struct AdamConfig {
    double learning_rate = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int steps = 10000;
    /// Record every k-th step in the trace (the final step is always recorded).
    int record_every = 1;
};

/// Interior operator P(u) = a and boundary operator B(u) = b.
struct PdeSystem {
    ResidualSpec interior;
    ResidualSpec boundary;
};

struct LossRecord {
    int iter = 0;
    double objective = 0;
    double interior_mse = 0;
    double boundary_mse = 0;
    double rkhs_penalty = 0;
    double seconds = 0;
};

struct LossTrace {
    std::vector<LossRecord> records;

    [[nodiscard]] std::size_t size() const noexcept { return records.size(); }
    [[nodiscard]] const LossRecord& back() const { return records.back(); }
    [[nodiscard]] std::string to_csv() const;
    void save_csv(const std::filesystem::path& path) const;
};

struct FitResult {
    FactorModel model;
    LossTrace trace;
    bool diverged = false;
    /// Outer iterations (ALS) or steps (ADAM) actually performed.
    int iterations = 0;
};

/// One row of a per-dimension least-squares problem: the residual at a
/// collocation point is <b, vec(H_i)> - g (column-major vec).
struct DesignRow {
    Eigen::VectorXd b;
    double g = 0;
    double weight = 0;
};

enum class DesignBasis {
    InducingValues,  ///< coordinates are vec(H_i)
    Whitened,        ///< coordinates are vec(L_i^{-1} H_i)
};

/// All rows of dimension i stacked: residual = B vec(.) - g, weighted per row.
struct DesignSystem {
    DesignBasis basis = DesignBasis::InducingValues;
    Eigen::Index N = 0;
    Eigen::Index C = 0;
    Eigen::MatrixXd B;
    Eigen::VectorXd g;
    Eigen::VectorXd weight;

    [[nodiscard]] std::vector<DesignRow> rows() const;
};

/// One group of linearized residual rows (interior or boundary) with its
/// collocation tables and a common row weight.
struct DesignBlock {
    const LinearizedResidual* lin = nullptr;
    const CollocationWeights* cache = nullptr;
    /// Factor values of the current model at the cached points; computed on
    /// the fly when null.
    const FactorValues* values = nullptr;
    double weight = 1.0;
};

/// Assemble the rows of dimension i: for each linearized term with
/// multi-index o, beta collects the factor values of every other dimension
/// (Hadamard product for CP, the ring product F^{i+1} ... F^{i-1} for TR) and
/// the row is sum_t c_t kron(beta_t, w_i^(o_i)).
DesignSystem assemble_dimension(const FactorModel& model, int dim, std::span<const DesignBlock> blocks,
                                DesignBasis basis = DesignBasis::InducingValues);
/// Same, reusing the storage of `out` when the shapes match.
void assemble_dimension(DesignSystem& out, const FactorModel& model, int dim, std::span<const DesignBlock> blocks,
                        DesignBasis basis = DesignBasis::InducingValues);

/// Minimize sum_m weight_m (<b_m, h> - g_m)^2 + h^T (I_C kron K^{-1}) h and
/// return H (N x C). Solved in the whitened coordinates z = (I kron L^{-1}) h.
/// With Cholesky the normal matrix sum_m weight_m b_m b_m^T + I is factorized,
/// retrying once with jitter 1e-12 trace/dim before throwing IllConditioned;
/// QR factorizes the stacked rows [sqrt(weight) B; I] instead. Throws
/// InvalidArgument if N*C exceeds 20000.
Eigen::MatrixXd solve_dimension(DesignSystem system, const GramFactor& gram,
                                LeastSquares method = LeastSquares::Cholesky);
Eigen::MatrixXd solve_dimension(const std::vector<DesignRow>& rows, const GramFactor& gram, Eigen::Index C,
                                LeastSquares method = LeastSquares::Cholesky);
/// Same, overwriting system.B as scratch space.
Eigen::MatrixXd solve_dimension_inplace(DesignSystem& system, const GramFactor& gram,
                                        LeastSquares method = LeastSquares::Cholesky);

/// True nonlinear objective sum_i ||L_i^{-1} H_i||^2 + a1 mean(r_int^2) + a2 mean(r_bdy^2).
LossRecord evaluate_objective(const FactorModel& model, const PdeSystem& pde, const CollocationSet& colloc,
                              const SolverConfig& cfg);

/// RKHS penalty plus the weighted squared surrogate residuals of fixed linearizations.
double surrogate_objective(const FactorModel& model, std::span<const DesignBlock> blocks);

/// Gradient of the true objective with respect to every H_i.
std::vector<Eigen::MatrixXd> objective_gradient(const FactorModel& model, const PdeSystem& pde,
                                                const CollocationSet& colloc, const SolverConfig& cfg);

/// Called after each recorded iteration; return false to stop early.
using FitObserver = std::function<bool(const LossRecord&, const FactorModel&)>;

/// Alternating least squares: each outer iteration linearizes around the
/// current model, then updates dimensions 0..d-1 in closed form using the
/// latest values of the others. Record 0 is the initial model.
FitResult als_fit(FactorModel model, const PdeSystem& pde, const CollocationSet& colloc, const SolverConfig& cfg,
                  const FitObserver& observer = {});

/// Full-batch ADAM on the same objective, parameterized directly by H.
FitResult adam_fit(FactorModel model, const PdeSystem& pde, const CollocationSet& colloc, const SolverConfig& cfg,
                   const AdamConfig& adam, const FitObserver& observer = {});

}  // namespace tgp
