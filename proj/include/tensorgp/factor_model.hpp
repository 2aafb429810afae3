#pragma once

#include "tensorgp/kernels.hpp"
#include "tensorgp/multi_index.hpp"

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

namespace tgp {

enum class Decomposition { CP, TR };

struct Interval {
    double lo = 0.0;
    double hi = 1.0;
    bool operator==(const Interval&) const = default;
};

/// Inducing values of all factor functions along one input dimension.
/// Column c of H holds the values of one factor function at the inducing
/// locations of `gram`.
struct FactorBank {
    KernelSpec spec;
    std::shared_ptr<const GramFactor> gram;
    Eigen::MatrixXd H;
};

/// Solution representation u(x) built from one-dimensional kernel
/// interpolants, combined either as a CP sum of products or as the trace of a
/// tensor-ring product of matrix-valued factors.
///
/// CP: every bank has R columns and u = sum_r prod_i f^i_r(x_i).
/// TR: bank i holds a ranks[i] x ranks[(i+1) % d] matrix-valued factor
/// stored column-major (column c = row + ranks[i] * col), and
/// u = Trace(F^1(x_1) ... F^d(x_d)).
class FactorModel {
public:
    static FactorModel cp(std::vector<FactorBank> banks, int rank, std::vector<Interval> box);
    static FactorModel tr(std::vector<FactorBank> banks, std::vector<int> ranks, std::vector<Interval> box);

    [[nodiscard]] Decomposition decomposition() const noexcept { return kind_; }
    [[nodiscard]] int dim() const noexcept { return static_cast<int>(banks_.size()); }
    /// CP: {R}. TR: the d ring ranks, entry i being the row count of bank i.
    [[nodiscard]] const std::vector<int>& ranks() const noexcept { return ranks_; }
    /// Number of factor-function columns C_i in bank i.
    [[nodiscard]] int columns(int i) const;
    /// Shape of the matrix-valued TR factor along dimension i.
    [[nodiscard]] int core_rows(int i) const;
    [[nodiscard]] int core_cols(int i) const;

    [[nodiscard]] const FactorBank& bank(int i) const { return banks_.at(static_cast<std::size_t>(i)); }
    [[nodiscard]] const std::vector<FactorBank>& banks() const noexcept { return banks_; }
    [[nodiscard]] const std::vector<Interval>& box() const noexcept { return box_; }

    /// Replace H_i. Shape must match and all entries must be finite.
    void set_inducing_values(int i, Eigen::MatrixXd H);

private:
    FactorModel() = default;
    void validate() const;

    Decomposition kind_ = Decomposition::CP;
    std::vector<int> ranks_;
    std::vector<FactorBank> banks_;
    std::vector<Interval> box_;
};

/// Structure of a model to be created: decomposition, ranks, per-dimension
/// kernels and inducing counts over a bounding box.
struct ModelLayout {
    Decomposition decomposition = Decomposition::CP;
    std::vector<int> ranks{10};
    std::vector<KernelSpec> kernels;
    std::vector<int> inducing_counts;
    std::vector<Interval> box;
};

/// Equally spaced inducing locations spanning each box interval; H entries
/// drawn i.i.d. from N(0, init_sd^2) with a seeded generator.
FactorModel initialize_model(const ModelLayout& layout, std::uint64_t seed, double init_sd = 0.1);

double eval_cp(const FactorModel& model, std::span<const double> x, const MultiIndex& deriv);
double eval_tr(const FactorModel& model, std::span<const double> x, const MultiIndex& deriv);
/// Dispatches on the model's decomposition.
double evaluate(const FactorModel& model, std::span<const double> x, const MultiIndex& deriv);

/// Cached interpolation weights at a fixed point set: for each dimension j
/// and order o the rows w_j^(o)(x_{m,j})^T (and their whitened form
/// L_j^{-1} k). Depends only on the points and the Gram factors, so
/// changing H never invalidates it.
class CollocationWeights {
public:
    /// `points` is M x d. Throws PointOutsideBox for points outside the
    /// model's box and UnsupportedDerivativeOrder when a kernel is not smooth
    /// enough for a requested order.
    CollocationWeights(const FactorModel& model, Eigen::MatrixXd points, std::vector<int> orders = {0, 1, 2});

    [[nodiscard]] Eigen::Index size() const noexcept { return points_.rows(); }
    [[nodiscard]] int dim() const noexcept { return static_cast<int>(points_.cols()); }
    [[nodiscard]] const Eigen::MatrixXd& points() const noexcept { return points_; }
    [[nodiscard]] bool has_order(int order) const noexcept;
    [[nodiscard]] const std::vector<int>& orders() const noexcept { return orders_; }
    /// M x N_j table of interpolation weights.
    [[nodiscard]] const Eigen::MatrixXd& weights(int dim, int order) const;
    /// M x N_j table of whitened weights.
    [[nodiscard]] const Eigen::MatrixXd& whitened(int dim, int order) const;

private:
    [[nodiscard]] std::size_t slot(int dim, int order) const;

    Eigen::MatrixXd points_;
    std::vector<int> orders_;
    std::vector<Eigen::MatrixXd> weights_;
    std::vector<Eigen::MatrixXd> whitened_;
};

/// Factor values at every cached point: values(j, o) = W_j^(o) H_j, an
/// M x C_j matrix whose row m is the vector of factor functions (or their
/// o-th derivatives) at x_{m,j}.
class FactorValues {
public:
    FactorValues(const FactorModel& model, const CollocationWeights& cache);
    /// Recompute the tables of one dimension after H_j changed.
    void refresh(const FactorModel& model, const CollocationWeights& cache, int dim);
    [[nodiscard]] const Eigen::MatrixXd& values(int dim, int order) const;

private:
    std::vector<int> orders_;
    std::vector<Eigen::MatrixXd> values_;
};

/// u^(deriv) at every cached point.
Eigen::VectorXd eval_all(const FactorModel& model, const FactorValues& values, const MultiIndex& deriv);
Eigen::VectorXd eval_all(const FactorModel& model, const CollocationWeights& cache, const MultiIndex& deriv);
/// u^(deriv) at cached point m, evaluated by table lookup.
double eval_cached(const FactorModel& model, const CollocationWeights& cache, Eigen::Index m, const MultiIndex& deriv);

/// Per-dimension squared RKHS norm sum_c eta_c^T K_i^{-1} eta_c = Trace(K_i^{-1} H_i H_i^T).
std::vector<double> rkhs_norms(const FactorModel& model);

/// Squared tensor-product RKHS norm of a CP model, sum_{r,l} prod_i (H_i^T K_i^{-1} H_i)_{rl}.
double tensor_rkhs_norm_sq(const FactorModel& model);

/// Rewrite a two-dimensional TR model as the equivalent CP model of rank
/// ranks[0] * ranks[1], using f^1 = vec(F^1^T) and f^2 = vec(F^2).
FactorModel tr_to_cp(const FactorModel& model);

void to_json(nlohmann::json& j, const FactorModel& model);
FactorModel model_from_json(const nlohmann::json& j);
void save_checkpoint(const FactorModel& model, const std::filesystem::path& path);
FactorModel load_checkpoint(const std::filesystem::path& path);

/// Bitwise equality of structure, kernels, locations and inducing values.
bool identical(const FactorModel& a, const FactorModel& b);

}  // namespace tgp
