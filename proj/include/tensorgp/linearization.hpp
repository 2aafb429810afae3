#pragma once

#include "tensorgp/factor_model.hpp"
#include "tensorgp/multi_index.hpp"

#include <Eigen/Dense>

#include <functional>
#include <map>
#include <span>
#include <vector>

namespace tgp {

using ScalarField = std::function<double(std::span<const double>)>;

/// Value of d^deriv u at a point, for any representation of u.
using DerivativeField = std::function<double(std::span<const double>, const MultiIndex&)>;

/// coeff(x) * d^deriv u(x).
struct LinearTerm {
    MultiIndex deriv;
    ScalarField coeff;
};

enum class NonlinearKind {
    Power,             ///< coeff * u^p, p >= 2
    ProductAdvection,  ///< coeff * u * du/dx_axis
    GradSquared,       ///< coeff * |grad u|^2
};

struct NonlinearTerm {
    NonlinearKind kind = NonlinearKind::Power;
    int power = 2;
    int axis = 0;
    ScalarField coeff;

    static NonlinearTerm power_of_u(int p, ScalarField coeff);
    static NonlinearTerm advection(int axis, ScalarField coeff);
    static NonlinearTerm grad_squared(ScalarField coeff);
};

/// Residual  sum linear terms + sum nonlinear terms - rhs  of one operator
/// equation (interior P(u) = a or boundary B(u) = b).
struct ResidualSpec {
    int dim = 2;
    std::vector<LinearTerm> linear;
    std::vector<NonlinearTerm> nonlinear;
    ScalarField rhs;

    /// Every derivative of u needed to evaluate the full nonlinear residual.
    [[nodiscard]] std::vector<MultiIndex> required_derivatives() const;
    /// Largest per-dimension order among the required derivatives.
    [[nodiscard]] int max_order() const;
    void validate() const;
};

/// Coefficients and right-hand side of a ResidualSpec sampled at a fixed point set.
struct SampledSpec {
    std::vector<Eigen::VectorXd> linear;
    std::vector<Eigen::VectorXd> nonlinear;
    Eigen::VectorXd rhs;

    static SampledSpec sample(const ResidualSpec& spec, const Eigen::MatrixXd& points);
};

/// Values of u and its derivatives at a point set, keyed by multi-index.
using FieldSamples = std::map<MultiIndex, Eigen::VectorXd>;

FieldSamples sample_field(const FactorModel& model, const FactorValues& values, const std::vector<MultiIndex>& derivs);
FieldSamples sample_field(const DerivativeField& field, const Eigen::MatrixXd& points, const std::vector<MultiIndex>& derivs);

/// A residual that is linear in u: sum_t coeff_t(x_m) d^{deriv_t} u(x_m) + constant_m - rhs_m.
struct LinearizedResidual {
    struct Term {
        MultiIndex deriv;
        Eigen::VectorXd coeff;
    };
    std::vector<Term> terms;
    /// Per-point constants produced by the linearization (e.g. Taylor offsets).
    Eigen::VectorXd constant;
    Eigen::VectorXd rhs;

    /// rhs - constant: the value the linear part must match at each point.
    [[nodiscard]] Eigen::VectorXd target() const { return rhs - constant; }
    /// Surrogate residual evaluated on samples of some u.
    [[nodiscard]] Eigen::VectorXd apply(const FieldSamples& u) const;
};

enum class Linearizer { PartialFreeze, Newton };

/// Which factor of u * u_x partial freezing keeps from the previous iterate.
enum class AdvectionFreeze {
    Multiplier,  ///< u * u_x  ->  u_prev * u_x
    Derivative,  ///< u * u_x  ->  u * u_x_prev
};

/// Linearize around the previous iterate whose samples are `prev`.
///
/// Partial freezing: u^p -> u_prev^{p-1} u; u u_x -> u_prev u_x (or
/// u u_x_prev); |grad u|^2 -> grad u_prev . grad u.
/// Newton: u^p -> p u_prev^{p-1} u + (1-p) u_prev^p;
/// u u_x -> u_prev u_x + u_x_prev u - u_prev u_x_prev;
/// |grad u|^2 -> 2 grad u_prev . grad u - |grad u_prev|^2.
/// Terms sharing a multi-index are merged.
LinearizedResidual linearize(const ResidualSpec& spec, const SampledSpec& sampled, const FieldSamples& prev,
                             Linearizer method, AdvectionFreeze advection = AdvectionFreeze::Multiplier);

LinearizedResidual freeze(const ResidualSpec& spec, const FactorModel& u_prev, const Eigen::MatrixXd& points,
                          AdvectionFreeze advection = AdvectionFreeze::Multiplier);
LinearizedResidual newton(const ResidualSpec& spec, const FactorModel& u_prev, const Eigen::MatrixXd& points);

/// True nonlinear residual at every sampled point.
Eigen::VectorXd residual_values(const ResidualSpec& spec, const SampledSpec& sampled, const FieldSamples& u);

/// True nonlinear residual at one point.
double residual_eval(const ResidualSpec& spec, const FactorModel& u, std::span<const double> point);
double residual_eval(const ResidualSpec& spec, const DerivativeField& u, std::span<const double> point);

}  // namespace tgp
