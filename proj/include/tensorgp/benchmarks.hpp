#pragma once

#include "tensorgp/als_engine.hpp"
#include "tensorgp/geometry.hpp"
#include "tensorgp/linearization.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace tgp {

struct PdeProblem {
    std::string name;
    int dim = 2;
    PdeSystem equations;
    DomainShape domain = DomainShape::unit_box(2);
    /// Reference solution value.
    ScalarField reference;
    /// Analytic derivatives of the reference; empty when the reference is numerical.
    DerivativeField exact;
};

/// u_t + u u_x - nu u_xx = 0 on (t, x) in [0,1] x [-1,1], u(0, x) = -sin(pi x),
/// u(t, +-1) = 0. The t = 1 slice is not a boundary. Reference by Cole-Hopf quadrature.
PdeProblem burgers(double nu);

/// -Laplace(u) + u^3 = a on [0,1]^2 with u = sin(pi x) sin(pi y) + 4 sin(4 pi x) sin(4 pi y).
PdeProblem nonlinear_elliptic();
/// The same equation and solution on another planar domain, with Dirichlet data from u.
PdeProblem nonlinear_elliptic(const DomainShape& domain);

/// |grad u|^2 - eps Laplace(u) = 1 on [0,1]^2, u = 0 on the boundary; reference
/// from the finite-difference oracle on a grid_n x grid_n grid.
PdeProblem eikonal(double eps = 0.1, int grid_n = 401);

/// Laplace(u) + (u^3 - u) = a on [0,1]^d with
/// u = sum_i sin(2 pi beta x_i) cos(2 pi beta x_{i+1}) + sin(2 pi x_i) cos(2 pi x_{i+1}) (cyclic).
PdeProblem allen_cahn(double beta, int d);

/// -div(c grad u) + u^3 = a on [0,1]^6, c = exp(sin(sum cos x_i)),
/// u = exp(sin(beta sum cos x_j)); the divergence is expanded as -c Laplace(u) - grad c . grad u.
PdeProblem darcy6d(double beta = 6.0);

/// Keys: burgers-0.02, burgers-0.001, elliptic, eikonal, allen-cahn-2d-15,
/// allen-cahn-2d-20, allen-cahn-4d-15, allen-cahn-6d-15, darcy-6d.
/// Also accepts elliptic-circle and elliptic-triangle for the irregular domains.
PdeProblem make_problem(std::string_view key);
const std::vector<std::string>& problem_keys();

/// Largest |interior residual| of the exact solution over random interior
/// points. Requires analytic derivatives.
double crafted_residual(const PdeProblem& problem, int points = 1000, std::uint64_t seed = 1);

/// Largest relative interior residual of a numerical reference, with
/// derivatives from central differences of step `h`: |r| / (sum of |term| + |rhs|).
double reference_residual(const PdeProblem& problem, double h, int points, std::uint64_t seed,
                          double margin = 0.05);

/// Viscous Burgers solution through the Cole-Hopf transform, integrated with
/// Gauss-Hermite quadrature. The node count starts at `base_nodes` and doubles
/// until successive values agree to `tol` or `max_nodes` is reached.
class ColeHopfBurgers {
public:
    explicit ColeHopfBurgers(double nu, int base_nodes = 200, int max_nodes = 1600, double tol = 1e-8);
    double operator()(double t, double x) const;
    /// Value with a fixed node count.
    [[nodiscard]] double with_nodes(double t, double x, int nodes) const;
    [[nodiscard]] double nu() const noexcept { return nu_; }

private:
    struct Rule {
        std::vector<double> nodes;
        std::vector<double> log_weights;
    };
    [[nodiscard]] const Rule& rule(int nodes) const;

    double nu_;
    int base_;
    int max_;
    double tol_;
    std::vector<std::pair<int, Rule>> rules_;
};

/// Newton solver for the regularized Eikonal equation on a uniform grid with
/// centered differences and zero Dirichlet data. Queries off the grid use
/// bilinear interpolation.
class FdEikonal {
public:
    /// Throws InvalidArgument for grid_n < 51 and NoConvergence after 500 Newton steps.
    FdEikonal(int grid_n, double eps);

    double operator()(double x, double y) const;
    [[nodiscard]] int grid_n() const noexcept { return n_; }
    [[nodiscard]] double eps() const noexcept { return eps_; }
    /// (grid_n x grid_n) nodal values, entry (i, j) at (i h, j h).
    [[nodiscard]] const Eigen::MatrixXd& values() const noexcept { return u_; }
    [[nodiscard]] int newton_steps() const noexcept { return steps_; }
    [[nodiscard]] double final_residual() const noexcept { return residual_; }

private:
    int n_;
    double eps_;
    Eigen::MatrixXd u_;
    int steps_ = 0;
    double residual_ = 0;
};

/// Shared, lazily solved oracle per (grid_n, eps).
std::shared_ptr<const FdEikonal> fd_eikonal_oracle(int grid_n, double eps);

/// CSV with columns x0..x{d-1},u.
void export_reference_csv(const PdeProblem& problem, const Eigen::MatrixXd& points, const std::filesystem::path& path);

}  // namespace tgp
