#include "tensorgp/benchmarks.hpp"

#include "tensorgp/errors.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <gsl/gsl_integration.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <locale>
#include <map>
#include <mutex>
#include <numbers>
#include <random>
#include <sstream>

namespace tgp {

namespace {

constexpr double pi = std::numbers::pi;

ScalarField constant(double c) {
    return [c](std::span<const double>) { return c; };
}

// d^o/dx^o sin(k x) and cos(k x).
double dsin(double k, double x, int o) {
    switch (o) {
        case 0: return std::sin(k * x);
        case 1: return k * std::cos(k * x);
        case 2: return -k * k * std::sin(k * x);
    }
    throw Error(ErrorCode::UnsupportedDerivativeOrder, "sine derivative order above 2");
}

double dcos(double k, double x, int o) {
    switch (o) {
        case 0: return std::cos(k * x);
        case 1: return -k * std::sin(k * x);
        case 2: return -k * k * std::cos(k * x);
    }
    throw Error(ErrorCode::UnsupportedDerivativeOrder, "cosine derivative order above 2");
}

ResidualSpec dirichlet(int dim, ScalarField data) {
    ResidualSpec s;
    s.dim = dim;
    s.linear = {{MultiIndex::zero(dim), constant(1.0)}};
    s.rhs = std::move(data);
    return s;
}

ScalarField value_of(DerivativeField f, int dim) {
    return [f = std::move(f), dim](std::span<const double> x) { return f(x, MultiIndex::zero(dim)); };
}

double laplacian(const DerivativeField& u, std::span<const double> x, int dim) {
    double s = 0;
    for (int j = 0; j < dim; ++j) s += u(x, MultiIndex::axis(dim, j, 2));
    return s;
}

// -Laplace(u) + u^3 = a with the crafted two-frequency solution.
PdeProblem elliptic_on(const DomainShape& domain, std::string name) {
    DerivativeField u = [](std::span<const double> p, const MultiIndex& d) {
        return dsin(pi, p[0], d[0]) * dsin(pi, p[1], d[1]) + 4 * dsin(4 * pi, p[0], d[0]) * dsin(4 * pi, p[1], d[1]);
    };
    PdeProblem prob;
    prob.name = std::move(name);
    prob.dim = 2;
    prob.domain = domain;
    prob.exact = u;
    prob.reference = value_of(u, 2);
    ResidualSpec& in = prob.equations.interior;
    in.dim = 2;
    in.linear = {{MultiIndex({2, 0}), constant(-1)}, {MultiIndex({0, 2}), constant(-1)}};
    in.nonlinear = {NonlinearTerm::power_of_u(3, constant(1))};
    in.rhs = [u](std::span<const double> x) {
        const double v = u(x, MultiIndex::zero(2));
        return -laplacian(u, x, 2) + v * v * v;
    };
    prob.equations.boundary = dirichlet(2, prob.reference);
    return prob;
}

}  // namespace

// ---------------------------------------------------------------- problems

PdeProblem nonlinear_elliptic() { return elliptic_on(DomainShape::unit_box(2), "elliptic"); }

PdeProblem nonlinear_elliptic(const DomainShape& domain) {
    if (domain.dim() != 2) throw Error(ErrorCode::InvalidArgument, "elliptic benchmark is two-dimensional");
    const char* tag = domain.kind() == ShapeKind::Circle ? "elliptic-circle"
                      : domain.kind() == ShapeKind::Triangle ? "elliptic-triangle"
                                                             : "elliptic";
    return elliptic_on(domain, tag);
}

PdeProblem burgers(double nu) {
    if (!(nu > 0)) throw Error(ErrorCode::InvalidArgument, "viscosity must be positive");
    auto ch = std::make_shared<const ColeHopfBurgers>(nu);
    PdeProblem prob;
    std::ostringstream name;
    name << "burgers-" << nu;
    prob.name = name.str();
    prob.dim = 2;
    prob.domain = DomainShape::box({{0.0, 1.0}, {-1.0, 1.0}}, BoxFaces{{true, true}, {false, true}});
    prob.reference = [ch](std::span<const double> x) { return (*ch)(x[0], x[1]); };
    ResidualSpec& in = prob.equations.interior;
    in.dim = 2;
    in.linear = {{MultiIndex({1, 0}), constant(1)}, {MultiIndex({0, 2}), constant(-nu)}};
    in.nonlinear = {NonlinearTerm::advection(1, constant(1))};
    in.rhs = constant(0);
    prob.equations.boundary = dirichlet(2, [](std::span<const double> x) {
        return std::abs(x[0]) <= 1e-12 ? -std::sin(pi * x[1]) : 0.0;
    });
    return prob;
}

PdeProblem eikonal(double eps, int grid_n) {
    if (!(eps > 0)) throw Error(ErrorCode::InvalidArgument, "eikonal regularization must be positive");
    if (grid_n < 51) throw Error(ErrorCode::InvalidArgument, "eikonal oracle grid must be at least 51");
    PdeProblem prob;
    prob.name = "eikonal";
    prob.dim = 2;
    prob.domain = DomainShape::unit_box(2);
    prob.reference = [grid_n, eps](std::span<const double> x) { return (*fd_eikonal_oracle(grid_n, eps))(x[0], x[1]); };
    ResidualSpec& in = prob.equations.interior;
    in.dim = 2;
    in.linear = {{MultiIndex({2, 0}), constant(-eps)}, {MultiIndex({0, 2}), constant(-eps)}};
    in.nonlinear = {NonlinearTerm::grad_squared(constant(1))};
    in.rhs = constant(1);
    prob.equations.boundary = dirichlet(2, constant(0));
    return prob;
}

PdeProblem allen_cahn(double beta, int d) {
    if (d < 2) throw Error(ErrorCode::InvalidArgument, "Allen-Cahn needs d >= 2");
    const double gamma = 1.0;
    DerivativeField u = [beta, d](std::span<const double> x, const MultiIndex& o) {
        double s = 0;
        for (int i = 0; i < d; ++i) {
            const int n = (i + 1) % d;
            bool other = false;
            for (int j = 0; j < d; ++j)
                if (j != i && j != n && o[j] != 0) other = true;
            if (other) continue;
            const auto xi = x[static_cast<std::size_t>(i)];
            const auto xn = x[static_cast<std::size_t>(n)];
            s += dsin(2 * pi * beta, xi, o[i]) * dcos(2 * pi * beta, xn, o[n]) + dsin(2 * pi, xi, o[i]) * dcos(2 * pi, xn, o[n]);
        }
        return s;
    };
    PdeProblem prob;
    std::ostringstream name;
    name << "allen-cahn-" << d << "d-" << beta;
    prob.name = name.str();
    prob.dim = d;
    prob.domain = DomainShape::unit_box(d);
    prob.exact = u;
    prob.reference = value_of(u, d);
    ResidualSpec& in = prob.equations.interior;
    in.dim = d;
    for (int j = 0; j < d; ++j) in.linear.push_back({MultiIndex::axis(d, j, 2), constant(1)});
    in.linear.push_back({MultiIndex::zero(d), constant(-gamma)});
    in.nonlinear = {NonlinearTerm::power_of_u(3, constant(gamma))};
    in.rhs = [u, d, gamma](std::span<const double> x) {
        const double v = u(x, MultiIndex::zero(d));
        return laplacian(u, x, d) + gamma * (v * v * v - v);
    };
    prob.equations.boundary = dirichlet(d, prob.reference);
    return prob;
}

PdeProblem darcy6d(double beta) {
    constexpr int d = 6;
    auto S = [](std::span<const double> x) {
        double s = 0;
        for (double v : x) s += std::cos(v);
        return s;
    };
    auto c = [S](std::span<const double> x) { return std::exp(std::sin(S(x))); };
    auto dc = [S, c](std::span<const double> x, int j) {
        return c(x) * std::cos(S(x)) * -std::sin(x[static_cast<std::size_t>(j)]);
    };
    DerivativeField u = [S, beta](std::span<const double> x, const MultiIndex& o) {
        const double s = S(x);
        const double v = std::exp(std::sin(beta * s));
        if (o.total() == 0) return v;
        int axis = -1;
        for (int j = 0; j < d; ++j)
            if (o[j] != 0) axis = j;
        if (o[axis] != o.total())
            throw Error(ErrorCode::UnsupportedDerivativeOrder, "mixed derivatives of the Darcy solution are not provided");
        const double xj = x[static_cast<std::size_t>(axis)];
        const double q = -beta * std::sin(xj);
        const double cb = std::cos(beta * s), sb = std::sin(beta * s);
        if (o.total() == 1) return v * cb * q;
        return v * cb * cb * q * q - v * sb * q * q - v * cb * beta * std::cos(xj);
    };
    PdeProblem prob;
    prob.name = "darcy-6d";
    prob.dim = d;
    prob.domain = DomainShape::unit_box(d);
    prob.exact = u;
    prob.reference = value_of(u, d);
    ResidualSpec& in = prob.equations.interior;
    in.dim = d;
    for (int j = 0; j < d; ++j) {
        in.linear.push_back({MultiIndex::axis(d, j, 2), [c](std::span<const double> x) { return -c(x); }});
        in.linear.push_back({MultiIndex::axis(d, j, 1), [dc, j](std::span<const double> x) { return -dc(x, j); }});
    }
    in.nonlinear = {NonlinearTerm::power_of_u(3, constant(1))};
    in.rhs = [u, c, dc](std::span<const double> x) {
        double a = 0;
        for (int j = 0; j < d; ++j)
            a += -c(x) * u(x, MultiIndex::axis(d, j, 2)) - dc(x, j) * u(x, MultiIndex::axis(d, j, 1));
        const double v = u(x, MultiIndex::zero(d));
        return a + v * v * v;
    };
    prob.equations.boundary = dirichlet(d, prob.reference);
    return prob;
}

const std::vector<std::string>& problem_keys() {
    static const std::vector<std::string> keys{"burgers-0.02",     "burgers-0.001",    "elliptic",
                                               "eikonal",          "allen-cahn-2d-15", "allen-cahn-2d-20",
                                               "allen-cahn-4d-15", "allen-cahn-6d-15", "darcy-6d"};
    return keys;
}

PdeProblem make_problem(std::string_view key) {
    PdeProblem p = [&]() -> PdeProblem {
        if (key == "burgers-0.02") return burgers(0.02);
        if (key == "burgers-0.001") return burgers(0.001);
        if (key == "elliptic") return nonlinear_elliptic();
        if (key == "elliptic-circle") return nonlinear_elliptic(DomainShape::circle({0.5, 0.5}, 0.5));
        if (key == "elliptic-triangle") return nonlinear_elliptic(DomainShape::triangle({0, 0}, {1, 0}, {0.5, 1}));
        if (key == "eikonal") return eikonal(0.1, 401);
        if (key == "allen-cahn-2d-15") return allen_cahn(15, 2);
        if (key == "allen-cahn-2d-20") return allen_cahn(20, 2);
        if (key == "allen-cahn-4d-15") return allen_cahn(15, 4);
        if (key == "allen-cahn-6d-15") return allen_cahn(15, 6);
        if (key == "darcy-6d") return darcy6d(6.0);
        throw Error(ErrorCode::ConfigError, "unknown problem key '" + std::string(key) + "'");
    }();
    p.name = std::string(key);
    if (p.exact) {
        const double r = crafted_residual(p, 1000, 1);
        if (!(r <= 1e-8))
            throw Error(ErrorCode::InvalidArgument, "reference of '" + p.name + "' fails its residual self-check");
    }
    return p;
}

double crafted_residual(const PdeProblem& problem, int points, std::uint64_t seed) {
    if (!problem.exact) throw Error(ErrorCode::InvalidArgument, "problem has no analytic derivatives");
    const CollocationSet pts = random_sample(problem.domain, points, 1, seed);
    double worst = 0;
    std::vector<double> x(static_cast<std::size_t>(problem.dim));
    for (Eigen::Index m = 0; m < pts.interior.rows(); ++m) {
        for (int j = 0; j < problem.dim; ++j) x[static_cast<std::size_t>(j)] = pts.interior(m, j);
        worst = std::max(worst, std::abs(residual_eval(problem.equations.interior, problem.exact, x)));
    }
    return worst;
}

double reference_residual(const PdeProblem& problem, double h, int points, std::uint64_t seed, double margin) {
    const ResidualSpec& spec = problem.equations.interior;
    const int d = problem.dim;
    // Central differences of the reference, up to second order per axis.
    DerivativeField fd = [&](std::span<const double> x, const MultiIndex& o) {
        std::vector<double> y(x.begin(), x.end());
        auto f = [&](const std::vector<double>& p) { return problem.reference(p); };
        int axis = -1;
        for (int j = 0; j < d; ++j)
            if (o[j] != 0) axis = j;
        if (axis < 0) return f(y);
        if (o.total() != o[axis]) throw Error(ErrorCode::UnsupportedDerivativeOrder, "mixed finite differences unsupported");
        const auto a = static_cast<std::size_t>(axis);
        const double x0 = y[a];
        y[a] = x0 + h;
        const double up = f(y);
        y[a] = x0 - h;
        const double dn = f(y);
        y[a] = x0;
        if (o[axis] == 1) return (up - dn) / (2 * h);
        return (up - 2 * f(y) + dn) / (h * h);
    };
    std::vector<Interval> inner = problem.domain.bounding_box();
    for (Interval& iv : inner) {
        const double w = iv.hi - iv.lo;
        iv.lo += margin * w;
        iv.hi -= margin * w;
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0, 1);
    double worst = 0;
    std::vector<double> x(static_cast<std::size_t>(d));
    for (int m = 0; m < points; ++m) {
        for (int j = 0; j < d; ++j) {
            const Interval& iv = inner[static_cast<std::size_t>(j)];
            x[static_cast<std::size_t>(j)] = iv.lo + unit(rng) * (iv.hi - iv.lo);
        }
        // Scale: sum of the magnitudes of every term.
        double scale = std::abs(spec.rhs(x));
        for (const LinearTerm& t : spec.linear) scale += std::abs(t.coeff(x) * fd(x, t.deriv));
        const MultiIndex zero = MultiIndex::zero(d);
        for (const NonlinearTerm& t : spec.nonlinear) {
            const double c = t.coeff(x);
            switch (t.kind) {
                case NonlinearKind::Power: scale += std::abs(c * std::pow(fd(x, zero), t.power)); break;
                case NonlinearKind::ProductAdvection:
                    scale += std::abs(c * fd(x, zero) * fd(x, MultiIndex::axis(d, t.axis, 1)));
                    break;
                case NonlinearKind::GradSquared:
                    for (int j = 0; j < d; ++j) scale += std::abs(c) * std::pow(fd(x, MultiIndex::axis(d, j, 1)), 2);
                    break;
            }
        }
        const double r = residual_eval(spec, fd, x);
        worst = std::max(worst, std::abs(r) / std::max(scale, 1e-300));
    }
    return worst;
}

// ---------------------------------------------------------------- Cole-Hopf

ColeHopfBurgers::ColeHopfBurgers(double nu, int base_nodes, int max_nodes, double tol)
    : nu_(nu), base_(base_nodes), max_(max_nodes), tol_(tol) {
    if (!(nu > 0) || base_nodes < 2 || max_nodes < base_nodes)
        throw Error(ErrorCode::InvalidArgument, "invalid Cole-Hopf quadrature settings");
    for (int n = base_; n <= max_; n *= 2) {
        gsl_integration_fixed_workspace* w =
            gsl_integration_fixed_alloc(gsl_integration_fixed_hermite, static_cast<std::size_t>(n), 0.0, 1.0, 0.0, 0.0);
        if (!w) throw Error(ErrorCode::InvalidArgument, "Gauss-Hermite rule allocation failed");
        Rule r;
        const double* xs = gsl_integration_fixed_nodes(w);
        const double* ws = gsl_integration_fixed_weights(w);
        for (int k = 0; k < n; ++k) {
            if (!(ws[k] > 0)) continue;  // underflowed tail weights contribute nothing
            r.nodes.push_back(xs[k]);
            r.log_weights.push_back(std::log(ws[k]));
        }
        gsl_integration_fixed_free(w);
        rules_.emplace_back(n, std::move(r));
    }
}

const ColeHopfBurgers::Rule& ColeHopfBurgers::rule(int nodes) const {
    for (const auto& [n, r] : rules_)
        if (n == nodes) return r;
    throw Error(ErrorCode::InvalidArgument, "no Gauss-Hermite rule with " + std::to_string(nodes) + " nodes");
}

double ColeHopfBurgers::with_nodes(double t, double x, int nodes) const {
    if (t <= 0) return -std::sin(pi * x);
    const Rule& r = rule(nodes);
    // u = -int sin(pi y) f(y) e^{-z^2} dz / int f(y) e^{-z^2} dz, y = x - sqrt(4 nu t) z,
    // f(y) = exp(-cos(pi y) / (2 pi nu)); sums are taken in log-sum-exp form.
    const double s = std::sqrt(4 * nu_ * t);
    const double k = 1.0 / (2 * pi * nu_);
    double top = -std::numeric_limits<double>::infinity();
    std::vector<double> logs(r.nodes.size());
    for (std::size_t q = 0; q < r.nodes.size(); ++q) {
        const double y = x - s * r.nodes[q];
        logs[q] = r.log_weights[q] - k * std::cos(pi * y);
        top = std::max(top, logs[q]);
    }
    double num = 0, den = 0;
    for (std::size_t q = 0; q < r.nodes.size(); ++q) {
        const double e = std::exp(logs[q] - top);
        num += std::sin(pi * (x - s * r.nodes[q])) * e;
        den += e;
    }
    return -num / den;
}

double ColeHopfBurgers::operator()(double t, double x) const {
    if (t <= 0) return -std::sin(pi * x);
    double prev = with_nodes(t, x, base_);
    for (int n = base_ * 2; n <= max_; n *= 2) {
        const double cur = with_nodes(t, x, n);
        if (std::abs(cur - prev) <= tol_) return cur;
        prev = cur;
    }
    return prev;
}

// ---------------------------------------------------------------- FD Eikonal

FdEikonal::FdEikonal(int grid_n, double eps) : n_(grid_n), eps_(eps) {
    if (grid_n < 51) throw Error(ErrorCode::InvalidArgument, "finite-difference grid must have at least 51 nodes");
    if (!(eps > 0)) throw Error(ErrorCode::InvalidArgument, "eikonal regularization must be positive");
    const int n = n_;
    const int k = n - 2;
    const double h = 1.0 / (n - 1);
    const double e = eps_ / (h * h);
    auto idx = [k](int i, int j) { return (i - 1) + k * (j - 1); };

    // Start from the distance to the boundary.
    u_ = Eigen::MatrixXd::Zero(n, n);
    for (int i = 1; i < n - 1; ++i)
        for (int j = 1; j < n - 1; ++j) u_(i, j) = std::min({i * h, 1 - i * h, j * h, 1 - j * h});

    auto residual = [&](const Eigen::MatrixXd& u, Eigen::VectorXd& F) {
        F.resize(static_cast<Eigen::Index>(k) * k);
        for (int j = 1; j < n - 1; ++j)
            for (int i = 1; i < n - 1; ++i) {
                const double ux = (u(i + 1, j) - u(i - 1, j)) / (2 * h);
                const double uy = (u(i, j + 1) - u(i, j - 1)) / (2 * h);
                const double lap = u(i + 1, j) + u(i - 1, j) + u(i, j + 1) + u(i, j - 1) - 4 * u(i, j);
                F[idx(i, j)] = ux * ux + uy * uy - e * lap - 1.0;
            }
    };

    Eigen::VectorXd F;
    residual(u_, F);
    Eigen::SparseMatrix<double> J(static_cast<Eigen::Index>(k) * k, static_cast<Eigen::Index>(k) * k);
    std::vector<Eigen::Triplet<double>> trip;
    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
    bool analyzed = false;
    for (steps_ = 0; F.lpNorm<Eigen::Infinity>() > 1e-10; ++steps_) {
        if (steps_ >= 500) throw Error(ErrorCode::NoConvergence, "eikonal Newton iteration did not converge in 500 steps");
        trip.clear();
        for (int j = 1; j < n - 1; ++j)
            for (int i = 1; i < n - 1; ++i) {
                const int row = idx(i, j);
                const double ux = (u_(i + 1, j) - u_(i - 1, j)) / (2 * h);
                const double uy = (u_(i, j + 1) - u_(i, j - 1)) / (2 * h);
                trip.emplace_back(row, row, 4 * e);
                if (i + 1 < n - 1) trip.emplace_back(row, idx(i + 1, j), ux / h - e);
                if (i - 1 > 0) trip.emplace_back(row, idx(i - 1, j), -ux / h - e);
                if (j + 1 < n - 1) trip.emplace_back(row, idx(i, j + 1), uy / h - e);
                if (j - 1 > 0) trip.emplace_back(row, idx(i, j - 1), -uy / h - e);
            }
        J.setFromTriplets(trip.begin(), trip.end());
        if (!analyzed) {
            lu.analyzePattern(J);
            analyzed = true;
        }
        lu.factorize(J);
        if (lu.info() != Eigen::Success) throw Error(ErrorCode::NoConvergence, "eikonal Jacobian factorization failed");
        const Eigen::VectorXd delta = lu.solve(-F);

        // Backtracking on the residual norm.
        const double f0 = F.norm();
        double t = 1.0;
        Eigen::MatrixXd trial;
        Eigen::VectorXd Ft;
        for (;;) {
            trial = u_;
            for (int j = 1; j < n - 1; ++j)
                for (int i = 1; i < n - 1; ++i) trial(i, j) += t * delta[idx(i, j)];
            residual(trial, Ft);
            if (Ft.norm() <= (1 - 1e-4 * t) * f0 || t < 1e-6) break;
            t *= 0.5;
        }
        u_ = std::move(trial);
        F = std::move(Ft);
    }
    residual_ = F.lpNorm<Eigen::Infinity>();
}

double FdEikonal::operator()(double x, double y) const {
    const double h = 1.0 / (n_ - 1);
    const double fx = std::clamp(x, 0.0, 1.0) / h;
    const double fy = std::clamp(y, 0.0, 1.0) / h;
    const int i = std::min(static_cast<int>(fx), n_ - 2);
    const int j = std::min(static_cast<int>(fy), n_ - 2);
    const double a = fx - i, b = fy - j;
    return (1 - a) * (1 - b) * u_(i, j) + a * (1 - b) * u_(i + 1, j) + (1 - a) * b * u_(i, j + 1) + a * b * u_(i + 1, j + 1);
}

std::shared_ptr<const FdEikonal> fd_eikonal_oracle(int grid_n, double eps) {
    static std::mutex mu;
    static std::map<std::pair<int, double>, std::shared_ptr<const FdEikonal>> cache;
    std::lock_guard lock(mu);
    auto& slot = cache[{grid_n, eps}];
    if (!slot) slot = std::make_shared<const FdEikonal>(grid_n, eps);
    return slot;
}

void export_reference_csv(const PdeProblem& problem, const Eigen::MatrixXd& points, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out.imbue(std::locale::classic());
    out.precision(17);
    for (Eigen::Index j = 0; j < points.cols(); ++j) out << 'x' << j << ',';
    out << "u\n";
    std::vector<double> x(static_cast<std::size_t>(points.cols()));
    for (Eigen::Index m = 0; m < points.rows(); ++m) {
        for (Eigen::Index j = 0; j < points.cols(); ++j) {
            x[static_cast<std::size_t>(j)] = points(m, j);
            out << points(m, j) << ',';
        }
        out << problem.reference(x) << '\n';
    }
}

}  // namespace tgp
