#include "helpers.hpp"

#include "tensorgp/errors.hpp"
#include "tensorgp/linearization.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace tgp;
using testutil::random_model;
using testutil::random_points;
using testutil::row;

namespace {

const double pi = std::numbers::pi;

ScalarField constant(double c) {
    return [c](std::span<const double>) { return c; };
}

FactorModel zero_model(int dim) {
    FactorModel m = random_model(Decomposition::CP, {2}, dim, 6, 1);
    for (int i = 0; i < dim; ++i) m.set_inducing_values(i, Eigen::MatrixXd::Zero(6, 2));
    return m;
}

const Eigen::VectorXd& coeff_of(const LinearizedResidual& lin, const MultiIndex& d) {
    for (const auto& t : lin.terms)
        if (t.deriv == d) return t.coeff;
    throw std::runtime_error("term " + d.str() + " missing");
}

// Allen-Cahn style 2D spec: u_xx + u_yy + u^3 - u = a.
ResidualSpec allen_cahn_like() {
    ResidualSpec s;
    s.dim = 2;
    s.linear = {{MultiIndex({2, 0}), constant(1)}, {MultiIndex({0, 2}), constant(1)}, {MultiIndex::zero(2), constant(-1)}};
    s.nonlinear = {NonlinearTerm::power_of_u(3, constant(1))};
    s.rhs = [](std::span<const double> x) { return std::sin(x[0]) + x[1]; };
    return s;
}

// Burgers style: u_t + u u_x - 0.1 u_xx = 0 over (t, x).
ResidualSpec burgers_like() {
    ResidualSpec s;
    s.dim = 2;
    s.linear = {{MultiIndex({1, 0}), constant(1)}, {MultiIndex({0, 2}), constant(-0.1)}};
    s.nonlinear = {NonlinearTerm::advection(1, constant(1))};
    s.rhs = constant(0);
    return s;
}

// Spec with every nonlinearity kind and point-dependent coefficients.
ResidualSpec mixed() {
    ResidualSpec s;
    s.dim = 2;
    s.linear = {{MultiIndex({1, 1}), [](std::span<const double> x) { return 1 + x[0] * x[1]; }},
                {MultiIndex({0, 2}), constant(-0.3)}};
    s.nonlinear = {NonlinearTerm::power_of_u(3, [](std::span<const double> x) { return std::cos(x[0]); }),
                   NonlinearTerm::power_of_u(2, constant(0.5)),
                   NonlinearTerm::advection(0, [](std::span<const double> x) { return x[1] - 0.2; }),
                   NonlinearTerm::grad_squared(constant(1.7))};
    s.rhs = [](std::span<const double> x) { return std::exp(x[0]) * x[1]; };
    return s;
}

// Analytic u(x, y) = sin(pi x) cos(y) + x^2 and its derivatives.
double analytic(std::span<const double> p, const MultiIndex& d) {
    const double x = p[0], y = p[1];
    const double sx[3] = {std::sin(pi * x), pi * std::cos(pi * x), -pi * pi * std::sin(pi * x)};
    const double cy[3] = {std::cos(y), -std::sin(y), -std::cos(y)};
    const double q[3] = {x * x, 2 * x, 2};
    return sx[d[0]] * cy[d[1]] + (d[1] == 0 ? q[d[0]] : 0.0);
}

}  // namespace

TEST_CASE("freezing a cubic around zero removes it") {
    ResidualSpec s;
    s.dim = 2;
    s.nonlinear = {NonlinearTerm::power_of_u(3, constant(1))};
    s.rhs = constant(0);
    const Eigen::MatrixXd p = random_points(10, 2, 1);
    const LinearizedResidual lin = freeze(s, zero_model(2), p);
    CHECK(coeff_of(lin, MultiIndex::zero(2)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("freezing u(u^2-1) around one gives a zero multiplier") {
    ResidualSpec s;
    s.dim = 2;
    s.linear = {{MultiIndex::zero(2), constant(-1)}};
    s.nonlinear = {NonlinearTerm::power_of_u(3, constant(1))};
    s.rhs = constant(0);
    const Eigen::MatrixXd p = random_points(10, 2, 2);
    FieldSamples prev{{MultiIndex::zero(2), Eigen::VectorXd::Ones(10)}};
    const LinearizedResidual lin = linearize(s, SampledSpec::sample(s, p), prev, Linearizer::PartialFreeze);
    REQUIRE(lin.terms.size() == 1);
    CHECK(coeff_of(lin, MultiIndex::zero(2)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("Burgers freezing uses the previous iterate as the multiplier") {
    const ResidualSpec s = burgers_like();
    const Eigen::MatrixXd p = random_points(10, 2, 3);
    const FieldSamples prev = sample_field(analytic, p, s.required_derivatives());
    const LinearizedResidual lin = linearize(s, SampledSpec::sample(s, p), prev, Linearizer::PartialFreeze);
    const Eigen::VectorXd& c = coeff_of(lin, MultiIndex({0, 1}));
    for (Eigen::Index m = 0; m < 10; ++m) CHECK(c[m] == analytic(row(p, m), MultiIndex::zero(2)));

    const FactorModel model = random_model(Decomposition::CP, {3}, 2, 10, 4);
    const LinearizedResidual lm = freeze(s, model, p);
    const Eigen::VectorXd& cm = coeff_of(lm, MultiIndex({0, 1}));
    for (Eigen::Index m = 0; m < 10; ++m)
        CHECK(cm[m] == doctest::Approx(evaluate(model, row(p, m), MultiIndex::zero(2))).epsilon(1e-12));

    const LinearizedResidual alt = freeze(s, model, p, AdvectionFreeze::Derivative);
    const Eigen::VectorXd& ca = coeff_of(alt, MultiIndex::zero(2));
    for (Eigen::Index m = 0; m < 10; ++m)
        CHECK(ca[m] == doctest::Approx(evaluate(model, row(p, m), MultiIndex({0, 1}))).epsilon(1e-12));
}

TEST_CASE("Newton linearization of a cubic at two") {
    ResidualSpec s;
    s.dim = 2;
    s.nonlinear = {NonlinearTerm::power_of_u(3, constant(1))};
    s.rhs = constant(0);
    Eigen::MatrixXd p(1, 2);
    p << 0.5, 0.5;
    FieldSamples prev{{MultiIndex::zero(2), Eigen::VectorXd::Constant(1, 2.0)}};
    const LinearizedResidual lin = linearize(s, SampledSpec::sample(s, p), prev, Linearizer::Newton);
    CHECK(coeff_of(lin, MultiIndex::zero(2))[0] == 12.0);
    CHECK(lin.constant[0] == -16.0);
}

TEST_CASE("Newton and freezing coincide for powers around zero") {
    const ResidualSpec s = allen_cahn_like();
    const Eigen::MatrixXd p = random_points(15, 2, 5);
    const FactorModel z = zero_model(2);
    const LinearizedResidual a = freeze(s, z, p);
    const LinearizedResidual b = newton(s, z, p);
    REQUIRE(a.terms.size() == b.terms.size());
    for (std::size_t t = 0; t < a.terms.size(); ++t) {
        CHECK(a.terms[t].deriv == b.terms[t].deriv);
        CHECK(a.terms[t].coeff == b.terms[t].coeff);
    }
    CHECK(a.constant == b.constant);
    CHECK(b.constant.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("surrogates are tangent to the residual at the expansion point") {
    for (const ResidualSpec& s : {allen_cahn_like(), burgers_like(), mixed()}) {
        const FactorModel model = random_model(Decomposition::CP, {3}, 2, 12, 6);
        const Eigen::MatrixXd p = random_points(50, 2, 7);
        const CollocationWeights cache(model, p);
        const FieldSamples u = sample_field(model, FactorValues(model, cache), s.required_derivatives());
        const SampledSpec ss = SampledSpec::sample(s, p);
        const Eigen::VectorXd truth = residual_values(s, ss, u);
        for (auto method : {Linearizer::PartialFreeze, Linearizer::Newton}) {
            for (auto adv : {AdvectionFreeze::Multiplier, AdvectionFreeze::Derivative}) {
                const Eigen::VectorXd sur = linearize(s, ss, u, method, adv).apply(u);
                CHECK((sur - truth).cwiseAbs().maxCoeff() <= 1e-10 * std::max(1.0, truth.cwiseAbs().maxCoeff()));
            }
        }
        for (Eigen::Index m = 0; m < 50; m += 7)
            CHECK(std::abs(residual_eval(s, model, row(p, m)) - truth[m]) <= 1e-10 * std::max(1.0, std::abs(truth[m])));
    }
}

TEST_CASE("linear specs pass through both linearizers unchanged") {
    ResidualSpec s;
    s.dim = 3;
    s.linear = {{MultiIndex({2, 0, 0}), constant(-1)}, {MultiIndex({0, 0, 2}), [](std::span<const double> x) { return x[2]; }}};
    s.rhs = constant(4);
    const Eigen::MatrixXd p = random_points(12, 3, 8);
    const SampledSpec ss = SampledSpec::sample(s, p);
    const FieldSamples prev = sample_field([](std::span<const double>, const MultiIndex&) { return 3.0; }, p,
                                           s.required_derivatives());
    for (auto method : {Linearizer::PartialFreeze, Linearizer::Newton}) {
        const LinearizedResidual lin = linearize(s, ss, prev, method);
        REQUIRE(lin.terms.size() == 2);
        CHECK(coeff_of(lin, MultiIndex({2, 0, 0})) == ss.linear[0]);
        CHECK(coeff_of(lin, MultiIndex({0, 0, 2})) == ss.linear[1]);
        CHECK(lin.constant.isZero(0.0));
        CHECK(lin.target() == ss.rhs);
    }
}

TEST_CASE("a solution is a fixed point of both linearizers") {
    ResidualSpec s = mixed();
    const Eigen::MatrixXd p = random_points(30, 2, 9);
    // Choose the rhs so that the analytic field solves the equation exactly.
    ResidualSpec no_rhs = s;
    no_rhs.rhs = constant(0);
    s.rhs = [no_rhs](std::span<const double> x) { return residual_eval(no_rhs, analytic, x); };
    const FieldSamples u = sample_field(analytic, p, s.required_derivatives());
    const SampledSpec ss = SampledSpec::sample(s, p);
    CHECK(residual_values(s, ss, u).cwiseAbs().maxCoeff() <= 1e-12);
    for (auto method : {Linearizer::PartialFreeze, Linearizer::Newton})
        CHECK(linearize(s, ss, u, method).apply(u).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("residual of the crafted elliptic solution") {
    // -Laplace(u) + u^3 = a with u = sin(pi x) sin(pi y) + 4 sin(4 pi x) sin(4 pi y).
    auto u = [](std::span<const double> p, const MultiIndex& d) {
        auto s = [](double k, double x, int o) {
            const double v[3] = {std::sin(k * x), k * std::cos(k * x), -k * k * std::sin(k * x)};
            return v[o];
        };
        return s(pi, p[0], d[0]) * s(pi, p[1], d[1]) + 4 * s(4 * pi, p[0], d[0]) * s(4 * pi, p[1], d[1]);
    };
    ResidualSpec s;
    s.dim = 2;
    s.linear = {{MultiIndex({2, 0}), constant(-1)}, {MultiIndex({0, 2}), constant(-1)}};
    s.nonlinear = {NonlinearTerm::power_of_u(3, constant(1))};
    s.rhs = [](std::span<const double> p) {
        const double a = std::sin(pi * p[0]) * std::sin(pi * p[1]);
        const double b = std::sin(4 * pi * p[0]) * std::sin(4 * pi * p[1]);
        const double v = a + 4 * b;
        return 2 * pi * pi * a + 4 * 32 * pi * pi * b + v * v * v;
    };
    const Eigen::MatrixXd p = random_points(100, 2, 10);
    for (Eigen::Index m = 0; m < 100; ++m) CHECK(std::abs(residual_eval(s, u, row(p, m))) <= 1e-6);
}

TEST_CASE("residual of the zero model is minus the rhs") {
    const ResidualSpec s = allen_cahn_like();
    const FactorModel z = zero_model(2);
    const Eigen::MatrixXd p = random_points(10, 2, 11);
    for (Eigen::Index m = 0; m < 10; ++m) {
        const auto x = row(p, m);
        CHECK(residual_eval(s, z, x) == -s.rhs(x));
    }
    const ResidualSpec b = burgers_like();
    for (Eigen::Index m = 0; m < 10; ++m) CHECK(residual_eval(b, z, row(p, m)) == 0.0);
}

TEST_CASE("required derivatives and validation") {
    const ResidualSpec s = mixed();
    const auto d = s.required_derivatives();
    CHECK(std::find(d.begin(), d.end(), MultiIndex({1, 0})) != d.end());
    CHECK(std::find(d.begin(), d.end(), MultiIndex({0, 1})) != d.end());
    CHECK(std::find(d.begin(), d.end(), MultiIndex({1, 1})) != d.end());
    CHECK(s.max_order() == 2);
    ResidualSpec empty;
    empty.rhs = constant(0);
    CHECK_THROWS_AS(empty.validate(), Error);
    CHECK_THROWS_AS(NonlinearTerm::power_of_u(1, constant(1)), Error);
}
