#include "tensorgp/linearization.hpp"

#include "tensorgp/errors.hpp"

#include <algorithm>
#include <set>

namespace tgp {

NonlinearTerm NonlinearTerm::power_of_u(int p, ScalarField coeff) {
    if (p < 2) throw Error(ErrorCode::InvalidArgument, "power nonlinearity needs p >= 2");
    return {NonlinearKind::Power, p, 0, std::move(coeff)};
}

NonlinearTerm NonlinearTerm::advection(int axis, ScalarField coeff) {
    return {NonlinearKind::ProductAdvection, 2, axis, std::move(coeff)};
}

NonlinearTerm NonlinearTerm::grad_squared(ScalarField coeff) {
    return {NonlinearKind::GradSquared, 2, 0, std::move(coeff)};
}

std::vector<MultiIndex> ResidualSpec::required_derivatives() const {
    std::set<MultiIndex> out;
    for (const LinearTerm& t : linear) out.insert(t.deriv);
    for (const NonlinearTerm& t : nonlinear) {
        switch (t.kind) {
            case NonlinearKind::Power: out.insert(MultiIndex::zero(dim)); break;
            case NonlinearKind::ProductAdvection:
                out.insert(MultiIndex::zero(dim));
                out.insert(MultiIndex::axis(dim, t.axis, 1));
                break;
            case NonlinearKind::GradSquared:
                for (int j = 0; j < dim; ++j) out.insert(MultiIndex::axis(dim, j, 1));
                break;
        }
    }
    return {out.begin(), out.end()};
}

int ResidualSpec::max_order() const {
    int best = 0;
    for (const MultiIndex& m : required_derivatives())
        for (int o : m.orders()) best = std::max(best, o);
    return best;
}

void ResidualSpec::validate() const {
    if (linear.empty() && nonlinear.empty()) throw Error(ErrorCode::InvalidArgument, "residual spec has no terms");
    if (!rhs) throw Error(ErrorCode::InvalidArgument, "residual spec has no right-hand side");
    for (const LinearTerm& t : linear) {
        if (t.deriv.dim() != dim) throw Error(ErrorCode::InvalidArgument, "linear term dimension mismatch");
        if (!t.coeff) throw Error(ErrorCode::InvalidArgument, "linear term without coefficient");
    }
    for (const NonlinearTerm& t : nonlinear) {
        if (!t.coeff) throw Error(ErrorCode::InvalidArgument, "nonlinear term without coefficient");
        if (t.kind == NonlinearKind::ProductAdvection && (t.axis < 0 || t.axis >= dim))
            throw Error(ErrorCode::InvalidArgument, "advection axis out of range");
    }
}

SampledSpec SampledSpec::sample(const ResidualSpec& spec, const Eigen::MatrixXd& points) {
    spec.validate();
    const Eigen::Index M = points.rows();
    SampledSpec s;
    auto eval = [&](const ScalarField& f) {
        Eigen::VectorXd v(M);
        for (Eigen::Index m = 0; m < M; ++m) {
            const Eigen::VectorXd p = points.row(m).transpose();
            v[m] = f(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())));
        }
        if (!v.allFinite()) throw Error(ErrorCode::InvalidArgument, "non-finite coefficient or right-hand side");
        return v;
    };
    for (const LinearTerm& t : spec.linear) s.linear.push_back(eval(t.coeff));
    for (const NonlinearTerm& t : spec.nonlinear) s.nonlinear.push_back(eval(t.coeff));
    s.rhs = eval(spec.rhs);
    return s;
}

FieldSamples sample_field(const FactorModel& model, const FactorValues& values, const std::vector<MultiIndex>& derivs) {
    FieldSamples out;
    for (const MultiIndex& d : derivs) out.emplace(d, eval_all(model, values, d));
    return out;
}

FieldSamples sample_field(const DerivativeField& field, const Eigen::MatrixXd& points, const std::vector<MultiIndex>& derivs) {
    FieldSamples out;
    for (const MultiIndex& d : derivs) {
        Eigen::VectorXd v(points.rows());
        for (Eigen::Index m = 0; m < points.rows(); ++m) {
            const Eigen::VectorXd p = points.row(m).transpose();
            v[m] = field(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())), d);
        }
        out.emplace(d, std::move(v));
    }
    return out;
}

Eigen::VectorXd LinearizedResidual::apply(const FieldSamples& u) const {
    Eigen::VectorXd r = constant - rhs;
    for (const Term& t : terms) r.array() += t.coeff.array() * u.at(t.deriv).array();
    return r;
}

namespace {

const Eigen::VectorXd& lookup(const FieldSamples& s, const MultiIndex& key) {
    const auto it = s.find(key);
    if (it == s.end()) throw Error(ErrorCode::InvalidArgument, "field samples lack derivative " + key.str());
    return it->second;
}

class TermAccumulator {
public:
    explicit TermAccumulator(Eigen::Index M) : M_(M) {}

    void add(const MultiIndex& deriv, const Eigen::VectorXd& coeff) {
        auto [it, inserted] = terms_.try_emplace(deriv, Eigen::VectorXd::Zero(M_));
        it->second += coeff;
    }

    std::vector<LinearizedResidual::Term> release() {
        std::vector<LinearizedResidual::Term> out;
        for (auto& [k, v] : terms_) out.push_back({k, std::move(v)});
        return out;
    }

private:
    Eigen::Index M_;
    std::map<MultiIndex, Eigen::VectorXd> terms_;
};

}  // namespace

LinearizedResidual linearize(const ResidualSpec& spec, const SampledSpec& sampled, const FieldSamples& prev,
                             Linearizer method, AdvectionFreeze advection) {
    const Eigen::Index M = sampled.rhs.size();
    const int d = spec.dim;
    TermAccumulator acc(M);
    LinearizedResidual out;
    out.constant = Eigen::VectorXd::Zero(M);
    out.rhs = sampled.rhs;

    for (std::size_t t = 0; t < spec.linear.size(); ++t) acc.add(spec.linear[t].deriv, sampled.linear[t]);

    const MultiIndex zero = MultiIndex::zero(d);
    for (std::size_t t = 0; t < spec.nonlinear.size(); ++t) {
        const NonlinearTerm& term = spec.nonlinear[t];
        const Eigen::ArrayXd c = sampled.nonlinear[t].array();
        switch (term.kind) {
            case NonlinearKind::Power: {
                const Eigen::ArrayXd u = lookup(prev, zero).array();
                const Eigen::ArrayXd upm1 = u.pow(term.power - 1);
                if (method == Linearizer::PartialFreeze) {
                    acc.add(zero, (c * upm1).matrix());
                } else {
                    acc.add(zero, (c * term.power * upm1).matrix());
                    out.constant.array() += c * (1.0 - term.power) * upm1 * u;
                }
                break;
            }
            case NonlinearKind::ProductAdvection: {
                const MultiIndex dx = MultiIndex::axis(d, term.axis, 1);
                const Eigen::ArrayXd u = lookup(prev, zero).array();
                const Eigen::ArrayXd ux = lookup(prev, dx).array();
                if (method == Linearizer::PartialFreeze) {
                    if (advection == AdvectionFreeze::Multiplier)
                        acc.add(dx, (c * u).matrix());
                    else
                        acc.add(zero, (c * ux).matrix());
                } else {
                    acc.add(dx, (c * u).matrix());
                    acc.add(zero, (c * ux).matrix());
                    out.constant.array() -= c * u * ux;
                }
                break;
            }
            case NonlinearKind::GradSquared: {
                const double scale = method == Linearizer::PartialFreeze ? 1.0 : 2.0;
                for (int j = 0; j < d; ++j) {
                    const MultiIndex dj = MultiIndex::axis(d, j, 1);
                    const Eigen::ArrayXd g = lookup(prev, dj).array();
                    acc.add(dj, (scale * c * g).matrix());
                    if (method == Linearizer::Newton) out.constant.array() -= c * g * g;
                }
                break;
            }
        }
    }
    out.terms = acc.release();
    return out;
}

namespace {

std::vector<MultiIndex> linearization_derivs(const ResidualSpec& spec) {
    // The linearized residual needs the same samples of u_prev as the true residual.
    return spec.required_derivatives();
}

LinearizedResidual linearize_model(const ResidualSpec& spec, const FactorModel& u_prev, const Eigen::MatrixXd& points,
                                   Linearizer method, AdvectionFreeze advection) {
    std::vector<int> orders;
    for (int o = 0; o <= spec.max_order(); ++o) orders.push_back(o);
    const CollocationWeights cache(u_prev, points, orders);
    const FactorValues values(u_prev, cache);
    const FieldSamples prev = sample_field(u_prev, values, linearization_derivs(spec));
    return linearize(spec, SampledSpec::sample(spec, points), prev, method, advection);
}

}  // namespace

LinearizedResidual freeze(const ResidualSpec& spec, const FactorModel& u_prev, const Eigen::MatrixXd& points,
                          AdvectionFreeze advection) {
    return linearize_model(spec, u_prev, points, Linearizer::PartialFreeze, advection);
}

LinearizedResidual newton(const ResidualSpec& spec, const FactorModel& u_prev, const Eigen::MatrixXd& points) {
    return linearize_model(spec, u_prev, points, Linearizer::Newton, AdvectionFreeze::Multiplier);
}

Eigen::VectorXd residual_values(const ResidualSpec& spec, const SampledSpec& sampled, const FieldSamples& u) {
    const int d = spec.dim;
    Eigen::VectorXd r = -sampled.rhs;
    for (std::size_t t = 0; t < spec.linear.size(); ++t)
        r.array() += sampled.linear[t].array() * lookup(u, spec.linear[t].deriv).array();
    const MultiIndex zero = MultiIndex::zero(d);
    for (std::size_t t = 0; t < spec.nonlinear.size(); ++t) {
        const NonlinearTerm& term = spec.nonlinear[t];
        const Eigen::ArrayXd c = sampled.nonlinear[t].array();
        switch (term.kind) {
            case NonlinearKind::Power: r.array() += c * lookup(u, zero).array().pow(term.power); break;
            case NonlinearKind::ProductAdvection:
                r.array() += c * lookup(u, zero).array() * lookup(u, MultiIndex::axis(d, term.axis, 1)).array();
                break;
            case NonlinearKind::GradSquared:
                for (int j = 0; j < d; ++j) r.array() += c * lookup(u, MultiIndex::axis(d, j, 1)).array().square();
                break;
        }
    }
    return r;
}

double residual_eval(const ResidualSpec& spec, const DerivativeField& u, std::span<const double> point) {
    Eigen::MatrixXd p(1, static_cast<Eigen::Index>(point.size()));
    for (std::size_t j = 0; j < point.size(); ++j) p(0, static_cast<Eigen::Index>(j)) = point[j];
    const FieldSamples samples = sample_field(u, p, spec.required_derivatives());
    return residual_values(spec, SampledSpec::sample(spec, p), samples)[0];
}

double residual_eval(const ResidualSpec& spec, const FactorModel& u, std::span<const double> point) {
    return residual_eval(
        spec, [&u](std::span<const double> x, const MultiIndex& d) { return evaluate(u, x, d); }, point);
}

}  // namespace tgp
