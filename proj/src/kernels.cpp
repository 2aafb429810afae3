#include "tensorgp/kernels.hpp"

#include "tensorgp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace tgp {

std::string_view to_string(KernelFamily family) noexcept {
    switch (family) {
        case KernelFamily::SquaredExponential: return "se";
        case KernelFamily::Matern32: return "matern32";
        case KernelFamily::Matern52: return "matern52";
    }
    return "unknown";
}

KernelFamily kernel_family_from_string(std::string_view name) {
    if (name == "se" || name == "squared_exponential" || name == "rbf") return KernelFamily::SquaredExponential;
    if (name == "matern32") return KernelFamily::Matern32;
    if (name == "matern52") return KernelFamily::Matern52;
    throw Error(ErrorCode::InvalidArgument, "unknown kernel family '" + std::string(name) + "'");
}

void KernelSpec::validate() const {
    if (!(length_scale > 0.0) || !std::isfinite(length_scale))
        throw Error(ErrorCode::InvalidArgument, "kernel length_scale must be positive");
    if (!(variance > 0.0) || !std::isfinite(variance))
        throw Error(ErrorCode::InvalidArgument, "kernel variance must be positive");
    if (!(nugget >= 0.0) || !std::isfinite(nugget))
        throw Error(ErrorCode::InvalidArgument, "kernel nugget must be non-negative");
}

int KernelSpec::max_total_order() const noexcept {
    switch (family) {
        case KernelFamily::SquaredExponential: return 4;
        case KernelFamily::Matern32: return 2;
        case KernelFamily::Matern52: return 4;
    }
    return 0;
}

namespace {

// n-th derivative of exp(-s^2/2) w.r.t. s is (-1)^n He_n(s) exp(-s^2/2).
double hermite_prob(int n, double s) {
    switch (n) {
        case 0: return 1.0;
        case 1: return s;
        case 2: return s * s - 1.0;
        case 3: return s * (s * s - 3.0);
        case 4: { const double s2 = s * s; return s2 * s2 - 6.0 * s2 + 3.0; }
        default: return 0.0;
    }
}

// n-th derivative of the radial profile phi(rho), rho = |r| >= 0.
double matern32_radial(int n, double a, double rho) {
    const double e = std::exp(-a * rho);
    switch (n) {
        case 0: return (1.0 + a * rho) * e;
        case 1: return -a * a * rho * e;
        case 2: return -a * a * (1.0 - a * rho) * e;
        default: return 0.0;
    }
}

double matern52_radial(int n, double a, double rho) {
    const double e = std::exp(-a * rho);
    const double a2 = a * a;
    switch (n) {
        case 0: return (1.0 + a * rho + a2 * rho * rho / 3.0) * e;
        case 1: return -(a2 / 3.0) * rho * (1.0 + a * rho) * e;
        case 2: return -(a2 / 3.0) * (1.0 + a * rho - a2 * rho * rho) * e;
        case 3: return (a2 * a2 / 3.0) * rho * (3.0 - a * rho) * e;
        case 4: return (a2 * a2 / 3.0) * (3.0 - 5.0 * a * rho + a2 * rho * rho) * e;
        default: return 0.0;
    }
}

}  // namespace

double kernel_eval(const KernelSpec& spec, double x, double y, int dx, int dy) {
    if (dx < 0 || dy < 0 || dx + dy > spec.max_total_order()) {
        std::ostringstream msg;
        msg << to_string(spec.family) << " kernel has no (" << dx << "," << dy << ") cross-derivative";
        throw Error(ErrorCode::UnsupportedDerivativeOrder, msg.str());
    }
    const int n = dx + dy;
    // k depends on r = x - y only, so d/dy = -d/dr.
    const double sign_y = (dy % 2 == 0) ? 1.0 : -1.0;
    const double r = x - y;
    const double l = spec.length_scale;

    double dr = 0.0;  // d^n k / dr^n
    switch (spec.family) {
        case KernelFamily::SquaredExponential: {
            const double s = r / l;
            const double sign_n = (n % 2 == 0) ? 1.0 : -1.0;
            dr = sign_n * hermite_prob(n, s) * std::exp(-0.5 * s * s) / std::pow(l, n);
            break;
        }
        case KernelFamily::Matern32:
        case KernelFamily::Matern52: {
            const double rho = std::abs(r);
            const double a = (spec.family == KernelFamily::Matern32 ? std::sqrt(3.0) : std::sqrt(5.0)) / l;
            const double radial = spec.family == KernelFamily::Matern32 ? matern32_radial(n, a, rho)
                                                                        : matern52_radial(n, a, rho);
            // d^n/dr^n phi(|r|) = sign(r)^n phi^(n)(|r|); odd radial derivatives vanish at 0.
            const double sign_r = (n % 2 == 0 || r >= 0.0) ? 1.0 : -1.0;
            dr = sign_r * radial;
            break;
        }
    }
    return spec.variance * sign_y * dr;
}

GramFactor::GramFactor(const KernelSpec& spec, std::vector<double> locations)
    : spec_(spec), locations_(std::move(locations)) {
    spec_.validate();
    if (locations_.empty()) throw Error(ErrorCode::InvalidArgument, "Gram matrix needs at least one location");
    {
        std::vector<double> sorted = locations_;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t j = 1; j < sorted.size(); ++j) {
            if (sorted[j] - sorted[j - 1] <= 1e-12) {
                std::ostringstream msg;
                msg << "inducing locations " << sorted[j - 1] << " and " << sorted[j] << " coincide";
                throw Error(ErrorCode::DuplicateLocations, msg.str());
            }
        }
    }
    const Eigen::Index n = size();
    matrix_.resize(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = j; i < n; ++i) {
            const double v = kernel_eval(spec_, locations_[i], locations_[j]);
            matrix_(i, j) = v;
            matrix_(j, i) = v;
        }
        matrix_(j, j) += spec_.nugget;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(matrix_);
    if (llt.info() != Eigen::Success)
        throw Error(ErrorCode::FactorizationFailed, "Gram matrix is not positive definite; increase the nugget");
    lower_ = llt.matrixL();
    if (!(lower_.diagonal().array() > 0.0).all())
        throw Error(ErrorCode::FactorizationFailed, "Gram factorization produced a non-positive pivot");
}

Eigen::MatrixXd GramFactor::solve(const Eigen::MatrixXd& v) const {
    Eigen::MatrixXd out = whiten(v);
    lower_.transpose().triangularView<Eigen::Upper>().solveInPlace(out);
    return out;
}

Eigen::MatrixXd GramFactor::whiten(const Eigen::MatrixXd& v) const {
    Eigen::MatrixXd out = v;
    lower_.triangularView<Eigen::Lower>().solveInPlace(out);
    return out;
}

Eigen::MatrixXd GramFactor::unwhiten(const Eigen::MatrixXd& v) const {
    return lower_.triangularView<Eigen::Lower>() * v;
}

Eigen::VectorXd GramFactor::cross_covariance(double x, int order) const {
    Eigen::VectorXd k(size());
    // k(gamma_j, x) = k(x, gamma_j) by symmetry; differentiate the x slot.
    for (Eigen::Index j = 0; j < size(); ++j) k[j] = kernel_eval(spec_, x, locations_[j], order, 0);
    return k;
}

std::shared_ptr<const GramFactor> build_gram(const KernelSpec& spec, std::vector<double> locations) {
    return std::make_shared<const GramFactor>(spec, std::move(locations));
}

Eigen::VectorXd whitened_weights(const GramFactor& gram, double x, int order) {
    Eigen::VectorXd v = gram.cross_covariance(x, order);
    gram.lower().triangularView<Eigen::Lower>().solveInPlace(v);
    return v;
}

Eigen::VectorXd interp_weights(const GramFactor& gram, const KernelSpec& spec, double x, int order) {
    if (!(spec == gram.spec()))
        throw Error(ErrorCode::InvalidArgument, "kernel spec does not match the Gram factorization");
    Eigen::VectorXd v = whitened_weights(gram, x, order);
    gram.lower().transpose().triangularView<Eigen::Upper>().solveInPlace(v);
    return v;
}

std::vector<double> equally_spaced(double lo, double hi, int count) {
    if (count < 1) throw Error(ErrorCode::InvalidArgument, "need at least one location");
    if (count == 1) return {0.5 * (lo + hi)};
    std::vector<double> out(static_cast<std::size_t>(count));
    const double step = (hi - lo) / (count - 1);
    for (int j = 0; j < count; ++j) out[static_cast<std::size_t>(j)] = lo + step * j;
    out.back() = hi;
    return out;
}

}  // namespace tgp
