#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tgp {

enum class KernelFamily { SquaredExponential, Matern32, Matern52 };

std::string_view to_string(KernelFamily family) noexcept;
KernelFamily kernel_family_from_string(std::string_view name);

/// Stationary one-dimensional covariance k(x, y) = variance * phi(|x - y| / length_scale).
struct KernelSpec {
    KernelFamily family = KernelFamily::SquaredExponential;
    double length_scale = 1.0;
    double variance = 1.0;
    double nugget = 1e-9;

    /// Throws InvalidArgument unless length_scale > 0, variance > 0, nugget >= 0.
    void validate() const;

    /// Highest total order dx + dy for which the cross-derivative exists.
    /// SE is smooth; Matern 3/2 is C^2 in the lag and Matern 5/2 is C^4.
    [[nodiscard]] int max_total_order() const noexcept;

    bool operator==(const KernelSpec&) const = default;
};

/// Analytic cross-derivative d^dx/dx^dx d^dy/dy^dy k(x, y).
///
/// Supported orders: SE any dx + dy <= 4, Matern52 dx + dy <= 4,
/// Matern32 dx + dy <= 2. At x == y the Matern derivatives take their
/// one-sided limit r -> 0+, which coincides with the two-sided value for
/// every supported order. Throws UnsupportedDerivativeOrder otherwise.
double kernel_eval(const KernelSpec& spec, double x, double y, int dx = 0, int dy = 0);

/// Gram matrix K + nugget*I over fixed inducing locations with its Cholesky
/// factor. Immutable once built; share it freely between readers.
class GramFactor {
public:
    /// Throws DuplicateLocations when two locations are closer than 1e-12 and
    /// FactorizationFailed when K + nugget*I is not numerically positive definite.
    GramFactor(const KernelSpec& spec, std::vector<double> locations);

    [[nodiscard]] const KernelSpec& spec() const noexcept { return spec_; }
    [[nodiscard]] std::span<const double> locations() const noexcept { return locations_; }
    [[nodiscard]] Eigen::Index size() const noexcept { return static_cast<Eigen::Index>(locations_.size()); }
    [[nodiscard]] const Eigen::MatrixXd& matrix() const noexcept { return matrix_; }
    /// Lower-triangular L with L L^T = K + nugget*I.
    [[nodiscard]] const Eigen::MatrixXd& lower() const noexcept { return lower_; }

    /// K^{-1} v.
    [[nodiscard]] Eigen::MatrixXd solve(const Eigen::MatrixXd& v) const;
    /// L^{-1} v (whitening).
    [[nodiscard]] Eigen::MatrixXd whiten(const Eigen::MatrixXd& v) const;
    /// L v (inverse of whitening).
    [[nodiscard]] Eigen::MatrixXd unwhiten(const Eigen::MatrixXd& v) const;

    /// Cross-covariance column d^order/dx^order k(gamma_j, x), j = 1..N.
    [[nodiscard]] Eigen::VectorXd cross_covariance(double x, int order) const;

private:
    KernelSpec spec_;
    std::vector<double> locations_;
    Eigen::MatrixXd matrix_;
    Eigen::MatrixXd lower_;
};

/// Build the Gram factorization for `spec` over `locations` (see GramFactor).
std::shared_ptr<const GramFactor> build_gram(const KernelSpec& spec, std::vector<double> locations);

/// Interpolation weights w(x) = K^{-1} d^order k(gamma, x); the factor
/// function with inducing values eta evaluates to w(x)^T eta. `spec` must be
/// the KernelSpec the Gram matrix was built from.
Eigen::VectorXd interp_weights(const GramFactor& gram, const KernelSpec& spec, double x, int order);

/// Whitened weights L^{-1} d^order k(gamma, x). interp_weights is L^{-T} of this.
Eigen::VectorXd whitened_weights(const GramFactor& gram, double x, int order);

/// N equally spaced locations on [lo, hi], endpoints included.
std::vector<double> equally_spaced(double lo, double hi, int count);

}  // namespace tgp
