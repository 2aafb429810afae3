#pragma once

#include "tensorgp/factor_model.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <vector>

namespace tgp {

enum class ShapeKind { Box, Circle, Triangle };

/// Which faces of a box carry boundary conditions. A face that is not flagged
/// (e.g. the final time slice of a space-time box) belongs to the interior.
struct BoxFaces {
    std::vector<bool> lo;
    std::vector<bool> hi;
};

/// Computational domain: an axis-aligned box or a planar circle/triangle
/// inside its bounding box.
class DomainShape {
public:
    static DomainShape box(std::vector<Interval> intervals);
    static DomainShape box(std::vector<Interval> intervals, BoxFaces faces);
    static DomainShape unit_box(int dim);
    static DomainShape circle(std::array<double, 2> center, double radius);
    static DomainShape triangle(std::array<double, 2> a, std::array<double, 2> b, std::array<double, 2> c);

    [[nodiscard]] ShapeKind kind() const noexcept { return kind_; }
    [[nodiscard]] int dim() const noexcept { return static_cast<int>(bbox_.size()); }
    [[nodiscard]] const std::vector<Interval>& bounding_box() const noexcept { return bbox_; }
    [[nodiscard]] const BoxFaces& faces() const noexcept { return faces_; }

    /// Closed membership (interior or boundary).
    [[nodiscard]] bool contains(std::span<const double> x) const;
    /// Strictly inside, i.e. not on any boundary-carrying part of the boundary.
    [[nodiscard]] bool in_interior(std::span<const double> x) const;
    /// Distance to the boundary-carrying part of the boundary.
    [[nodiscard]] double boundary_distance(std::span<const double> x) const;

    /// Uniform sample on the boundary by arc length, edge length or face measure.
    void sample_boundary(std::mt19937_64& rng, std::span<double> out) const;

    [[nodiscard]] const std::array<double, 2>& center() const noexcept { return center_; }
    [[nodiscard]] double radius() const noexcept { return radius_; }
    [[nodiscard]] const std::array<std::array<double, 2>, 3>& vertices() const noexcept { return verts_; }

private:
    DomainShape() = default;
    ShapeKind kind_ = ShapeKind::Box;
    std::vector<Interval> bbox_;
    BoxFaces faces_;
    std::array<double, 2> center_{};
    double radius_ = 0.0;
    std::array<std::array<double, 2>, 3> verts_{};
};

enum class Provenance { Grid, Random, Imported };

/// Interior and boundary collocation points (rows are points).
struct CollocationSet {
    Eigen::MatrixXd interior;
    Eigen::MatrixXd boundary;
    Provenance provenance = Provenance::Grid;
    std::vector<int> grid_shape;
    std::uint64_t seed = 0;

    [[nodiscard]] Eigen::Index size() const noexcept { return interior.rows() + boundary.rows(); }
    [[nodiscard]] int dim() const noexcept { return static_cast<int>(interior.cols()); }
};

/// Full tensor grid over the box; points on a boundary-carrying face go to
/// the boundary set. Throws DegenerateGrid if any count is below 2.
CollocationSet grid_sample(const DomainShape& box, const std::vector<int>& counts);

/// Rejection-sampled interior points and uniformly parameterized boundary
/// points, deterministic in the seed. Throws RejectionBudgetExceeded when
/// fewer than 1% of 1e7 proposals are accepted.
CollocationSet random_sample(const DomainShape& domain, Eigen::Index n_interior, Eigen::Index n_boundary, std::uint64_t seed);

struct EvalGrid {
    Eigen::MatrixXd points;
    /// One entry per node of the full bounding-box grid: true if kept.
    std::vector<bool> mask;
    int resolution = 0;
};

/// 100 for d = 2, 20 for d = 4, 10 for d = 6 (and 10 for other d).
int default_resolution(int dim);

/// Uniform grid over the bounding box filtered by closed membership.
/// resolution <= 0 selects default_resolution.
EvalGrid eval_grid(const DomainShape& domain, int resolution = 0);

/// ||model - ref|| / ||ref|| over matching value vectors. Throws ZeroReferenceNorm.
double relative_l2(const Eigen::VectorXd& model_values, const Eigen::VectorXd& reference_values);
/// Same, evaluating the model and reference at every row of `points`.
double relative_l2(const FactorModel& model, const std::function<double(std::span<const double>)>& reference,
                   const Eigen::MatrixXd& points);

/// Model values at many points through a cached weight table.
Eigen::VectorXd evaluate_points(const FactorModel& model, const Eigen::MatrixXd& points);

/// CSV with columns x0..x{d-1},boundary (0 interior, 1 boundary).
void save_points_csv(const CollocationSet& set, const std::filesystem::path& path);
CollocationSet load_points_csv(const std::filesystem::path& path);

}  // namespace tgp
