#include "tensorgp/geometry.hpp"

#include "tensorgp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <locale>
#include <numbers>
#include <sstream>

namespace tgp {

namespace {

constexpr double kFaceTol = 1e-12;

double face_tol(const Interval& iv) { return kFaceTol * std::max(1.0, iv.hi - iv.lo); }

double cross(const std::array<double, 2>& o, const std::array<double, 2>& a, double px, double py) {
    return (a[0] - o[0]) * (py - o[1]) - (a[1] - o[1]) * (px - o[0]);
}

double segment_distance(const std::array<double, 2>& p, const std::array<double, 2>& q, double x, double y) {
    const double dx = q[0] - p[0], dy = q[1] - p[1];
    const double t = std::clamp(((x - p[0]) * dx + (y - p[1]) * dy) / (dx * dx + dy * dy), 0.0, 1.0);
    return std::hypot(x - (p[0] + t * dx), y - (p[1] + t * dy));
}

}  // namespace

DomainShape DomainShape::box(std::vector<Interval> intervals) {
    BoxFaces faces{std::vector<bool>(intervals.size(), true), std::vector<bool>(intervals.size(), true)};
    return box(std::move(intervals), std::move(faces));
}

DomainShape DomainShape::box(std::vector<Interval> intervals, BoxFaces faces) {
    if (intervals.empty()) throw Error(ErrorCode::InvalidArgument, "box needs at least one dimension");
    for (const Interval& iv : intervals)
        if (!(iv.hi > iv.lo)) throw Error(ErrorCode::InvalidArgument, "box interval must have hi > lo");
    if (faces.lo.size() != intervals.size() || faces.hi.size() != intervals.size())
        throw Error(ErrorCode::InvalidArgument, "box face flags must match the dimension");
    if (std::none_of(faces.lo.begin(), faces.lo.end(), [](bool b) { return b; }) &&
        std::none_of(faces.hi.begin(), faces.hi.end(), [](bool b) { return b; }))
        throw Error(ErrorCode::InvalidArgument, "box needs at least one boundary face");
    DomainShape s;
    s.kind_ = ShapeKind::Box;
    s.bbox_ = std::move(intervals);
    s.faces_ = std::move(faces);
    return s;
}

DomainShape DomainShape::unit_box(int dim) {
    return box(std::vector<Interval>(static_cast<std::size_t>(dim), Interval{0.0, 1.0}));
}

DomainShape DomainShape::circle(std::array<double, 2> center, double radius) {
    if (!(radius > 0)) throw Error(ErrorCode::InvalidArgument, "circle radius must be positive");
    DomainShape s;
    s.kind_ = ShapeKind::Circle;
    s.center_ = center;
    s.radius_ = radius;
    s.bbox_ = {{center[0] - radius, center[0] + radius}, {center[1] - radius, center[1] + radius}};
    return s;
}

DomainShape DomainShape::triangle(std::array<double, 2> a, std::array<double, 2> b, std::array<double, 2> c) {
    double area = cross(a, b, c[0], c[1]);
    if (std::abs(area) <= 0) throw Error(ErrorCode::InvalidArgument, "triangle vertices are collinear");
    if (area < 0) std::swap(b, c);  // keep counter-clockwise orientation
    DomainShape s;
    s.kind_ = ShapeKind::Triangle;
    s.verts_ = {a, b, c};
    s.bbox_ = {{std::min({a[0], b[0], c[0]}), std::max({a[0], b[0], c[0]})},
               {std::min({a[1], b[1], c[1]}), std::max({a[1], b[1], c[1]})}};
    return s;
}

bool DomainShape::contains(std::span<const double> x) const {
    switch (kind_) {
        case ShapeKind::Box:
            for (int j = 0; j < dim(); ++j) {
                const Interval& iv = bbox_[static_cast<std::size_t>(j)];
                const double tol = face_tol(iv);
                if (x[static_cast<std::size_t>(j)] < iv.lo - tol || x[static_cast<std::size_t>(j)] > iv.hi + tol) return false;
            }
            return true;
        case ShapeKind::Circle:
            return std::hypot(x[0] - center_[0], x[1] - center_[1]) <= radius_ + kFaceTol;
        case ShapeKind::Triangle:
            for (int e = 0; e < 3; ++e) {
                const auto& p = verts_[static_cast<std::size_t>(e)];
                const auto& q = verts_[static_cast<std::size_t>((e + 1) % 3)];
                if (cross(p, q, x[0], x[1]) < -kFaceTol * std::hypot(q[0] - p[0], q[1] - p[1])) return false;
            }
            return true;
    }
    return false;
}

double DomainShape::boundary_distance(std::span<const double> x) const {
    switch (kind_) {
        case ShapeKind::Box: {
            double best = std::numeric_limits<double>::infinity();
            for (int j = 0; j < dim(); ++j) {
                const Interval& iv = bbox_[static_cast<std::size_t>(j)];
                const double v = x[static_cast<std::size_t>(j)];
                if (faces_.lo[static_cast<std::size_t>(j)]) best = std::min(best, std::abs(v - iv.lo));
                if (faces_.hi[static_cast<std::size_t>(j)]) best = std::min(best, std::abs(v - iv.hi));
            }
            return best;
        }
        case ShapeKind::Circle:
            return std::abs(std::hypot(x[0] - center_[0], x[1] - center_[1]) - radius_);
        case ShapeKind::Triangle: {
            double best = std::numeric_limits<double>::infinity();
            for (int e = 0; e < 3; ++e)
                best = std::min(best, segment_distance(verts_[static_cast<std::size_t>(e)],
                                                       verts_[static_cast<std::size_t>((e + 1) % 3)], x[0], x[1]));
            return best;
        }
    }
    return 0.0;
}

bool DomainShape::in_interior(std::span<const double> x) const {
    if (!contains(x)) return false;
    if (kind_ == ShapeKind::Box) {
        for (int j = 0; j < dim(); ++j) {
            const Interval& iv = bbox_[static_cast<std::size_t>(j)];
            const double tol = face_tol(iv);
            const double v = x[static_cast<std::size_t>(j)];
            if (faces_.lo[static_cast<std::size_t>(j)] && std::abs(v - iv.lo) <= tol) return false;
            if (faces_.hi[static_cast<std::size_t>(j)] && std::abs(v - iv.hi) <= tol) return false;
        }
        return true;
    }
    return boundary_distance(x) > kFaceTol;
}

void DomainShape::sample_boundary(std::mt19937_64& rng, std::span<double> out) const {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    switch (kind_) {
        case ShapeKind::Circle: {
            const double theta = 2.0 * std::numbers::pi * unit(rng);
            out[0] = center_[0] + radius_ * std::cos(theta);
            out[1] = center_[1] + radius_ * std::sin(theta);
            return;
        }
        case ShapeKind::Triangle: {
            double len[3];
            double total = 0;
            for (int e = 0; e < 3; ++e) {
                const auto& p = verts_[static_cast<std::size_t>(e)];
                const auto& q = verts_[static_cast<std::size_t>((e + 1) % 3)];
                len[e] = std::hypot(q[0] - p[0], q[1] - p[1]);
                total += len[e];
            }
            double s = unit(rng) * total;
            int e = 0;
            while (e < 2 && s > len[e]) s -= len[e++];
            const double f = std::clamp(s / len[e], 0.0, 1.0);
            const auto& p = verts_[static_cast<std::size_t>(e)];
            const auto& q = verts_[static_cast<std::size_t>((e + 1) % 3)];
            out[0] = p[0] + f * (q[0] - p[0]);
            out[1] = p[1] + f * (q[1] - p[1]);
            return;
        }
        case ShapeKind::Box: {
            const int d = dim();
            std::vector<double> measure;
            std::vector<std::pair<int, bool>> face;
            double total = 0;
            for (int j = 0; j < d; ++j) {
                double m = 1;
                for (int k = 0; k < d; ++k)
                    if (k != j) m *= bbox_[static_cast<std::size_t>(k)].hi - bbox_[static_cast<std::size_t>(k)].lo;
                for (bool upper : {false, true}) {
                    const bool flagged = upper ? faces_.hi[static_cast<std::size_t>(j)] : faces_.lo[static_cast<std::size_t>(j)];
                    if (!flagged) continue;
                    measure.push_back(m);
                    face.emplace_back(j, upper);
                    total += m;
                }
            }
            double s = unit(rng) * total;
            std::size_t f = 0;
            while (f + 1 < measure.size() && s > measure[f]) s -= measure[f++];
            for (int k = 0; k < d; ++k) {
                const Interval& iv = bbox_[static_cast<std::size_t>(k)];
                out[static_cast<std::size_t>(k)] = iv.lo + unit(rng) * (iv.hi - iv.lo);
            }
            const auto [j, upper] = face[f];
            const Interval& iv = bbox_[static_cast<std::size_t>(j)];
            out[static_cast<std::size_t>(j)] = upper ? iv.hi : iv.lo;
            return;
        }
    }
}

// ---------------------------------------------------------------- sampling

namespace {

// Enumerate the tensor grid node with linear index `flat` (first dimension fastest).
void grid_node(const std::vector<Interval>& box, const std::vector<int>& counts, long long flat, std::span<double> out) {
    for (std::size_t j = 0; j < counts.size(); ++j) {
        const int k = static_cast<int>(flat % counts[j]);
        flat /= counts[j];
        const Interval& iv = box[j];
        out[j] = k == counts[j] - 1 ? iv.hi : iv.lo + (iv.hi - iv.lo) * k / (counts[j] - 1);
    }
}

Eigen::MatrixXd to_matrix(const std::vector<double>& flat, int d) {
    const Eigen::Index rows = static_cast<Eigen::Index>(flat.size()) / d;
    Eigen::MatrixXd m(rows, d);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (int j = 0; j < d; ++j) m(r, j) = flat[static_cast<std::size_t>(r * d + j)];
    return m;
}

}  // namespace

CollocationSet grid_sample(const DomainShape& box, const std::vector<int>& counts) {
    if (box.kind() != ShapeKind::Box) throw Error(ErrorCode::InvalidArgument, "grid sampling needs a box domain");
    if (static_cast<int>(counts.size()) != box.dim())
        throw Error(ErrorCode::InvalidArgument, "grid counts must match the domain dimension");
    long long total = 1;
    for (int c : counts) {
        if (c < 2) throw Error(ErrorCode::DegenerateGrid, "every grid count must be at least 2");
        total *= c;
    }
    const int d = box.dim();
    std::vector<double> interior, boundary;
    std::vector<double> p(static_cast<std::size_t>(d));
    for (long long f = 0; f < total; ++f) {
        grid_node(box.bounding_box(), counts, f, p);
        auto& dst = box.in_interior(p) ? interior : boundary;
        dst.insert(dst.end(), p.begin(), p.end());
    }
    CollocationSet set;
    set.interior = to_matrix(interior, d);
    set.boundary = to_matrix(boundary, d);
    set.provenance = Provenance::Grid;
    set.grid_shape = counts;
    return set;
}

CollocationSet random_sample(const DomainShape& domain, Eigen::Index n_interior, Eigen::Index n_boundary, std::uint64_t seed) {
    if (n_interior < 1 || n_boundary < 1)
        throw Error(ErrorCode::InvalidArgument, "random sampling needs interior and boundary counts of at least 1");
    const int d = domain.dim();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    CollocationSet set;
    set.provenance = Provenance::Random;
    set.seed = seed;
    set.interior.resize(n_interior, d);
    set.boundary.resize(n_boundary, d);

    constexpr long long kBudget = 10'000'000;
    long long proposals = 0, accepted = 0;
    std::vector<double> p(static_cast<std::size_t>(d));
    while (accepted < n_interior) {
        ++proposals;
        for (int j = 0; j < d; ++j) {
            const Interval& iv = domain.bounding_box()[static_cast<std::size_t>(j)];
            p[static_cast<std::size_t>(j)] = iv.lo + unit(rng) * (iv.hi - iv.lo);
        }
        if (domain.in_interior(p)) {
            for (int j = 0; j < d; ++j) set.interior(accepted, j) = p[static_cast<std::size_t>(j)];
            ++accepted;
        }
        if (proposals >= kBudget && accepted < n_interior && accepted * 100 < proposals)
            throw Error(ErrorCode::RejectionBudgetExceeded, "interior acceptance rate fell below 1%");
    }
    for (Eigen::Index m = 0; m < n_boundary; ++m) {
        domain.sample_boundary(rng, p);
        for (int j = 0; j < d; ++j) set.boundary(m, j) = p[static_cast<std::size_t>(j)];
    }
    return set;
}

int default_resolution(int dim) {
    switch (dim) {
        case 2: return 100;
        case 4: return 20;
        default: return 10;
    }
}

EvalGrid eval_grid(const DomainShape& domain, int resolution) {
    const int d = domain.dim();
    if (resolution <= 0) resolution = default_resolution(d);
    if (resolution < 2) throw Error(ErrorCode::DegenerateGrid, "evaluation resolution must be at least 2");
    const std::vector<int> counts(static_cast<std::size_t>(d), resolution);
    long long total = 1;
    for (int c : counts) total *= c;
    EvalGrid g;
    g.resolution = resolution;
    g.mask.resize(static_cast<std::size_t>(total));
    std::vector<double> kept;
    std::vector<double> p(static_cast<std::size_t>(d));
    for (long long f = 0; f < total; ++f) {
        grid_node(domain.bounding_box(), counts, f, p);
        const bool in = domain.contains(p);
        g.mask[static_cast<std::size_t>(f)] = in;
        if (in) kept.insert(kept.end(), p.begin(), p.end());
    }
    g.points = to_matrix(kept, d);
    return g;
}

// ---------------------------------------------------------------- errors

double relative_l2(const Eigen::VectorXd& model_values, const Eigen::VectorXd& reference_values) {
    if (model_values.size() != reference_values.size())
        throw Error(ErrorCode::InvalidArgument, "model and reference value counts differ");
    const double denom = reference_values.norm();
    if (denom == 0.0) throw Error(ErrorCode::ZeroReferenceNorm, "reference has zero norm on the evaluation set");
    return (model_values - reference_values).norm() / denom;
}

Eigen::VectorXd evaluate_points(const FactorModel& model, const Eigen::MatrixXd& points) {
    constexpr Eigen::Index kChunk = 4096;
    Eigen::VectorXd out(points.rows());
    const MultiIndex zero = MultiIndex::zero(model.dim());
    for (Eigen::Index start = 0; start < points.rows(); start += kChunk) {
        const Eigen::Index n = std::min(kChunk, points.rows() - start);
        const CollocationWeights cache(model, points.middleRows(start, n), {0});
        out.segment(start, n) = eval_all(model, cache, zero);
    }
    return out;
}

double relative_l2(const FactorModel& model, const std::function<double(std::span<const double>)>& reference,
                   const Eigen::MatrixXd& points) {
    Eigen::VectorXd ref(points.rows());
    std::vector<double> p(static_cast<std::size_t>(points.cols()));
    for (Eigen::Index m = 0; m < points.rows(); ++m) {
        for (Eigen::Index j = 0; j < points.cols(); ++j) p[static_cast<std::size_t>(j)] = points(m, j);
        ref[m] = reference(p);
    }
    return relative_l2(evaluate_points(model, points), ref);
}

// ---------------------------------------------------------------- CSV

void save_points_csv(const CollocationSet& set, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out.imbue(std::locale::classic());
    out.precision(17);
    const int d = set.dim();
    for (int j = 0; j < d; ++j) out << 'x' << j << ',';
    out << "boundary\n";
    auto dump = [&](const Eigen::MatrixXd& pts, int flag) {
        for (Eigen::Index m = 0; m < pts.rows(); ++m) {
            for (int j = 0; j < d; ++j) out << pts(m, j) << ',';
            out << flag << '\n';
        }
    };
    dump(set.interior, 0);
    dump(set.boundary, 1);
}

CollocationSet load_points_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::IoError, "empty point file");
    const int d = static_cast<int>(std::count(line.begin(), line.end(), ','));
    if (d < 1) throw Error(ErrorCode::IoError, "point file header needs coordinate columns");
    std::vector<double> interior, boundary;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream row(line);
        row.imbue(std::locale::classic());
        std::vector<double> vals;
        std::string cell;
        while (std::getline(row, cell, ',')) {
            std::istringstream c(cell);
            c.imbue(std::locale::classic());
            double v;
            if (!(c >> v)) throw Error(ErrorCode::IoError, "bad number on line " + std::to_string(lineno));
            vals.push_back(v);
        }
        if (static_cast<int>(vals.size()) != d + 1) throw Error(ErrorCode::IoError, "wrong column count on line " + std::to_string(lineno));
        auto& dst = vals.back() != 0.0 ? boundary : interior;
        dst.insert(dst.end(), vals.begin(), vals.end() - 1);
    }
    CollocationSet set;
    set.interior = to_matrix(interior, d);
    set.boundary = to_matrix(boundary, d);
    set.provenance = Provenance::Imported;
    return set;
}

}  // namespace tgp
