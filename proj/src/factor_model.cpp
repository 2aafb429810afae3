#include "tensorgp/factor_model.hpp"

#include "tensorgp/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

namespace tgp {

// ---------------------------------------------------------------- FactorModel

FactorModel FactorModel::cp(std::vector<FactorBank> banks, int rank, std::vector<Interval> box) {
    FactorModel m;
    m.kind_ = Decomposition::CP;
    m.ranks_ = {rank};
    m.banks_ = std::move(banks);
    m.box_ = std::move(box);
    m.validate();
    return m;
}

FactorModel FactorModel::tr(std::vector<FactorBank> banks, std::vector<int> ranks, std::vector<Interval> box) {
    FactorModel m;
    m.kind_ = Decomposition::TR;
    m.ranks_ = std::move(ranks);
    m.banks_ = std::move(banks);
    m.box_ = std::move(box);
    m.validate();
    return m;
}

int FactorModel::core_rows(int i) const {
    return kind_ == Decomposition::CP ? 1 : ranks_.at(static_cast<std::size_t>(i));
}

int FactorModel::core_cols(int i) const {
    if (kind_ == Decomposition::CP) return ranks_.front();
    return ranks_.at(static_cast<std::size_t>((i + 1) % dim()));
}

int FactorModel::columns(int i) const { return core_rows(i) * core_cols(i); }

void FactorModel::validate() const {
    if (dim() < 2) throw Error(ErrorCode::InvalidArgument, "a tensor model needs at least two dimensions");
    if (static_cast<int>(box_.size()) != dim())
        throw Error(ErrorCode::InvalidArgument, "bounding box dimension does not match the bank count");
    if (kind_ == Decomposition::CP && (ranks_.size() != 1 || ranks_.front() < 1))
        throw Error(ErrorCode::InvalidArgument, "CP model needs a single positive rank");
    if (kind_ == Decomposition::TR) {
        if (static_cast<int>(ranks_.size()) != dim())
            throw Error(ErrorCode::InvalidArgument, "TR model needs one ring rank per dimension");
        for (int r : ranks_)
            if (r < 1) throw Error(ErrorCode::InvalidArgument, "TR ranks must be positive");
    }
    for (int i = 0; i < dim(); ++i) {
        const FactorBank& b = banks_[static_cast<std::size_t>(i)];
        if (!b.gram) throw Error(ErrorCode::InvalidArgument, "bank without Gram factor");
        if (b.H.rows() != b.gram->size() || b.H.cols() != columns(i)) {
            std::ostringstream msg;
            msg << "bank " << i << " has H of shape " << b.H.rows() << "x" << b.H.cols() << ", expected "
                << b.gram->size() << "x" << columns(i);
            throw Error(ErrorCode::InvalidArgument, msg.str());
        }
        if (!b.H.allFinite()) throw Error(ErrorCode::InvalidArgument, "inducing values must be finite");
        if (!(box_[static_cast<std::size_t>(i)].hi > box_[static_cast<std::size_t>(i)].lo))
            throw Error(ErrorCode::InvalidArgument, "empty box interval");
    }
}

void FactorModel::set_inducing_values(int i, Eigen::MatrixXd H) {
    FactorBank& b = banks_.at(static_cast<std::size_t>(i));
    if (H.rows() != b.H.rows() || H.cols() != b.H.cols())
        throw Error(ErrorCode::InvalidArgument, "inducing value matrix has the wrong shape");
    if (!H.allFinite()) throw Error(ErrorCode::InvalidArgument, "inducing values must be finite");
    b.H = std::move(H);
}

FactorModel initialize_model(const ModelLayout& layout, std::uint64_t seed, double init_sd) {
    const std::size_t d = layout.box.size();
    if (layout.kernels.size() != d || layout.inducing_counts.size() != d)
        throw Error(ErrorCode::InvalidArgument, "layout needs one kernel and inducing count per dimension");

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, init_sd);

    auto columns = [&](std::size_t i) -> int {
        if (layout.decomposition == Decomposition::CP) return layout.ranks.at(0);
        return layout.ranks.at(i) * layout.ranks.at((i + 1) % d);
    };

    std::vector<FactorBank> banks;
    banks.reserve(d);
    for (std::size_t i = 0; i < d; ++i) {
        FactorBank bank;
        bank.spec = layout.kernels[i];
        bank.gram = build_gram(bank.spec, equally_spaced(layout.box[i].lo, layout.box[i].hi, layout.inducing_counts[i]));
        bank.H.resize(bank.gram->size(), columns(i));
        for (Eigen::Index c = 0; c < bank.H.cols(); ++c)
            for (Eigen::Index n = 0; n < bank.H.rows(); ++n) bank.H(n, c) = normal(rng);
        banks.push_back(std::move(bank));
    }
    if (layout.decomposition == Decomposition::CP) return FactorModel::cp(std::move(banks), layout.ranks.at(0), layout.box);
    return FactorModel::tr(std::move(banks), layout.ranks, layout.box);
}

// ---------------------------------------------------------------- pointwise evaluation

namespace {

void check_point(const FactorModel& model, std::span<const double> x, const MultiIndex& deriv) {
    if (static_cast<int>(x.size()) != model.dim() || deriv.dim() != model.dim())
        throw Error(ErrorCode::InvalidArgument, "point or derivative dimension does not match the model");
}

// Factor vector (or its derivative) along dimension i at coordinate xi.
Eigen::VectorXd factor_vector(const FactorModel& model, int i, double xi, int order) {
    const FactorBank& b = model.bank(i);
    return b.H.transpose() * interp_weights(*b.gram, b.spec, xi, order);
}

double trace_of_ring(const FactorModel& model, const std::vector<Eigen::VectorXd>& factors) {
    Eigen::MatrixXd prod = Eigen::Map<const Eigen::MatrixXd>(factors[0].data(), model.core_rows(0), model.core_cols(0));
    for (int i = 1; i < model.dim(); ++i) {
        Eigen::Map<const Eigen::MatrixXd> core(factors[static_cast<std::size_t>(i)].data(), model.core_rows(i),
                                               model.core_cols(i));
        prod = prod * core;
    }
    return prod.trace();
}

}  // namespace

double eval_cp(const FactorModel& model, std::span<const double> x, const MultiIndex& deriv) {
    if (model.decomposition() != Decomposition::CP)
        throw Error(ErrorCode::DecompositionMismatch, "eval_cp called on a tensor-ring model");
    check_point(model, x, deriv);
    Eigen::VectorXd acc = factor_vector(model, 0, x[0], deriv[0]);
    for (int i = 1; i < model.dim(); ++i) acc.array() *= factor_vector(model, i, x[static_cast<std::size_t>(i)], deriv[i]).array();
    return acc.sum();
}

double eval_tr(const FactorModel& model, std::span<const double> x, const MultiIndex& deriv) {
    if (model.decomposition() != Decomposition::TR)
        throw Error(ErrorCode::DecompositionMismatch, "eval_tr called on a CP model");
    check_point(model, x, deriv);
    std::vector<Eigen::VectorXd> factors;
    factors.reserve(static_cast<std::size_t>(model.dim()));
    for (int i = 0; i < model.dim(); ++i) factors.push_back(factor_vector(model, i, x[static_cast<std::size_t>(i)], deriv[i]));
    return trace_of_ring(model, factors);
}

double evaluate(const FactorModel& model, std::span<const double> x, const MultiIndex& deriv) {
    return model.decomposition() == Decomposition::CP ? eval_cp(model, x, deriv) : eval_tr(model, x, deriv);
}

// ---------------------------------------------------------------- cached evaluation

CollocationWeights::CollocationWeights(const FactorModel& model, Eigen::MatrixXd points, std::vector<int> orders)
    : points_(std::move(points)), orders_(std::move(orders)) {
    if (points_.cols() != model.dim()) throw Error(ErrorCode::InvalidArgument, "point dimension does not match the model");
    std::sort(orders_.begin(), orders_.end());
    orders_.erase(std::unique(orders_.begin(), orders_.end()), orders_.end());
    for (int o : orders_)
        if (o < 0 || o > MultiIndex::kMaxPerDim)
            throw Error(ErrorCode::UnsupportedDerivativeOrder, "cached derivative order must be in 0..2");

    const int d = model.dim();
    for (int j = 0; j < d; ++j) {
        const Interval& iv = model.box()[static_cast<std::size_t>(j)];
        const double tol = 1e-12 * std::max(1.0, iv.hi - iv.lo);
        for (Eigen::Index m = 0; m < points_.rows(); ++m) {
            const double v = points_(m, j);
            if (!(v >= iv.lo - tol && v <= iv.hi + tol)) {
                std::ostringstream msg;
                msg << "point " << m << " coordinate " << j << " = " << v << " lies outside [" << iv.lo << ", " << iv.hi << "]";
                throw Error(ErrorCode::PointOutsideBox, msg.str());
            }
        }
    }

    weights_.resize(static_cast<std::size_t>(d) * orders_.size());
    whitened_.resize(weights_.size());
    for (int j = 0; j < d; ++j) {
        const GramFactor& gram = *model.bank(j).gram;
        const auto upper = gram.lower().transpose();
        for (int o : orders_) {
            if (o > gram.spec().max_total_order())
                throw Error(ErrorCode::UnsupportedDerivativeOrder, "kernel of dimension " + std::to_string(j) +
                                                                       " does not support derivative order " + std::to_string(o));
            Eigen::MatrixXd W(points_.rows(), gram.size());
            Eigen::MatrixXd P(points_.rows(), gram.size());
            for (Eigen::Index m = 0; m < points_.rows(); ++m) {
                Eigen::VectorXd v = whitened_weights(gram, points_(m, j), o);
                P.row(m) = v.transpose();
                upper.triangularView<Eigen::Upper>().solveInPlace(v);
                W.row(m) = v.transpose();
            }
            weights_[slot(j, o)] = std::move(W);
            whitened_[slot(j, o)] = std::move(P);
        }
    }
}

bool CollocationWeights::has_order(int order) const noexcept {
    return std::find(orders_.begin(), orders_.end(), order) != orders_.end();
}

std::size_t CollocationWeights::slot(int dim, int order) const {
    const auto it = std::find(orders_.begin(), orders_.end(), order);
    if (it == orders_.end() || dim < 0 || dim >= this->dim())
        throw Error(ErrorCode::UnsupportedDerivativeOrder, "derivative order " + std::to_string(order) + " is not cached");
    return static_cast<std::size_t>(dim) * orders_.size() + static_cast<std::size_t>(it - orders_.begin());
}

const Eigen::MatrixXd& CollocationWeights::weights(int dim, int order) const { return weights_[slot(dim, order)]; }
const Eigen::MatrixXd& CollocationWeights::whitened(int dim, int order) const { return whitened_[slot(dim, order)]; }

FactorValues::FactorValues(const FactorModel& model, const CollocationWeights& cache) : orders_(cache.orders()) {
    values_.resize(static_cast<std::size_t>(model.dim()) * orders_.size());
    for (int j = 0; j < model.dim(); ++j) refresh(model, cache, j);
}

void FactorValues::refresh(const FactorModel& model, const CollocationWeights& cache, int dim) {
    for (std::size_t k = 0; k < orders_.size(); ++k)
        values_[static_cast<std::size_t>(dim) * orders_.size() + k].noalias() = cache.weights(dim, orders_[k]) * model.bank(dim).H;
}

const Eigen::MatrixXd& FactorValues::values(int dim, int order) const {
    const auto it = std::find(orders_.begin(), orders_.end(), order);
    if (it == orders_.end())
        throw Error(ErrorCode::UnsupportedDerivativeOrder, "derivative order " + std::to_string(order) + " is not cached");
    return values_[static_cast<std::size_t>(dim) * orders_.size() + static_cast<std::size_t>(it - orders_.begin())];
}

Eigen::VectorXd eval_all(const FactorModel& model, const FactorValues& values, const MultiIndex& deriv) {
    if (deriv.dim() != model.dim()) throw Error(ErrorCode::InvalidArgument, "derivative dimension does not match the model");
    const Eigen::MatrixXd& first = values.values(0, deriv[0]);
    const Eigen::Index M = first.rows();
    if (model.decomposition() == Decomposition::CP) {
        Eigen::ArrayXXd acc = first.array();
        for (int i = 1; i < model.dim(); ++i) acc *= values.values(i, deriv[i]).array();
        return acc.rowwise().sum().matrix();
    }
    Eigen::VectorXd out(M);
    Eigen::MatrixXd prod;
    for (Eigen::Index m = 0; m < M; ++m) {
        const Eigen::VectorXd f0 = first.row(m).transpose();
        prod = Eigen::Map<const Eigen::MatrixXd>(f0.data(), model.core_rows(0), model.core_cols(0));
        for (int i = 1; i < model.dim(); ++i) {
            const Eigen::VectorXd fi = values.values(i, deriv[i]).row(m).transpose();
            prod = prod * Eigen::Map<const Eigen::MatrixXd>(fi.data(), model.core_rows(i), model.core_cols(i));
        }
        out[m] = prod.trace();
    }
    return out;
}

Eigen::VectorXd eval_all(const FactorModel& model, const CollocationWeights& cache, const MultiIndex& deriv) {
    return eval_all(model, FactorValues(model, cache), deriv);
}

double eval_cached(const FactorModel& model, const CollocationWeights& cache, Eigen::Index m, const MultiIndex& deriv) {
    if (deriv.dim() != model.dim()) throw Error(ErrorCode::InvalidArgument, "derivative dimension does not match the model");
    std::vector<Eigen::VectorXd> factors;
    for (int i = 0; i < model.dim(); ++i)
        factors.push_back(model.bank(i).H.transpose() * cache.weights(i, deriv[i]).row(m).transpose());
    if (model.decomposition() == Decomposition::TR) return trace_of_ring(model, factors);
    Eigen::VectorXd acc = factors[0];
    for (std::size_t i = 1; i < factors.size(); ++i) acc.array() *= factors[i].array();
    return acc.sum();
}

// ---------------------------------------------------------------- RKHS norms

std::vector<double> rkhs_norms(const FactorModel& model) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(model.dim()));
    for (const FactorBank& b : model.banks()) out.push_back(b.gram->whiten(b.H).squaredNorm());
    return out;
}

double tensor_rkhs_norm_sq(const FactorModel& model) {
    if (model.decomposition() != Decomposition::CP)
        throw Error(ErrorCode::DecompositionMismatch, "tensor RKHS norm is defined for CP models");
    const int R = model.ranks().front();
    Eigen::ArrayXXd acc = Eigen::ArrayXXd::Ones(R, R);
    for (const FactorBank& b : model.banks()) {
        const Eigen::MatrixXd Z = b.gram->whiten(b.H);
        acc *= (Z.transpose() * Z).array();
    }
    return acc.sum();
}

FactorModel tr_to_cp(const FactorModel& model) {
    if (model.decomposition() != Decomposition::TR || model.dim() != 2)
        throw Error(ErrorCode::DecompositionMismatch, "only two-dimensional TR models reduce to CP");
    const int r0 = model.ranks()[0];
    const int r1 = model.ranks()[1];
    std::vector<FactorBank> banks = model.banks();
    // CP column (a, b) pairs F1(a, b) with F2(b, a): Trace(F1 F2) = sum_ab F1(a,b) F2(b,a).
    Eigen::MatrixXd H1(banks[0].H.rows(), r0 * r1);
    Eigen::MatrixXd H2(banks[1].H.rows(), r0 * r1);
    for (int a = 0; a < r0; ++a) {
        for (int b = 0; b < r1; ++b) {
            const int c = b + r1 * a;  // vec(F1^T) ordering
            H1.col(c) = model.bank(0).H.col(a + r0 * b);
            H2.col(c) = model.bank(1).H.col(b + r1 * a);  // vec(F2) ordering
        }
    }
    banks[0].H = std::move(H1);
    banks[1].H = std::move(H2);
    return FactorModel::cp(std::move(banks), r0 * r1, model.box());
}

// ---------------------------------------------------------------- checkpoints

void to_json(nlohmann::json& j, const FactorModel& model) {
    j = nlohmann::json::object();
    j["format"] = "tensorgp-checkpoint";
    j["version"] = 1;
    j["decomposition"] = model.decomposition() == Decomposition::CP ? "cp" : "tr";
    j["ranks"] = model.ranks();
    nlohmann::json banks = nlohmann::json::array();
    for (int i = 0; i < model.dim(); ++i) {
        const FactorBank& b = model.bank(i);
        nlohmann::json jb;
        jb["box"] = {model.box()[static_cast<std::size_t>(i)].lo, model.box()[static_cast<std::size_t>(i)].hi};
        jb["kernel"] = {{"family", std::string(to_string(b.spec.family))},
                        {"length_scale", b.spec.length_scale},
                        {"variance", b.spec.variance},
                        {"nugget", b.spec.nugget}};
        jb["locations"] = std::vector<double>(b.gram->locations().begin(), b.gram->locations().end());
        jb["rows"] = b.H.rows();
        jb["cols"] = b.H.cols();
        // column-major flattening
        jb["H"] = std::vector<double>(b.H.data(), b.H.data() + b.H.size());
        banks.push_back(std::move(jb));
    }
    j["banks"] = std::move(banks);
}

FactorModel model_from_json(const nlohmann::json& j) {
    try {
        const std::string kind = j.at("decomposition").get<std::string>();
        const auto ranks = j.at("ranks").get<std::vector<int>>();
        std::vector<FactorBank> banks;
        std::vector<Interval> box;
        for (const auto& jb : j.at("banks")) {
            const auto bx = jb.at("box").get<std::vector<double>>();
            box.push_back({bx.at(0), bx.at(1)});
            FactorBank b;
            const auto& jk = jb.at("kernel");
            b.spec.family = kernel_family_from_string(jk.at("family").get<std::string>());
            b.spec.length_scale = jk.at("length_scale").get<double>();
            b.spec.variance = jk.at("variance").get<double>();
            b.spec.nugget = jk.at("nugget").get<double>();
            b.gram = build_gram(b.spec, jb.at("locations").get<std::vector<double>>());
            const auto rows = jb.at("rows").get<Eigen::Index>();
            const auto cols = jb.at("cols").get<Eigen::Index>();
            const auto flat = jb.at("H").get<std::vector<double>>();
            if (static_cast<Eigen::Index>(flat.size()) != rows * cols)
                throw Error(ErrorCode::IoError, "checkpoint H has the wrong number of entries");
            b.H = Eigen::Map<const Eigen::MatrixXd>(flat.data(), rows, cols);
            banks.push_back(std::move(b));
        }
        if (kind == "cp") return FactorModel::cp(std::move(banks), ranks.at(0), std::move(box));
        if (kind == "tr") return FactorModel::tr(std::move(banks), ranks, std::move(box));
        throw Error(ErrorCode::IoError, "unknown decomposition '" + kind + "'");
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::IoError, std::string("malformed checkpoint: ") + e.what());
    }
}

void save_checkpoint(const FactorModel& model, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    nlohmann::json j = model;
    out << j.dump() << '\n';
}

FactorModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::IoError, std::string("malformed checkpoint: ") + e.what());
    }
    return model_from_json(j);
}

bool identical(const FactorModel& a, const FactorModel& b) {
    if (a.decomposition() != b.decomposition() || a.ranks() != b.ranks() || a.dim() != b.dim() || a.box() != b.box())
        return false;
    for (int i = 0; i < a.dim(); ++i) {
        const FactorBank& x = a.bank(i);
        const FactorBank& y = b.bank(i);
        if (!(x.spec == y.spec)) return false;
        if (!std::equal(x.gram->locations().begin(), x.gram->locations().end(), y.gram->locations().begin(),
                        y.gram->locations().end()))
            return false;
        if (x.H.rows() != y.H.rows() || x.H.cols() != y.H.cols()) return false;
        if (std::memcmp(x.H.data(), y.H.data(), sizeof(double) * static_cast<std::size_t>(x.H.size())) != 0) return false;
    }
    return true;
}

}  // namespace tgp
