#include "tensorgp/als_engine.hpp"

#include "tensorgp/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <locale>
#include <map>
#include <memory>
#include <sstream>

namespace tgp {

void SolverConfig::validate() const {
    if (!(alpha_interior >= 1.0 && alpha_interior <= 1e10) || !(alpha_boundary >= 1.0 && alpha_boundary <= 1e10))
        throw Error(ErrorCode::InvalidArgument, "alpha weights must lie in [1, 1e10]");
    if (outer_iters < 0) throw Error(ErrorCode::InvalidArgument, "outer_iters must be non-negative");
    if (inner_sweeps < 1) throw Error(ErrorCode::InvalidArgument, "inner_sweeps must be positive");
    if (!(convergence_tol >= 0)) throw Error(ErrorCode::InvalidArgument, "convergence_tol must be non-negative");
}

std::string LossTrace::to_csv() const {
    std::ostringstream out;
    out.imbue(std::locale::classic());
    out.precision(17);
    out << "iter,objective,interior_mse,boundary_mse,rkhs_penalty,seconds\n";
    for (const LossRecord& r : records)
        out << r.iter << ',' << r.objective << ',' << r.interior_mse << ',' << r.boundary_mse << ',' << r.rkhs_penalty << ','
            << r.seconds << '\n';
    return out.str();
}

void LossTrace::save_csv(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << to_csv();
}

std::vector<DesignRow> DesignSystem::rows() const {
    std::vector<DesignRow> out;
    out.reserve(static_cast<std::size_t>(B.rows()));
    for (Eigen::Index m = 0; m < B.rows(); ++m) out.push_back({B.row(m).transpose(), g[m], weight[m]});
    return out;
}

// ---------------------------------------------------------------- assembly

namespace {

std::vector<int> needed_orders(const PdeSystem& pde) {
    std::vector<int> out;
    for (int o = 0; o <= std::max(pde.interior.max_order(), pde.boundary.max_order()); ++o) out.push_back(o);
    return out;
}

// Gamma^(o): M x C coefficients multiplying w_i^(o) in each row, grouped by o = deriv[i].
std::map<int, Eigen::MatrixXd> gamma_tables(const FactorModel& model, int i,
                                            const std::vector<LinearizedResidual::Term>& terms, const FactorValues& values,
                                            Eigen::Index M) {
    const int d = model.dim();
    const Eigen::Index C = model.columns(i);
    std::map<int, Eigen::MatrixXd> out;
    for (const auto& t : terms) {
        auto [it, fresh] = out.try_emplace(t.deriv[i], Eigen::MatrixXd::Zero(M, C));
        Eigen::MatrixXd& G = it->second;
        if (model.decomposition() == Decomposition::CP) {
            Eigen::ArrayXXd beta = Eigen::ArrayXXd::Ones(M, C);
            for (int j = 0; j < d; ++j)
                if (j != i) beta *= values.values(j, t.deriv[j]).array();
            G.array() += beta.colwise() * t.coeff.array();
        } else {
            const int ri = model.core_rows(i);
            const int rn = model.core_cols(i);
            Eigen::MatrixXd P;
            for (Eigen::Index m = 0; m < M; ++m) {
                if (t.coeff[m] == 0.0) continue;
                P = Eigen::MatrixXd::Identity(rn, rn);
                for (int k = 1; k < d; ++k) {
                    const int j = (i + k) % d;
                    const Eigen::VectorXd f = values.values(j, t.deriv[j]).row(m).transpose();
                    P = P * Eigen::Map<const Eigen::MatrixXd>(f.data(), model.core_rows(j), model.core_cols(j));
                }
                // P is rn x ri; column c = a + ri*b of F_i pairs with P(b, a).
                const Eigen::MatrixXd Pt = P.transpose();
                G.row(m) += t.coeff[m] * Eigen::Map<const Eigen::RowVectorXd>(Pt.data(), ri * rn);
            }
        }
    }
    return out;
}

}  // namespace

DesignSystem assemble_dimension(const FactorModel& model, int dim, std::span<const DesignBlock> blocks, DesignBasis basis) {
    DesignSystem sys;
    assemble_dimension(sys, model, dim, blocks, basis);
    return sys;
}

void assemble_dimension(DesignSystem& sys, const FactorModel& model, int dim, std::span<const DesignBlock> blocks,
                        DesignBasis basis) {
    if (dim < 0 || dim >= model.dim()) throw Error(ErrorCode::InvalidArgument, "dimension out of range");
    const Eigen::Index N = model.bank(dim).gram->size();
    const Eigen::Index C = model.columns(dim);
    Eigen::Index total = 0;
    for (const DesignBlock& b : blocks) total += b.cache->size();

    sys.basis = basis;
    sys.N = N;
    sys.C = C;
    sys.B.resize(total, N * C);
    sys.g.resize(total);
    sys.weight.resize(total);

    Eigen::Index offset = 0;
    for (const DesignBlock& blk : blocks) {
        const Eigen::Index M = blk.cache->size();
        std::unique_ptr<FactorValues> own;
        const FactorValues* values = blk.values;
        if (!values) {
            own = std::make_unique<FactorValues>(model, *blk.cache);
            values = own.get();
        }
        const auto gammas = gamma_tables(model, dim, blk.lin->terms, *values, M);
        // Row chunks keep the block being filled in cache.
        constexpr Eigen::Index chunk = 256;
        for (Eigen::Index r0 = 0; r0 < M; r0 += chunk) {
            const Eigen::Index len = std::min(chunk, M - r0);
            auto rows = sys.B.middleRows(offset + r0, len);
            rows.setZero();
            for (const auto& [o, G] : gammas) {
                const Eigen::MatrixXd& Phi =
                    basis == DesignBasis::Whitened ? blk.cache->whitened(dim, o) : blk.cache->weights(dim, o);
                for (Eigen::Index c = 0; c < C; ++c)
                    rows.middleCols(c * N, N).noalias() += G.col(c).segment(r0, len).asDiagonal() * Phi.middleRows(r0, len);
            }
        }
        sys.g.segment(offset, M) = blk.lin->target();
        sys.weight.segment(offset, M).setConstant(blk.weight);
        offset += M;
    }
}

// ---------------------------------------------------------------- solve

Eigen::MatrixXd solve_dimension(DesignSystem sys, const GramFactor& gram, LeastSquares method) {
    return solve_dimension_inplace(sys, gram, method);
}

Eigen::MatrixXd solve_dimension_inplace(DesignSystem& sys, const GramFactor& gram, LeastSquares method) {
    const Eigen::Index N = sys.N, C = sys.C;
    if (N != gram.size()) throw Error(ErrorCode::InvalidArgument, "design system and Gram factor sizes differ");
    if (N * C > 20000) throw Error(ErrorCode::InvalidArgument, "per-dimension system exceeds 20000 unknowns");
    if (sys.B.cols() != N * C || sys.g.size() != sys.B.rows() || sys.weight.size() != sys.B.rows())
        throw Error(ErrorCode::InvalidArgument, "inconsistent design system shapes");
    const Eigen::MatrixXd& L = gram.lower();
    if (sys.basis == DesignBasis::InducingValues) {
        // <b, vec(H)> = <(I kron L^T) b, vec(L^{-1} H)>
        for (Eigen::Index c = 0; c < C; ++c) sys.B.middleCols(c * N, N) = sys.B.middleCols(c * N, N) * L;
    }
    const Eigen::VectorXd sw = sys.weight.cwiseSqrt();
    sys.B.array().colwise() *= sw.array();
    if (method == LeastSquares::QR) {
        // Orthogonal factorization of [sqrt(W) B; I]: conditioning is not squared.
        Eigen::MatrixXd S(sys.B.rows() + N * C, N * C);
        S.topRows(sys.B.rows()) = sys.B;
        S.bottomRows(N * C).setIdentity();
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(S.rows());
        rhs.head(sys.B.rows()) = sw.cwiseProduct(sys.g);
        Eigen::HouseholderQR<Eigen::Ref<Eigen::MatrixXd>> qr(S);
        const Eigen::VectorXd z = qr.solve(rhs);
        if (!z.allFinite()) throw Error(ErrorCode::IllConditioned, "per-dimension solve produced non-finite values");
        return L * Eigen::Map<const Eigen::MatrixXd>(z.data(), N, C);
    }
    const Eigen::VectorXd y = sys.B.transpose() * sw.cwiseProduct(sys.g);
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(N * C, N * C);
    A.selfadjointView<Eigen::Lower>().rankUpdate(sys.B.transpose());
    Eigen::LLT<Eigen::MatrixXd, Eigen::Lower> llt(A);
    if (llt.info() != Eigen::Success) {
        const double jitter = 1e-12 * A.diagonal().sum() / static_cast<double>(A.rows());
        A.diagonal().array() += jitter;
        llt.compute(A);
        if (llt.info() != Eigen::Success)
            throw Error(ErrorCode::IllConditioned, "normal matrix is not positive definite after jitter");
    }
    const Eigen::VectorXd z = llt.solve(y);
    if (!z.allFinite()) throw Error(ErrorCode::IllConditioned, "per-dimension solve produced non-finite values");
    return L * Eigen::Map<const Eigen::MatrixXd>(z.data(), N, C);
}

Eigen::MatrixXd solve_dimension(const std::vector<DesignRow>& rows, const GramFactor& gram, Eigen::Index C,
                                LeastSquares method) {
    DesignSystem sys;
    sys.basis = DesignBasis::InducingValues;
    sys.N = gram.size();
    sys.C = C;
    sys.B.resize(static_cast<Eigen::Index>(rows.size()), sys.N * C);
    sys.g.resize(sys.B.rows());
    sys.weight.resize(sys.B.rows());
    for (std::size_t m = 0; m < rows.size(); ++m) {
        if (rows[m].b.size() != sys.N * C) throw Error(ErrorCode::InvalidArgument, "design row has the wrong length");
        sys.B.row(static_cast<Eigen::Index>(m)) = rows[m].b.transpose();
        sys.g[static_cast<Eigen::Index>(m)] = rows[m].g;
        sys.weight[static_cast<Eigen::Index>(m)] = rows[m].weight;
    }
    return solve_dimension_inplace(sys, gram, method);
}

// ---------------------------------------------------------------- objective

namespace {

double rkhs_total(const FactorModel& model) {
    double s = 0;
    for (double v : rkhs_norms(model)) s += v;
    return s;
}

// Everything about one side (interior or boundary) that stays fixed during a fit.
struct Side {
    const ResidualSpec* spec = nullptr;
    std::unique_ptr<CollocationWeights> cache;
    std::unique_ptr<FactorValues> values;
    SampledSpec sampled;
    std::vector<MultiIndex> derivs;
    double weight = 0;  // alpha / M
    double alpha = 0;

    Side(const FactorModel& model, const ResidualSpec& s, const Eigen::MatrixXd& points, double a,
         const std::vector<int>& orders, const char* name)
        : spec(&s), alpha(a) {
        if (points.rows() == 0) throw Error(ErrorCode::InvalidArgument, std::string(name) + " collocation set is empty");
        if (s.dim != model.dim()) throw Error(ErrorCode::InvalidArgument, std::string(name) + " spec dimension mismatch");
        cache = std::make_unique<CollocationWeights>(model, points, orders);
        values = std::make_unique<FactorValues>(model, *cache);
        sampled = SampledSpec::sample(s, points);
        derivs = s.required_derivatives();
        weight = a / static_cast<double>(points.rows());
    }

    [[nodiscard]] FieldSamples field(const FactorModel& model) const { return sample_field(model, *values, derivs); }
    [[nodiscard]] Eigen::VectorXd residual(const FactorModel& model) const {
        return residual_values(*spec, sampled, field(model));
    }
};

struct FitState {
    Side interior;
    Side boundary;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    FitState(const FactorModel& model, const PdeSystem& pde, const CollocationSet& colloc, const SolverConfig& cfg)
        : interior(model, pde.interior, colloc.interior, cfg.alpha_interior, needed_orders(pde), "interior"),
          boundary(model, pde.boundary, colloc.boundary, cfg.alpha_boundary, needed_orders(pde), "boundary") {}

    void refresh(const FactorModel& model, int dim) {
        interior.values->refresh(model, *interior.cache, dim);
        boundary.values->refresh(model, *boundary.cache, dim);
    }

    [[nodiscard]] double elapsed() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }

    [[nodiscard]] LossRecord record(const FactorModel& model, int iter, const Eigen::VectorXd& r_int,
                                    const Eigen::VectorXd& r_bdy) const {
        LossRecord rec;
        rec.iter = iter;
        rec.interior_mse = r_int.squaredNorm() / static_cast<double>(r_int.size());
        rec.boundary_mse = r_bdy.squaredNorm() / static_cast<double>(r_bdy.size());
        rec.rkhs_penalty = rkhs_total(model);
        rec.objective = rec.rkhs_penalty + interior.alpha * rec.interior_mse + boundary.alpha * rec.boundary_mse;
        rec.seconds = elapsed();
        return rec;
    }

    [[nodiscard]] LossRecord record(const FactorModel& model, int iter) const {
        return record(model, iter, interior.residual(model), boundary.residual(model));
    }
};

bool diverged(const LossRecord& rec, double initial) {
    return !std::isfinite(rec.objective) || rec.objective > 1e6 * initial;
}

// Adds sum_o W^(o)^T diag(scale) Gamma^(o) into grads[i] for every dimension.
void accumulate_gradient(const FactorModel& model, const Side& side, const Eigen::VectorXd& scale,
                         const LinearizedResidual& lin, std::vector<Eigen::MatrixXd>& grads) {
    for (int i = 0; i < model.dim(); ++i) {
        const auto gammas = gamma_tables(model, i, lin.terms, *side.values, side.cache->size());
        for (const auto& [o, G] : gammas) grads[static_cast<std::size_t>(i)].noalias() += side.cache->weights(i, o).transpose() * (scale.asDiagonal() * G);
    }
}

// Gradient of the true objective at the current model and the matching loss record.
LossRecord gradient_and_record(const FactorModel& model, const FitState& st, int iter, std::vector<Eigen::MatrixXd>& grads) {
    grads.resize(static_cast<std::size_t>(model.dim()));
    for (int i = 0; i < model.dim(); ++i) grads[static_cast<std::size_t>(i)] = 2.0 * model.bank(i).gram->solve(model.bank(i).H);
    Eigen::VectorXd res[2];
    int k = 0;
    for (const Side* side : {&st.interior, &st.boundary}) {
        const FieldSamples u = side->field(model);
        res[k] = residual_values(*side->spec, side->sampled, u);
        // The Newton linear part is the exact derivative of the residual with respect to u.
        const LinearizedResidual lin = linearize(*side->spec, side->sampled, u, Linearizer::Newton);
        accumulate_gradient(model, *side, 2.0 * side->weight * res[k], lin, grads);
        ++k;
    }
    return st.record(model, iter, res[0], res[1]);
}

}  // namespace

LossRecord evaluate_objective(const FactorModel& model, const PdeSystem& pde, const CollocationSet& colloc,
                              const SolverConfig& cfg) {
    const FitState st(model, pde, colloc, cfg);
    LossRecord rec = st.record(model, 0);
    rec.seconds = 0;
    return rec;
}

double surrogate_objective(const FactorModel& model, std::span<const DesignBlock> blocks) {
    double total = rkhs_total(model);
    for (const DesignBlock& blk : blocks) {
        std::vector<MultiIndex> derivs;
        for (const auto& t : blk.lin->terms) derivs.push_back(t.deriv);
        const FieldSamples u = sample_field(model, FactorValues(model, *blk.cache), derivs);
        total += blk.weight * blk.lin->apply(u).squaredNorm();
    }
    return total;
}

std::vector<Eigen::MatrixXd> objective_gradient(const FactorModel& model, const PdeSystem& pde,
                                                const CollocationSet& colloc, const SolverConfig& cfg) {
    const FitState st(model, pde, colloc, cfg);
    std::vector<Eigen::MatrixXd> grads;
    gradient_and_record(model, st, 0, grads);
    return grads;
}

// ---------------------------------------------------------------- ALS

FitResult als_fit(FactorModel model, const PdeSystem& pde, const CollocationSet& colloc, const SolverConfig& cfg,
                  const FitObserver& observer) {
    cfg.validate();
    FitState st(model, pde, colloc, cfg);
    FitResult out{model, {}, false, 0};
    out.trace.records.push_back(st.record(model, 0));
    const double initial = out.trace.back().objective;
    if (observer && !observer(out.trace.back(), model)) {
        out.model = std::move(model);
        return out;
    }

    int streak = 0;
    DesignSystem work;
    for (int it = 1; it <= cfg.outer_iters; ++it) {
        const LinearizedResidual lin_int =
            linearize(pde.interior, st.interior.sampled, st.interior.field(model), cfg.linearizer, cfg.advection);
        const LinearizedResidual lin_bdy =
            linearize(pde.boundary, st.boundary.sampled, st.boundary.field(model), cfg.linearizer, cfg.advection);
        for (int sweep = 0; sweep < cfg.inner_sweeps; ++sweep) {
            for (int i = 0; i < model.dim(); ++i) {
                const DesignBlock blocks[2] = {
                    {&lin_int, st.interior.cache.get(), st.interior.values.get(), st.interior.weight},
                    {&lin_bdy, st.boundary.cache.get(), st.boundary.values.get(), st.boundary.weight}};
                assemble_dimension(work, model, i, blocks, DesignBasis::Whitened);
                model.set_inducing_values(i, solve_dimension_inplace(work, *model.bank(i).gram, cfg.least_squares));
                st.refresh(model, i);
            }
        }
        const LossRecord rec = st.record(model, it);
        const double prev = out.trace.back().objective;
        out.trace.records.push_back(rec);
        out.iterations = it;
        if (diverged(rec, initial)) {
            out.diverged = true;
            break;
        }
        if (observer && !observer(rec, model)) break;
        const double change = std::abs(prev - rec.objective) / std::max(std::abs(prev), 1e-300);
        streak = change < cfg.convergence_tol ? streak + 1 : 0;
        if (streak >= 3) break;
    }
    out.model = std::move(model);
    return out;
}

// ---------------------------------------------------------------- ADAM

FitResult adam_fit(FactorModel model, const PdeSystem& pde, const CollocationSet& colloc, const SolverConfig& cfg,
                   const AdamConfig& adam, const FitObserver& observer) {
    cfg.validate();
    if (adam.steps < 0 || adam.record_every < 1 || !(adam.learning_rate > 0))
        throw Error(ErrorCode::InvalidArgument, "invalid ADAM settings");
    FitState st(model, pde, colloc, cfg);
    FitResult out{model, {}, false, 0};
    const int d = model.dim();
    std::vector<Eigen::MatrixXd> m1(static_cast<std::size_t>(d)), m2(static_cast<std::size_t>(d)), grads;
    for (int i = 0; i < d; ++i) {
        m1[static_cast<std::size_t>(i)] = Eigen::MatrixXd::Zero(model.bank(i).H.rows(), model.bank(i).H.cols());
        m2[static_cast<std::size_t>(i)] = m1[static_cast<std::size_t>(i)];
    }
    double initial = 0;
    double b1t = 1, b2t = 1;
    for (int step = 0;; ++step) {
        // The record for `step` comes with the gradient at the same parameters.
        const LossRecord rec = gradient_and_record(model, st, step, grads);
        if (step == 0) initial = rec.objective;
        if (step == 0 || step == adam.steps || step % adam.record_every == 0) {
            out.trace.records.push_back(rec);
            if (observer && !observer(rec, model)) break;
        }
        if (diverged(rec, initial)) {
            if (out.trace.back().iter != step) out.trace.records.push_back(rec);
            out.diverged = true;
            break;
        }
        if (step == adam.steps) break;
        b1t *= adam.beta1;
        b2t *= adam.beta2;
        for (int i = 0; i < d; ++i) {
            const auto k = static_cast<std::size_t>(i);
            m1[k] = adam.beta1 * m1[k] + (1 - adam.beta1) * grads[k];
            m2[k] = adam.beta2 * m2[k] + (1 - adam.beta2) * grads[k].cwiseAbs2();
            const Eigen::ArrayXXd mhat = m1[k].array() / (1 - b1t);
            const Eigen::ArrayXXd vhat = m2[k].array() / (1 - b2t);
            Eigen::MatrixXd H = model.bank(i).H;
            H.array() -= adam.learning_rate * mhat / (vhat.sqrt() + adam.epsilon);
            if (!H.allFinite()) {
                out.diverged = true;
                break;
            }
            model.set_inducing_values(i, std::move(H));
            st.refresh(model, i);
        }
        if (out.diverged) break;
        out.iterations = step + 1;
    }
    out.model = std::move(model);
    return out;
}

}  // namespace tgp
