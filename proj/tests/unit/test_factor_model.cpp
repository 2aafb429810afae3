#include "helpers.hpp"

#include "tensorgp/errors.hpp"
#include "tensorgp/factor_model.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <random>

using namespace tgp;
using testutil::random_model;
using testutil::random_points;
using testutil::rel_err;
using testutil::row;

namespace {

// Factor function c of bank i evaluated from its definition w(x)^T eta.
double factor(const FactorModel& m, int i, int c, double x, int order) {
    const FactorBank& b = m.bank(i);
    return interp_weights(*b.gram, b.spec, x, order).dot(b.H.col(c));
}

FactorModel with_bank(const FactorModel& m, int i, const Eigen::MatrixXd& H) {
    FactorModel out = m;
    out.set_inducing_values(i, H);
    return out;
}

}  // namespace

TEST_CASE("CP model of constant factors evaluates to one") {
    KernelSpec k;
    k.length_scale = 0.3;
    k.nugget = 0.0;
    std::vector<FactorBank> banks;
    for (int i = 0; i < 2; ++i) banks.push_back({k, build_gram(k, equally_spaced(0, 1, 8)), Eigen::MatrixXd::Ones(8, 1)});
    const FactorModel m = FactorModel::cp(banks, 1, {{0, 1}, {0, 1}});
    const auto locs = equally_spaced(0, 1, 8);
    const double x[2] = {locs[3], locs[5]};
    CHECK(eval_cp(m, x, MultiIndex::zero(2)) == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("CP evaluation equals naive factor summation") {
    const FactorModel m = random_model(Decomposition::CP, {2}, 2, 12, 1);
    const Eigen::MatrixXd p = random_points(20, 2, 2);
    for (Eigen::Index q = 0; q < p.rows(); ++q) {
        double naive = 0;
        for (int r = 0; r < 2; ++r) naive += factor(m, 0, r, p(q, 0), 0) * factor(m, 1, r, p(q, 1), 0);
        CHECK(rel_err(eval_cp(m, row(p, q), MultiIndex::zero(2)), naive) <= 1e-12);
    }
}

TEST_CASE("CP second derivative matches a finite difference") {
    const FactorModel m = random_model(Decomposition::CP, {3}, 2, 10, 3, 0.15);
    const Eigen::MatrixXd p = random_points(50, 2, 4, 0.05, 0.95);
    const double h = 1e-4;
    for (Eigen::Index q = 0; q < p.rows(); ++q) {
        auto x = row(p, q);
        const double mid = eval_cp(m, x, MultiIndex::zero(2));
        x[0] += h;
        const double up = eval_cp(m, x, MultiIndex::zero(2));
        x[0] -= 2 * h;
        const double dn = eval_cp(m, x, MultiIndex::zero(2));
        const double fd = (up - 2 * mid + dn) / (h * h);
        CHECK(rel_err(eval_cp(m, row(p, q), MultiIndex({2, 0})), fd) <= 1e-4);
    }
}

TEST_CASE("two-dimensional TR equals its CP rewrite") {
    const FactorModel tr = random_model(Decomposition::TR, {2, 3}, 2, 10, 5);
    const FactorModel cp = tr_to_cp(tr);
    CHECK(cp.ranks().front() == 6);
    const Eigen::MatrixXd p = random_points(30, 2, 6);
    for (Eigen::Index q = 0; q < p.rows(); ++q) {
        for (const auto& d : {MultiIndex({0, 0}), MultiIndex({1, 2}), MultiIndex({2, 0})})
            CHECK(rel_err(eval_tr(tr, row(p, q), d), eval_cp(cp, row(p, q), d)) <= 1e-12);
    }
}

TEST_CASE("TR with zero inducing values is zero") {
    FactorModel m = random_model(Decomposition::TR, {2, 2, 2}, 3, 6, 7);
    for (int i = 0; i < 3; ++i) m.set_inducing_values(i, Eigen::MatrixXd::Zero(6, 4));
    const double x[3] = {0.2, 0.4, 0.9};
    CHECK(eval_tr(m, x, MultiIndex::zero(3)) == 0.0);
}

TEST_CASE("three-dimensional TR equals the trace of explicit matrix products") {
    const FactorModel m = random_model(Decomposition::TR, {2, 2, 2}, 3, 9, 8);
    const Eigen::MatrixXd p = random_points(20, 3, 9);
    for (Eigen::Index q = 0; q < p.rows(); ++q) {
        Eigen::Matrix2d F[3];
        for (int i = 0; i < 3; ++i)
            for (int a = 0; a < 2; ++a)
                for (int b = 0; b < 2; ++b) F[i](a, b) = factor(m, i, a + 2 * b, p(q, i), 0);
        const double expected = (F[0] * F[1] * F[2]).trace();
        CHECK(rel_err(eval_tr(m, row(p, q), MultiIndex::zero(3)), expected) <= 1e-12);
    }
}

TEST_CASE("decomposition mismatch is reported") {
    const FactorModel cp = random_model(Decomposition::CP, {2}, 2, 5, 1);
    const FactorModel tr = random_model(Decomposition::TR, {2, 2}, 2, 5, 1);
    const double x[2] = {0.5, 0.5};
    try {
        eval_tr(cp, x, MultiIndex::zero(2));
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DecompositionMismatch);
    }
    CHECK_THROWS_AS(eval_cp(tr, x, MultiIndex::zero(2)), Error);
    CHECK_THROWS_AS(tensor_rkhs_norm_sq(tr), Error);
}

TEST_CASE("derivative multi-index limits") {
    CHECK_THROWS_AS(MultiIndex({3, 0}), Error);
    CHECK_THROWS_AS(MultiIndex({2, 2, 1}), Error);
    CHECK(MultiIndex({2, 2}).total() == 4);
    CHECK(MultiIndex({1, 0, 2}).str() == "(1,0,2)");
}

TEST_CASE("collocation weights") {
    const FactorModel m = random_model(Decomposition::CP, {3}, 2, 12, 11);
    SUBCASE("single point equals interp_weights") {
        Eigen::MatrixXd p(1, 2);
        p << 0.31, 0.77;
        const CollocationWeights c(m, p, {0});
        for (int j = 0; j < 2; ++j) {
            const Eigen::VectorXd w = interp_weights(*m.bank(j).gram, m.bank(j).spec, p(0, j), 0);
            CHECK(c.weights(j, 0).row(0).transpose() == w);
        }
    }
    SUBCASE("repeated points give identical rows") {
        Eigen::MatrixXd p(3, 2);
        p << 0.4, 0.6, 0.4, 0.6, 0.4, 0.6;
        const CollocationWeights c(m, p);
        for (int j = 0; j < 2; ++j)
            for (int o = 0; o <= 2; ++o) {
                CHECK(c.weights(j, o).row(0) == c.weights(j, o).row(1));
                CHECK(c.weights(j, o).row(0) == c.weights(j, o).row(2));
            }
    }
    SUBCASE("cached and direct evaluation agree") {
        const Eigen::MatrixXd p = random_points(40, 2, 12);
        const CollocationWeights c(m, p);
        for (Eigen::Index q = 0; q < p.rows(); ++q)
            for (const auto& d : {MultiIndex({0, 0}), MultiIndex({1, 0}), MultiIndex({2, 2})}) {
                const double direct = eval_cp(m, row(p, q), d);
                CHECK(std::abs(eval_cached(m, c, q, d) - direct) <= 1e-15 * std::max(1.0, std::abs(direct)));
            }
        const Eigen::VectorXd all = eval_all(m, c, MultiIndex({0, 2}));
        for (Eigen::Index q = 0; q < p.rows(); ++q) CHECK(rel_err(all[q], eval_cp(m, row(p, q), MultiIndex({0, 2}))) <= 1e-12);
    }
    SUBCASE("points outside the box are rejected") {
        Eigen::MatrixXd p(1, 2);
        p << 0.5, 1.5;
        try {
            CollocationWeights c(m, p);
            FAIL("expected throw");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::PointOutsideBox);
        }
    }
    SUBCASE("whitened weights map to interpolation weights") {
        const Eigen::MatrixXd p = random_points(10, 2, 13);
        const CollocationWeights c(m, p);
        const Eigen::MatrixXd& L = m.bank(0).gram->lower();
        const Eigen::MatrixXd back = L.transpose().triangularView<Eigen::Upper>().solve(c.whitened(0, 1).transpose());
        CHECK((back.transpose() - c.weights(0, 1)).norm() <= 1e-10 * c.weights(0, 1).norm());
    }
}

TEST_CASE("TR cached evaluation") {
    const FactorModel m = random_model(Decomposition::TR, {2, 3, 2}, 3, 8, 14);
    const Eigen::MatrixXd p = random_points(25, 3, 15);
    const CollocationWeights c(m, p);
    const Eigen::VectorXd all = eval_all(m, c, MultiIndex({1, 0, 2}));
    for (Eigen::Index q = 0; q < p.rows(); ++q) CHECK(rel_err(all[q], eval_tr(m, row(p, q), MultiIndex({1, 0, 2}))) <= 1e-12);
}

TEST_CASE("RKHS norms") {
    SUBCASE("zero inducing values") {
        FactorModel m = random_model(Decomposition::CP, {2}, 3, 7, 1);
        for (int i = 0; i < 3; ++i) m.set_inducing_values(i, Eigen::MatrixXd::Zero(7, 2));
        for (double v : rkhs_norms(m)) CHECK(v == 0.0);
        CHECK(tensor_rkhs_norm_sq(m) == 0.0);
    }
    SUBCASE("scalar Gram") {
        KernelSpec k;
        k.nugget = 0.0;
        Eigen::MatrixXd H(1, 2);
        H << 2, 3;
        std::vector<FactorBank> banks{{k, build_gram(k, {0.5}), H}, {k, build_gram(k, {0.5}), H}};
        const FactorModel m = FactorModel::cp(banks, 2, {{0, 1}, {0, 1}});
        CHECK(rkhs_norms(m)[0] == doctest::Approx(13.0).epsilon(1e-14));
    }
    SUBCASE("trace form equals column-wise solves") {
        const FactorModel m = random_model(Decomposition::TR, {2, 3}, 2, 15, 2);
        const auto norms = rkhs_norms(m);
        for (int i = 0; i < 2; ++i) {
            double expected = 0;
            const FactorBank& b = m.bank(i);
            for (Eigen::Index c = 0; c < b.H.cols(); ++c)
                expected += b.H.col(c).dot(b.gram->matrix().llt().solve(b.H.col(c)));
            CHECK(std::abs(norms[static_cast<std::size_t>(i)] - expected) <= 1e-10 * std::max(1.0, expected));
        }
    }
    SUBCASE("tensor norm for rank one is the product") {
        const FactorModel m = random_model(Decomposition::CP, {1}, 3, 6, 3);
        const auto n = rkhs_norms(m);
        CHECK(rel_err(tensor_rkhs_norm_sq(m), n[0] * n[1] * n[2]) <= 1e-10);
    }
    SUBCASE("tensor norm equals the double loop") {
        const FactorModel m = random_model(Decomposition::CP, {2}, 2, 6, 4);
        double expected = 0;
        for (int r = 0; r < 2; ++r)
            for (int l = 0; l < 2; ++l) {
                double prod = 1;
                for (int i = 0; i < 2; ++i) {
                    const FactorBank& b = m.bank(i);
                    prod *= b.H.col(r).dot(b.gram->matrix().llt().solve(b.H.col(l)));
                }
                expected += prod;
            }
        CHECK(std::abs(tensor_rkhs_norm_sq(m) - expected) <= 1e-10 * std::max(1.0, expected));
    }
}

TEST_CASE("model is multilinear in each bank") {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> n;
    for (auto kind : {Decomposition::CP, Decomposition::TR}) {
        const FactorModel m = kind == Decomposition::CP ? random_model(kind, {3}, 3, 7, 22) : random_model(kind, {2, 3, 2}, 3, 7, 22);
        const Eigen::MatrixXd p = random_points(20, 3, 23);
        for (int i = 0; i < 3; ++i) {
            const Eigen::Index rows = m.bank(i).H.rows(), cols = m.bank(i).H.cols();
            Eigen::MatrixXd A(rows, cols), B(rows, cols);
            for (auto& v : A.reshaped()) v = n(rng);
            for (auto& v : B.reshaped()) v = n(rng);
            const double alpha = n(rng), beta = n(rng);
            const FactorModel mc = with_bank(m, i, alpha * A + beta * B);
            const FactorModel ma = with_bank(m, i, A);
            const FactorModel mb = with_bank(m, i, B);
            for (Eigen::Index q = 0; q < p.rows(); ++q) {
                const auto x = row(p, q);
                const MultiIndex d({1, 0, 2});
                const double lhs = evaluate(mc, x, d);
                const double rhs = alpha * evaluate(ma, x, d) + beta * evaluate(mb, x, d);
                CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(1.0, std::abs(rhs)) * 10);
            }
        }
    }
}

TEST_CASE("second derivative along one axis has the factored form") {
    const FactorModel m = random_model(Decomposition::CP, {4}, 2, 10, 31);
    const Eigen::MatrixXd p = random_points(30, 2, 32);
    for (Eigen::Index q = 0; q < p.rows(); ++q) {
        const FactorBank& b1 = m.bank(0);
        const FactorBank& b2 = m.bank(1);
        const Eigen::VectorXd w1 = interp_weights(*b1.gram, b1.spec, p(q, 0), 2);
        const Eigen::VectorXd w2 = interp_weights(*b2.gram, b2.spec, p(q, 1), 0);
        const double expected = w1.transpose() * b1.H * b2.H.transpose() * w2;
        CHECK(rel_err(eval_cp(m, row(p, q), MultiIndex({2, 0})), expected) <= 1e-12);
    }
}

TEST_CASE("tensor RKHS norm bound over random CP models") {
    std::mt19937_64 rng(41);
    std::uniform_int_distribution<int> dim(2, 3), rank(1, 4), count(3, 12);
    std::uniform_real_distribution<double> ls(0.05, 1.0);
    for (int t = 0; t < 200; ++t) {
        const int d = dim(rng);
        const FactorModel m = random_model(Decomposition::CP, {rank(rng)}, d, count(rng), rng(), ls(rng));
        const auto n = rkhs_norms(m);
        double mean = 0;
        for (double v : n) mean += v / d;
        CHECK(std::sqrt(tensor_rkhs_norm_sq(m)) <= std::pow(mean, d / 2.0) * (1 + 1e-12) + 1e-9);
    }
}

TEST_CASE("initialization is deterministic in the seed") {
    const FactorModel a = random_model(Decomposition::CP, {5}, 2, 10, 99);
    const FactorModel b = random_model(Decomposition::CP, {5}, 2, 10, 99);
    const FactorModel c = random_model(Decomposition::CP, {5}, 2, 10, 100);
    CHECK(identical(a, b));
    CHECK_FALSE(identical(a, c));
}

TEST_CASE("initialized inducing values have the requested spread") {
    ModelLayout layout;
    layout.ranks = {50};
    for (int i = 0; i < 2; ++i) {
        layout.kernels.push_back(KernelSpec{});
        layout.inducing_counts.push_back(64);
        layout.box.push_back({-1, 1});
    }
    const FactorModel m = initialize_model(layout, 5);
    const Eigen::ArrayXd v = m.bank(0).H.reshaped().array();
    const double sd = std::sqrt((v - v.mean()).square().mean());
    CHECK(sd == doctest::Approx(0.1).epsilon(0.05));
    CHECK(m.bank(0).gram->locations().front() == -1.0);
    CHECK(m.bank(0).gram->locations().back() == 1.0);
}

TEST_CASE("shape violations are rejected") {
    FactorModel m = random_model(Decomposition::CP, {2}, 2, 5, 1);
    CHECK_THROWS_AS(m.set_inducing_values(0, Eigen::MatrixXd::Zero(5, 3)), Error);
    Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(5, 2);
    bad(0, 0) = std::nan("");
    CHECK_THROWS_AS(m.set_inducing_values(0, bad), Error);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
    const auto dir = std::filesystem::temp_directory_path();
    for (auto kind : {Decomposition::CP, Decomposition::TR}) {
        const FactorModel m = kind == Decomposition::CP ? random_model(kind, {4}, 3, 11, 51)
                                                        : random_model(kind, {2, 3, 4}, 3, 11, 51, 0.2, KernelFamily::Matern52);
        const auto path = dir / "tgp_checkpoint_test.json";
        save_checkpoint(m, path);
        const FactorModel back = load_checkpoint(path);
        CHECK(identical(m, back));
        std::filesystem::remove(path);
    }
    CHECK_THROWS_AS(load_checkpoint(dir / "tgp_does_not_exist.json"), Error);
    CHECK_THROWS_AS(model_from_json(nlohmann::json::parse(R"({"decomposition":"cp"})")), Error);
}
