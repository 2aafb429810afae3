#include "tensorgp/cli_reporting.hpp"
#include "tensorgp/errors.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

using namespace tgp;
using nlohmann::json;

namespace {

json small_elliptic() {
    return json::parse(R"({
        "schema_version": 1,
        "problem": "elliptic",
        "seed": 7,
        "model": {"decomposition": "cp", "ranks": 5,
                  "kernels": {"family": "se", "length_scale": 0.2, "nugget": 1e-9},
                  "inducing": 20},
        "collocation": {"kind": "grid", "shape": [10, 10]},
        "solver": {"alpha_interior": 1e6, "alpha_boundary": 1e6, "outer_iters": 3},
        "adam": {"steps": 20, "learning_rate": 0.01},
        "evaluation": {"resolution": 20}
    })");
}

std::string config_error_message(const json& j) {
    try {
        (void)config_from_json(j);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ConfigError);
        return e.what();
    }
    FAIL("expected ConfigError");
    return {};
}

std::filesystem::path scratch_dir(const char* name) {
    const auto dir = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(dir);
    return dir;
}

}  // namespace

TEST_CASE("config parses and broadcasts per-dimension entries") {
    const RunConfig c = config_from_json(small_elliptic());
    CHECK(c.problem == "elliptic");
    CHECK(c.kernels.size() == 2);
    CHECK(c.inducing == std::vector<int>{20, 20});
    CHECK(c.ranks == std::vector<int>{5});
    CHECK(c.solver.outer_iters == 3);
    // JSON round trip is lossless.
    json j;
    to_json(j, c);
    json k;
    to_json(k, config_from_json(j));
    CHECK(j == k);
}

TEST_CASE("config errors name the field") {
    json j = small_elliptic();
    j.erase("problem");
    CHECK(config_error_message(j).find("problem") != std::string::npos);

    j = small_elliptic();
    j["problem"] = "heat";
    CHECK(config_error_message(j).find("problem") != std::string::npos);

    j = small_elliptic();
    j["solver"]["alpha_interior"] = "big";
    CHECK(config_error_message(j).find("solver.alpha_interior") != std::string::npos);

    j = small_elliptic();
    j["collocation"]["shape"] = {10};
    CHECK(config_error_message(j).find("collocation.shape") != std::string::npos);
}

TEST_CASE("off-menu hyperparameters need the custom flag") {
    json j = small_elliptic();
    j["model"]["kernels"]["length_scale"] = 0.25;
    CHECK(config_error_message(j).find("length_scale") != std::string::npos);
    j["custom"] = true;
    CHECK_NOTHROW(config_from_json(j));

    j = small_elliptic();
    j["model"]["ranks"] = 7;
    CHECK(config_error_message(j).find("model.ranks") != std::string::npos);

    j = small_elliptic();
    j["solver"]["alpha_boundary"] = 3e6;
    CHECK(config_error_message(j).find("solver.alpha_boundary") != std::string::npos);

    j = small_elliptic();
    j["model"]["inducing"] = 10;
    CHECK(config_error_message(j).find("model.inducing") != std::string::npos);

    RunConfig c = config_from_json(small_elliptic());
    for (double ls : {0.005, 0.009, 0.07, 0.3, 1.0, 8.0}) {
        for (KernelSpec& k : c.kernels) k.length_scale = ls;
        CHECK(c.off_menu_field().empty());
    }
}

TEST_CASE("overrides set scalar fields") {
    json j = small_elliptic();
    apply_override(j, "solver.outer_iters=9");
    apply_override(j, "model.decomposition=tr");
    apply_override(j, "model.ranks=3");
    apply_override(j, "solver.linearizer=partial_freeze");
    const RunConfig c = config_from_json(j);
    CHECK(c.solver.outer_iters == 9);
    CHECK(c.decomposition == Decomposition::TR);
    CHECK(c.ranks == std::vector<int>{3, 3});
    CHECK(c.solver.linearizer == Linearizer::PartialFreeze);
    CHECK_THROWS_AS(apply_override(j, "solver"), Error);
    CHECK_THROWS_AS(apply_override(j, "model=1"), Error);
}

TEST_CASE("seed streams are distinct and stable") {
    CHECK(init_seed(7) != sampling_seed(7));
    CHECK(init_seed(7) == init_seed(7));
    CHECK(sampling_seed(7) != sampling_seed(8));
    // Reference value of the splitmix64 finalizer for input 0.
    CHECK(splitmix64(0) == 0xe220a8397b1dcdafULL);
}

TEST_CASE("random total splits 90/10") {
    const CollocationSpec s = CollocationSpec::random_total(2400);
    CHECK(s.interior == 2160);
    CHECK(s.boundary == 240);
}

TEST_CASE("runs are deterministic and persist their artifacts") {
    const auto dir = scratch_dir("tgp_run");
    RunConfig c = config_from_json(small_elliptic());
    c.output_dir = dir.string();
    const SolveReport a = run(c);
    c.output_dir.clear();
    const SolveReport b = run(c);
    CHECK(a.relative_l2 == b.relative_l2);
    CHECK(a.final_loss.objective == b.final_loss.objective);
    CHECK(a.relative_l2 >= 0);
    CHECK(a.iterations == 3);
    CHECK_FALSE(a.diverged);
    CHECK(std::filesystem::exists(dir / "trace.csv"));
    CHECK(std::filesystem::exists(dir / "checkpoint.json"));
    CHECK(a.checkpoint == (dir / "checkpoint.json").string());

    const SolveReport loaded = load_report(dir / "report.json");
    CHECK(loaded == a);
    // The checkpoint reproduces the reported error.
    const PdeProblem p = make_problem("elliptic");
    const FactorModel m = load_checkpoint(dir / "checkpoint.json");
    CHECK(relative_l2(m, p.reference, eval_grid(p.domain, 20).points) == a.relative_l2);
    std::filesystem::remove_all(dir);
}

TEST_CASE("report round trip through disk") {
    SolveReport r;
    r.config = config_from_json(small_elliptic());
    r.relative_l2 = 1.0 / 3.0;
    r.final_loss.iter = 4;
    r.final_loss.objective = 2.5e-7;
    r.iterations = 4;
    r.seconds = 0.125;
    r.diverged = true;
    r.checkpoint = "x/checkpoint.json";
    const auto path = std::filesystem::temp_directory_path() / "tgp_report.json";
    save_report(r, path);
    CHECK(load_report(path) == r);
    std::filesystem::remove(path);
}

TEST_CASE("diverged runs persist and then raise") {
    const auto dir = scratch_dir("tgp_diverged");
    RunConfig c = config_from_json(small_elliptic());
    c.trainer = Trainer::ADAM;
    c.adam.learning_rate = 50;
    c.adam.steps = 200;
    c.output_dir = dir.string();
    try {
        (void)run(c);
        FAIL("expected Diverged");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Diverged);
    }
    CHECK(std::filesystem::exists(dir / "trace.csv"));
    CHECK(load_report(dir / "report.json").diverged);
    std::filesystem::remove_all(dir);
}

TEST_CASE("empty sweep gives an empty table") {
    const RunConfig c = config_from_json(small_elliptic());
    CHECK(sweep(c, SweepAxis::Rank, {}).empty());
    CHECK(sweep_csv({}) == "value,relative_l2,seconds,error\n");
}

TEST_CASE("sweeps are order independent and record failures") {
    const RunConfig c = config_from_json(small_elliptic());
    const std::vector<SweepRow> fwd = sweep(c, SweepAxis::LengthScale, {0.1, 0.3, -1.0});
    const std::vector<SweepRow> rev = sweep(c, SweepAxis::LengthScale, {-1.0, 0.3, 0.1});
    REQUIRE(fwd.size() == 3);
    CHECK(fwd[0].relative_l2 == rev[2].relative_l2);
    CHECK(fwd[1].relative_l2 == rev[1].relative_l2);
    CHECK(fwd[0].error.empty());
    CHECK_FALSE(fwd[2].error.empty());
    CHECK(std::isnan(fwd[2].relative_l2));
    const std::string csv = sweep_csv(fwd);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}

TEST_CASE("sweep points adjust the chosen axis") {
    const RunConfig c = config_from_json(small_elliptic());
    CHECK(sweep_point(c, SweepAxis::Rank, 12).ranks == std::vector<int>{12});
    CHECK(sweep_point(c, SweepAxis::CollocationCount, 400).collocation.shape == std::vector<int>{20, 20});
    RunConfig r = c;
    r.collocation = CollocationSpec::random_total(100);
    const RunConfig p = sweep_point(r, SweepAxis::CollocationCount, 1000);
    CHECK(p.collocation.interior + p.collocation.boundary == 1000);
    CHECK(sweep_axis_from_string("collocation_count") == SweepAxis::CollocationCount);
    CHECK_THROWS_AS(sweep_axis_from_string("nugget"), Error);
}

TEST_CASE("trainer comparison shares the initial objective") {
    const RunConfig c = config_from_json(small_elliptic());
    const TrainerComparison cmp = compare_trainers(c);
    CHECK(cmp.als.records.front().objective == cmp.adam.records.front().objective);
    CHECK(cmp.adam.back().iter == c.adam.steps);
    CHECK(cmp.adam.size() == static_cast<std::size_t>(c.adam.steps) + 1);
    const std::string csv = comparison_csv(cmp);
    CHECK(csv.rfind("trainer,iter,objective", 0) == 0);
    CHECK(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) == 1 + cmp.als.size() + cmp.adam.size());
}

TEST_CASE("pointwise export") {
    const RunConfig c = config_from_json(small_elliptic());
    const RunArtifacts out = run_full(c);
    const PdeProblem p = make_problem("elliptic");
    const EvalGrid g = eval_grid(p.domain, 20);
    const auto path = std::filesystem::temp_directory_path() / "tgp_pointwise.csv";
    CHECK(pointwise_error_export(out.fit.model, p, g.points, path) == g.points.rows());
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "x0,x1,abs_error");
    Eigen::Index n = 0;
    while (std::getline(in, line)) ++n;
    CHECK(n == g.points.rows());
    std::filesystem::remove(path);

    const Eigen::VectorXd err = pointwise_errors(out.fit.model, p, g.points);
    CHECK(err.maxCoeff() >= err.norm() / std::sqrt(static_cast<double>(err.size())));
}

TEST_CASE("pointwise errors vanish when the reference is the model") {
    const RunConfig c = config_from_json(small_elliptic());
    const RunArtifacts out = run_full(c);
    PdeProblem p = make_problem("elliptic");
    const FactorModel m = out.fit.model;
    p.reference = [m](std::span<const double> x) {
        Eigen::MatrixXd pt(1, static_cast<Eigen::Index>(x.size()));
        for (std::size_t j = 0; j < x.size(); ++j) pt(0, static_cast<Eigen::Index>(j)) = x[j];
        return evaluate_points(m, pt)[0];
    };
    const Eigen::VectorXd err = pointwise_errors(m, p, eval_grid(p.domain, 20).points);
    CHECK(err.maxCoeff() <= 1e-12);
}
