// tgps: run solves, sweeps and trainer comparisons from JSON configs.

#include "tensorgp/cli_reporting.hpp"
#include "tensorgp/errors.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <iostream>

namespace {

using nlohmann::json;

tgp::RunConfig read_config(const std::string& path, const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) throw tgp::Error(tgp::ErrorCode::ConfigError, "cannot read config " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw tgp::Error(tgp::ErrorCode::ConfigError, path + ": " + e.what());
    }
    for (const std::string& o : overrides) tgp::apply_override(doc, o);
    return tgp::config_from_json(doc);
}

void emit(const std::string& text, const std::string& path) {
    if (path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(path);
    if (!out) throw tgp::Error(tgp::ErrorCode::IoError, "cannot write " + path);
    out << text;
}

void print_report(const tgp::SolveReport& r) {
    json j;
    to_json(j, r);
    j.erase("config");
    std::cout << j.dump(2) << '\n';
}

int exit_code(const tgp::Error& e) {
    switch (e.code()) {
        case tgp::ErrorCode::ConfigError: return 2;
        case tgp::ErrorCode::Diverged: return 3;
        default: return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tensor-GP PDE solver"};
    app.require_subcommand(1);

    std::string config_path, csv_path, output_dir;
    std::vector<std::string> overrides;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("-c,--config", config_path, "JSON run config")->required()->check(CLI::ExistingFile);
        sub->add_option("--set", overrides, "override a scalar field, e.g. --set solver.outer_iters=50");
    };

    CLI::App* solve = app.add_subcommand("solve", "fit one configuration and report the error");
    add_common(solve);
    int repeats = 1;
    solve->add_option("--repeats", repeats, "independent seeds derived from the root seed")->check(CLI::PositiveNumber);
    solve->add_option("-o,--output", output_dir, "output directory (overrides the config)");

    CLI::App* sweep = app.add_subcommand("sweep", "one run per value along an axis");
    add_common(sweep);
    std::string axis;
    std::vector<double> values;
    sweep->add_option("--axis", axis, "length_scale, rank or collocation_count")->required();
    sweep->add_option("--values", values, "values to sweep")->delimiter(',');
    sweep->add_option("--csv", csv_path, "write the table here instead of stdout");

    CLI::App* compare = app.add_subcommand("compare", "ALS and ADAM loss traces from the same initialization");
    add_common(compare);
    compare->add_option("--csv", csv_path, "write the traces here instead of stdout");

    CLI::App* ref = app.add_subcommand("export-reference", "reference solution on the evaluation grid");
    std::string problem_key, out_path;
    int resolution = 0;
    ref->add_option("-p,--problem", problem_key, "problem key")->required();
    ref->add_option("-r,--resolution", resolution, "grid points per dimension (0 = default)");
    ref->add_option("--csv", out_path, "output CSV")->required();

    CLI::App* pointwise = app.add_subcommand("export-pointwise", "pointwise |u - u_ref| of a checkpoint");
    std::string checkpoint;
    pointwise->add_option("-p,--problem", problem_key, "problem key")->required();
    pointwise->add_option("--checkpoint", checkpoint, "checkpoint.json from a solve")->required()->check(CLI::ExistingFile);
    pointwise->add_option("-r,--resolution", resolution, "grid points per dimension (0 = default)");
    pointwise->add_option("--csv", out_path, "output CSV")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*solve) {
            tgp::RunConfig cfg = read_config(config_path, overrides);
            if (!output_dir.empty()) cfg.output_dir = output_dir;
            if (repeats == 1) {
                print_report(tgp::run(cfg));
                return 0;
            }
            double sum = 0;
            const std::string base_dir = cfg.output_dir;
            const std::uint64_t root = cfg.seed;
            for (int k = 0; k < repeats; ++k) {
                tgp::RunConfig c = cfg;
                c.seed = tgp::splitmix64(root + static_cast<std::uint64_t>(k));
                if (!base_dir.empty()) c.output_dir = base_dir + "/repeat-" + std::to_string(k);
                const tgp::SolveReport r = tgp::run(c);
                std::cout << "repeat " << k << " seed " << c.seed << " relative_l2 " << r.relative_l2 << '\n';
                sum += r.relative_l2;
            }
            std::cout << "mean relative_l2 " << sum / repeats << '\n';
        } else if (*sweep) {
            const tgp::RunConfig cfg = read_config(config_path, overrides);
            const auto rows = tgp::sweep(cfg, tgp::sweep_axis_from_string(axis), values);
            emit(tgp::sweep_csv(rows), csv_path);
        } else if (*compare) {
            const tgp::RunConfig cfg = read_config(config_path, overrides);
            emit(tgp::comparison_csv(tgp::compare_trainers(cfg)), csv_path);
        } else if (*ref) {
            const tgp::PdeProblem p = tgp::make_problem(problem_key);
            tgp::export_reference_csv(p, tgp::eval_grid(p.domain, resolution).points, out_path);
        } else if (*pointwise) {
            const tgp::PdeProblem p = tgp::make_problem(problem_key);
            const tgp::FactorModel m = tgp::load_checkpoint(checkpoint);
            const auto n = tgp::pointwise_error_export(m, p, tgp::eval_grid(p.domain, resolution).points, out_path);
            std::cout << n << " rows written to " << out_path << '\n';
        }
    } catch (const tgp::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
