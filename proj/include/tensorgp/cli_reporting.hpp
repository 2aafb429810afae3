#pragma once

#include "tensorgp/als_engine.hpp"
#include "tensorgp/benchmarks.hpp"
#include "tensorgp/factor_model.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace tgp {

inline constexpr int kConfigSchemaVersion = 1;

enum class Trainer { ALS, ADAM };

struct CollocationSpec {
    enum class Kind { Grid, Random };
    Kind kind = Kind::Grid;
    /// Points per dimension (grid).
    std::vector<int> shape;
    /// Random counts; boundary defaults to 10% of the total when only a total is given.
    Eigen::Index interior = 0;
    Eigen::Index boundary = 0;

    static CollocationSpec random_total(Eigen::Index total);
};

struct RunConfig {
    int schema_version = kConfigSchemaVersion;
    std::string problem;
    /// Root seed; split into independent init and sampling streams.
    std::uint64_t seed = 0;
    /// Skip the hyperparameter menu check.
    bool custom = false;
    Decomposition decomposition = Decomposition::CP;
    std::vector<int> ranks{10};
    /// One entry per dimension after loading.
    std::vector<KernelSpec> kernels;
    std::vector<int> inducing;
    CollocationSpec collocation;
    SolverConfig solver;
    Trainer trainer = Trainer::ALS;
    AdamConfig adam;
    /// Evaluation grid resolution; 0 picks the per-dimension default.
    int eval_resolution = 0;
    std::string output_dir;

    /// Throws ConfigError naming the offending field.
    void validate(int problem_dim) const;
    /// Empty when every hyperparameter is on the search menus, else the first offending field.
    [[nodiscard]] std::string off_menu_field() const;
};

/// Deterministic 64-bit mixer used to derive per-consumer seeds.
std::uint64_t splitmix64(std::uint64_t x) noexcept;
std::uint64_t init_seed(std::uint64_t root) noexcept;
std::uint64_t sampling_seed(std::uint64_t root) noexcept;

void to_json(nlohmann::json& j, const RunConfig& cfg);
/// Parse a config; kernel and inducing entries given once are broadcast to
/// every dimension of the problem. Throws ConfigError with the field path.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);
/// Apply "a.b.c=value" to a config document; value is parsed as JSON when
/// possible and taken as a string otherwise.
void apply_override(nlohmann::json& doc, std::string_view assignment);

struct SolveReport {
    RunConfig config;
    double relative_l2 = 0;
    LossRecord final_loss;
    int iterations = 0;
    double seconds = 0;
    bool diverged = false;
    std::string checkpoint;

    bool operator==(const SolveReport&) const;
};

void to_json(nlohmann::json& j, const SolveReport& r);
SolveReport report_from_json(const nlohmann::json& j);
void save_report(const SolveReport& r, const std::filesystem::path& path);
SolveReport load_report(const std::filesystem::path& path);

struct RunArtifacts {
    SolveReport report;
    FitResult fit;
};

/// Sample, fit, evaluate and (with an output directory) write report.json,
/// trace.csv and checkpoint.json. A diverged fit is persisted and then raised
/// as Diverged when `throw_on_divergence` is set.
RunArtifacts run_full(const RunConfig& cfg, bool throw_on_divergence = true);
SolveReport run(const RunConfig& cfg);

CollocationSet make_collocation(const RunConfig& cfg, const PdeProblem& problem);
FactorModel make_model(const RunConfig& cfg, const PdeProblem& problem);

enum class SweepAxis { LengthScale, Rank, CollocationCount };
SweepAxis sweep_axis_from_string(std::string_view name);
std::string_view to_string(SweepAxis axis) noexcept;

struct SweepRow {
    double value = 0;
    double relative_l2 = 0;
    double seconds = 0;
    /// Error message when the run failed; the metrics are NaN then.
    std::string error;
};

/// One run per value with the base seed. Sweep values may lie off the menus.
std::vector<SweepRow> sweep(const RunConfig& base, SweepAxis axis, const std::vector<double>& values);
/// Apply one sweep value to a config.
RunConfig sweep_point(const RunConfig& base, SweepAxis axis, double value);
/// CSV with columns value,relative_l2,seconds,error.
std::string sweep_csv(const std::vector<SweepRow>& rows);

struct TrainerComparison {
    LossTrace als;
    LossTrace adam;
};

/// ALS and ADAM from the same initial model and collocation set.
TrainerComparison compare_trainers(const RunConfig& cfg);
/// Long-format CSV: trainer,iter,objective,interior_mse,boundary_mse,rkhs_penalty,seconds.
std::string comparison_csv(const TrainerComparison& cmp);

/// |u_model - u_ref| at every point.
Eigen::VectorXd pointwise_errors(const FactorModel& model, const PdeProblem& problem, const Eigen::MatrixXd& points);
/// CSV with columns x0..x{d-1},abs_error; returns the number of rows written.
Eigen::Index pointwise_error_export(const FactorModel& model, const PdeProblem& problem, const Eigen::MatrixXd& points,
                                    const std::filesystem::path& path);

}  // namespace tgp
