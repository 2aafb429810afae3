#include "tensorgp/cli_reporting.hpp"

#include "tensorgp/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <locale>
#include <sstream>

namespace tgp {

using nlohmann::json;

namespace {

[[noreturn]] void config_error(const std::string& field, const std::string& what) {
    throw Error(ErrorCode::ConfigError, field + ": " + what);
}

// Typed lookup that reports the dotted field path on failure.
template <class T>
T field(const json& j, const std::string& path, const std::string& key) {
    const std::string full = path.empty() ? key : path + "." + key;
    if (!j.contains(key)) config_error(full, "required field is missing");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        config_error(full, std::string("wrong type (") + e.what() + ")");
    }
}

template <class T>
T field_or(const json& j, const std::string& path, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    return field<T>(j, path, key);
}

const json& object_or_empty(const json& j, const std::string& key) {
    static const json empty = json::object();
    if (!j.contains(key)) return empty;
    if (!j.at(key).is_object()) config_error(key, "must be an object");
    return j.at(key);
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

Linearizer linearizer_from(const std::string& s, const std::string& path) {
    const std::string v = lower(s);
    if (v == "newton" || v == "nt") return Linearizer::Newton;
    if (v == "partial_freeze" || v == "pf" || v == "freeze") return Linearizer::PartialFreeze;
    config_error(path, "unknown linearizer '" + s + "'");
}

std::string to_string(Linearizer l) { return l == Linearizer::Newton ? "newton" : "partial_freeze"; }

AdvectionFreeze advection_from(const std::string& s, const std::string& path) {
    const std::string v = lower(s);
    if (v == "multiplier") return AdvectionFreeze::Multiplier;
    if (v == "derivative") return AdvectionFreeze::Derivative;
    config_error(path, "unknown advection freeze '" + s + "'");
}

std::string to_string(AdvectionFreeze a) { return a == AdvectionFreeze::Multiplier ? "multiplier" : "derivative"; }

LeastSquares least_squares_from(const std::string& s, const std::string& path) {
    const std::string v = lower(s);
    if (v == "qr") return LeastSquares::QR;
    if (v == "cholesky") return LeastSquares::Cholesky;
    config_error(path, "unknown least-squares method '" + s + "'");
}

std::string to_string(LeastSquares l) { return l == LeastSquares::QR ? "qr" : "cholesky"; }

bool near(double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(std::abs(a), std::abs(b)); }

bool on_length_scale_menu(double ls) {
    for (int k = 5; k <= 9; ++k)
        if (near(ls, k * 1e-3)) return true;
    for (int k = 1; k <= 10; ++k)
        if (near(ls, k * 1e-2) || near(ls, k * 1e-1)) return true;
    for (int k = 1; k <= 8; ++k)
        if (near(ls, k)) return true;
    return false;
}

bool on_nugget_menu(double n) { return near(n, 1e-11) || near(n, 1e-10) || near(n, 1e-9) || near(n, 1e-6); }

bool on_alpha_menu(double a) {
    for (int k = 0; k <= 10; ++k)
        if (near(a, std::pow(10.0, k))) return true;
    return false;
}

std::string csv_number(double v) {
    std::ostringstream out;
    out.imbue(std::locale::classic());
    out.precision(17);
    out << v;
    return out.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << text;
}

}  // namespace

CollocationSpec CollocationSpec::random_total(Eigen::Index total) {
    CollocationSpec s;
    s.kind = Kind::Random;
    s.boundary = std::max<Eigen::Index>(1, total / 10);
    s.interior = std::max<Eigen::Index>(1, total - s.boundary);
    return s;
}

// ---------------------------------------------------------------- seeds

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t init_seed(std::uint64_t root) noexcept { return splitmix64(root * 2 + 1); }
std::uint64_t sampling_seed(std::uint64_t root) noexcept { return splitmix64(root * 2 + 2); }

// ---------------------------------------------------------------- config

void RunConfig::validate(int d) const {
    if (schema_version != kConfigSchemaVersion)
        config_error("schema_version", "expected " + std::to_string(kConfigSchemaVersion));
    if (problem.empty()) config_error("problem", "required field is missing");
    const auto du = static_cast<std::size_t>(d);
    if (decomposition == Decomposition::CP && ranks.size() != 1) config_error("model.ranks", "CP takes a single rank");
    if (decomposition == Decomposition::TR && ranks.size() != du) config_error("model.ranks", "TR takes one rank per dimension");
    for (int r : ranks)
        if (r < 1) config_error("model.ranks", "ranks must be positive");
    if (kernels.size() != du) config_error("model.kernels", "need one kernel per dimension");
    if (inducing.size() != du) config_error("model.inducing", "need one inducing count per dimension");
    for (std::size_t i = 0; i < du; ++i) {
        try {
            kernels[i].validate();
        } catch (const Error& e) {
            config_error("model.kernels[" + std::to_string(i) + "]", e.what());
        }
        if (inducing[i] < 2) config_error("model.inducing[" + std::to_string(i) + "]", "need at least 2 inducing points");
    }
    if (collocation.kind == CollocationSpec::Kind::Grid) {
        if (collocation.shape.size() != du) config_error("collocation.shape", "need one count per dimension");
    } else if (collocation.interior < 1 || collocation.boundary < 1) {
        config_error("collocation", "random sampling needs positive interior and boundary counts");
    }
    try {
        solver.validate();
    } catch (const Error& e) {
        config_error("solver", e.what());
    }
    if (adam.steps < 0 || !(adam.learning_rate > 0) || adam.record_every < 1) config_error("adam", "invalid ADAM settings");
    if (eval_resolution < 0) config_error("evaluation.resolution", "must be non-negative");
    if (!custom) {
        const std::string off = off_menu_field();
        if (!off.empty()) config_error(off, "value is off the hyperparameter menu (set \"custom\": true to allow it)");
    }
}

std::string RunConfig::off_menu_field() const {
    if (decomposition == Decomposition::CP) {
        static constexpr std::array menu{5, 10, 12, 15, 18, 20, 25};
        if (std::find(menu.begin(), menu.end(), ranks.at(0)) == menu.end()) return "model.ranks";
    } else {
        for (int r : ranks)
            if (r < 3 || r > 7 || r != ranks.front()) return "model.ranks";
    }
    for (std::size_t i = 0; i < kernels.size(); ++i) {
        const std::string p = "model.kernels[" + std::to_string(i) + "]";
        if (!on_length_scale_menu(kernels[i].length_scale)) return p + ".length_scale";
        if (!on_nugget_menu(kernels[i].nugget)) return p + ".nugget";
        if (kernels[i].variance != 1.0) return p + ".variance";
    }
    for (std::size_t i = 0; i < inducing.size(); ++i)
        if (inducing[i] < 20 || inducing[i] > 720) return "model.inducing[" + std::to_string(i) + "]";
    if (!on_alpha_menu(solver.alpha_interior)) return "solver.alpha_interior";
    if (!on_alpha_menu(solver.alpha_boundary)) return "solver.alpha_boundary";
    return {};
}

void to_json(json& j, const RunConfig& c) {
    json kernels = json::array();
    for (const KernelSpec& k : c.kernels)
        kernels.push_back({{"family", std::string(to_string(k.family))},
                           {"length_scale", k.length_scale},
                           {"variance", k.variance},
                           {"nugget", k.nugget}});
    json colloc;
    if (c.collocation.kind == CollocationSpec::Kind::Grid) {
        colloc = {{"kind", "grid"}, {"shape", c.collocation.shape}};
    } else {
        colloc = {{"kind", "random"}, {"interior", c.collocation.interior}, {"boundary", c.collocation.boundary}};
    }
    j = json{{"schema_version", c.schema_version},
             {"problem", c.problem},
             {"seed", c.seed},
             {"custom", c.custom},
             {"model",
              {{"decomposition", c.decomposition == Decomposition::CP ? "cp" : "tr"},
               {"ranks", c.ranks},
               {"kernels", kernels},
               {"inducing", c.inducing}}},
             {"collocation", colloc},
             {"solver",
              {{"alpha_interior", c.solver.alpha_interior},
               {"alpha_boundary", c.solver.alpha_boundary},
               {"outer_iters", c.solver.outer_iters},
               {"inner_sweeps", c.solver.inner_sweeps},
               {"linearizer", to_string(c.solver.linearizer)},
               {"advection", to_string(c.solver.advection)},
               {"least_squares", to_string(c.solver.least_squares)},
               {"convergence_tol", c.solver.convergence_tol}}},
             {"trainer", c.trainer == Trainer::ALS ? "als" : "adam"},
             {"adam",
              {{"learning_rate", c.adam.learning_rate},
               {"beta1", c.adam.beta1},
               {"beta2", c.adam.beta2},
               {"epsilon", c.adam.epsilon},
               {"steps", c.adam.steps},
               {"record_every", c.adam.record_every}}},
             {"evaluation", {{"resolution", c.eval_resolution}}},
             {"output_dir", c.output_dir}};
}

RunConfig config_from_json(const json& j) {
    if (!j.is_object()) config_error("(root)", "config must be a JSON object");
    RunConfig c;
    c.schema_version = field<int>(j, "", "schema_version");
    if (c.schema_version != kConfigSchemaVersion)
        config_error("schema_version", "unsupported version " + std::to_string(c.schema_version));
    c.problem = field<std::string>(j, "", "problem");
    int d = 0;
    try {
        d = make_problem(c.problem).dim;
    } catch (const Error& e) {
        config_error("problem", e.what());
    }
    const auto du = static_cast<std::size_t>(d);
    c.seed = field_or<std::uint64_t>(j, "", "seed", 0);
    c.custom = field_or<bool>(j, "", "custom", false);

    const json& m = object_or_empty(j, "model");
    const std::string dec = lower(field_or<std::string>(m, "model", "decomposition", "cp"));
    if (dec == "cp") c.decomposition = Decomposition::CP;
    else if (dec == "tr") c.decomposition = Decomposition::TR;
    else config_error("model.decomposition", "expected cp or tr");
    if (m.contains("ranks") && m.at("ranks").is_number()) {
        c.ranks.assign(c.decomposition == Decomposition::CP ? 1 : du, field<int>(m, "model", "ranks"));
    } else {
        c.ranks = field_or<std::vector<int>>(m, "model", "ranks", {});
        if (c.ranks.empty()) c.ranks.assign(c.decomposition == Decomposition::CP ? 1 : du, c.decomposition == Decomposition::CP ? 10 : 3);
    }

    auto parse_kernel = [](const json& k, const std::string& path) {
        if (!k.is_object()) config_error(path, "must be an object");
        KernelSpec s;
        try {
            s.family = kernel_family_from_string(lower(field_or<std::string>(k, path, "family", "se")));
        } catch (const Error& e) {
            config_error(path + ".family", e.what());
        }
        s.length_scale = field_or<double>(k, path, "length_scale", s.length_scale);
        s.variance = field_or<double>(k, path, "variance", s.variance);
        s.nugget = field_or<double>(k, path, "nugget", s.nugget);
        return s;
    };
    if (!m.contains("kernels")) config_error("model.kernels", "required field is missing");
    const json& ks = m.at("kernels");
    if (ks.is_array()) {
        for (std::size_t i = 0; i < ks.size(); ++i)
            c.kernels.push_back(parse_kernel(ks[i], "model.kernels[" + std::to_string(i) + "]"));
        if (c.kernels.size() == 1) c.kernels.assign(du, c.kernels[0]);
    } else {
        c.kernels.assign(du, parse_kernel(ks, "model.kernels"));
    }
    if (!m.contains("inducing")) config_error("model.inducing", "required field is missing");
    if (m.at("inducing").is_number()) c.inducing.assign(du, field<int>(m, "model", "inducing"));
    else c.inducing = field<std::vector<int>>(m, "model", "inducing");
    if (c.inducing.size() == 1) c.inducing.assign(du, c.inducing[0]);

    if (!j.contains("collocation")) config_error("collocation", "required field is missing");
    const json& col = object_or_empty(j, "collocation");
    const std::string kind = lower(field<std::string>(col, "collocation", "kind"));
    if (kind == "grid") {
        c.collocation.kind = CollocationSpec::Kind::Grid;
        if (col.contains("shape") && col.at("shape").is_number())
            c.collocation.shape.assign(du, field<int>(col, "collocation", "shape"));
        else
            c.collocation.shape = field<std::vector<int>>(col, "collocation", "shape");
    } else if (kind == "random") {
        if (col.contains("total")) {
            c.collocation = CollocationSpec::random_total(field<Eigen::Index>(col, "collocation", "total"));
        } else {
            c.collocation.kind = CollocationSpec::Kind::Random;
            c.collocation.interior = field<Eigen::Index>(col, "collocation", "interior");
            c.collocation.boundary = field<Eigen::Index>(col, "collocation", "boundary");
        }
    } else {
        config_error("collocation.kind", "expected grid or random");
    }

    const json& s = object_or_empty(j, "solver");
    c.solver.alpha_interior = field_or<double>(s, "solver", "alpha_interior", c.solver.alpha_interior);
    c.solver.alpha_boundary = field_or<double>(s, "solver", "alpha_boundary", c.solver.alpha_boundary);
    c.solver.outer_iters = field_or<int>(s, "solver", "outer_iters", c.solver.outer_iters);
    c.solver.inner_sweeps = field_or<int>(s, "solver", "inner_sweeps", c.solver.inner_sweeps);
    c.solver.convergence_tol = field_or<double>(s, "solver", "convergence_tol", c.solver.convergence_tol);
    if (s.contains("linearizer"))
        c.solver.linearizer = linearizer_from(field<std::string>(s, "solver", "linearizer"), "solver.linearizer");
    if (s.contains("advection"))
        c.solver.advection = advection_from(field<std::string>(s, "solver", "advection"), "solver.advection");
    if (s.contains("least_squares"))
        c.solver.least_squares = least_squares_from(field<std::string>(s, "solver", "least_squares"), "solver.least_squares");
    c.solver.seed = c.seed;

    const std::string trainer = lower(field_or<std::string>(j, "", "trainer", "als"));
    if (trainer == "als") c.trainer = Trainer::ALS;
    else if (trainer == "adam") c.trainer = Trainer::ADAM;
    else config_error("trainer", "expected als or adam");

    const json& a = object_or_empty(j, "adam");
    c.adam.learning_rate = field_or<double>(a, "adam", "learning_rate", c.adam.learning_rate);
    c.adam.beta1 = field_or<double>(a, "adam", "beta1", c.adam.beta1);
    c.adam.beta2 = field_or<double>(a, "adam", "beta2", c.adam.beta2);
    c.adam.epsilon = field_or<double>(a, "adam", "epsilon", c.adam.epsilon);
    c.adam.steps = field_or<int>(a, "adam", "steps", c.adam.steps);
    c.adam.record_every = field_or<int>(a, "adam", "record_every", c.adam.record_every);

    c.eval_resolution = field_or<int>(object_or_empty(j, "evaluation"), "evaluation", "resolution", 0);
    c.output_dir = field_or<std::string>(j, "", "output_dir", "");
    c.validate(d);
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::ConfigError, "cannot read config " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

void apply_override(json& doc, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos || eq == 0) config_error(std::string(assignment), "override must look like path=value");
    const std::string path(assignment.substr(0, eq));
    const std::string text(assignment.substr(eq + 1));
    json value;
    try {
        value = json::parse(text);
    } catch (const json::exception&) {
        value = text;
    }
    json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (key.empty()) config_error(path, "empty path component");
        if (!node->is_object()) config_error(path, "cannot descend into a non-object");
        if (dot == std::string::npos) {
            if (node->contains(key) && (*node)[key].is_structured() && !value.is_structured())
                config_error(path, "overrides apply to scalar fields only");
            (*node)[key] = value;
            return;
        }
        node = &(*node)[key];
        if (node->is_null()) *node = json::object();
        start = dot + 1;
    }
}

// ---------------------------------------------------------------- reports

bool SolveReport::operator==(const SolveReport& o) const {
    json a, b;
    to_json(a, *this);
    to_json(b, o);
    return a == b;
}

void to_json(json& j, const SolveReport& r) {
    json cfg;
    to_json(cfg, r.config);
    j = json{{"config", cfg},
             {"relative_l2", r.relative_l2},
             {"final_loss",
              {{"iter", r.final_loss.iter},
               {"objective", r.final_loss.objective},
               {"interior_mse", r.final_loss.interior_mse},
               {"boundary_mse", r.final_loss.boundary_mse},
               {"rkhs_penalty", r.final_loss.rkhs_penalty},
               {"seconds", r.final_loss.seconds}}},
             {"iterations", r.iterations},
             {"seconds", r.seconds},
             {"diverged", r.diverged},
             {"checkpoint", r.checkpoint}};
}

SolveReport report_from_json(const json& j) {
    SolveReport r;
    try {
        r.config = config_from_json(j.at("config"));
        r.relative_l2 = j.at("relative_l2").get<double>();
        const json& f = j.at("final_loss");
        r.final_loss.iter = f.at("iter").get<int>();
        r.final_loss.objective = f.at("objective").get<double>();
        r.final_loss.interior_mse = f.at("interior_mse").get<double>();
        r.final_loss.boundary_mse = f.at("boundary_mse").get<double>();
        r.final_loss.rkhs_penalty = f.at("rkhs_penalty").get<double>();
        r.final_loss.seconds = f.at("seconds").get<double>();
        r.iterations = j.at("iterations").get<int>();
        r.seconds = j.at("seconds").get<double>();
        r.diverged = j.at("diverged").get<bool>();
        r.checkpoint = j.at("checkpoint").get<std::string>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ConfigError, std::string("malformed report: ") + e.what());
    }
    return r;
}

void save_report(const SolveReport& r, const std::filesystem::path& path) {
    json j;
    to_json(j, r);
    write_text(path, j.dump(2) + "\n");
}

SolveReport load_report(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::IoError, path.string() + ": " + e.what());
    }
    return report_from_json(j);
}

// ---------------------------------------------------------------- runs

CollocationSet make_collocation(const RunConfig& cfg, const PdeProblem& problem) {
    if (cfg.collocation.kind == CollocationSpec::Kind::Grid) {
        if (problem.domain.kind() != ShapeKind::Box) config_error("collocation.kind", "grid sampling needs a box domain");
        return grid_sample(problem.domain, cfg.collocation.shape);
    }
    return random_sample(problem.domain, cfg.collocation.interior, cfg.collocation.boundary, sampling_seed(cfg.seed));
}

FactorModel make_model(const RunConfig& cfg, const PdeProblem& problem) {
    ModelLayout layout;
    layout.decomposition = cfg.decomposition;
    layout.ranks = cfg.ranks;
    layout.kernels = cfg.kernels;
    layout.inducing_counts = cfg.inducing;
    layout.box = problem.domain.bounding_box();
    return initialize_model(layout, init_seed(cfg.seed));
}

RunArtifacts run_full(const RunConfig& cfg, bool throw_on_divergence) {
    const PdeProblem problem = make_problem(cfg.problem);
    cfg.validate(problem.dim);
    const FactorModel model = make_model(cfg, problem);
    const CollocationSet colloc = make_collocation(cfg, problem);
    SolverConfig solver = cfg.solver;
    solver.seed = cfg.seed;

    const auto t0 = std::chrono::steady_clock::now();
    FitResult fit = cfg.trainer == Trainer::ALS ? als_fit(model, problem.equations, colloc, solver)
                                                : adam_fit(model, problem.equations, colloc, solver, cfg.adam);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    SolveReport rep;
    rep.config = cfg;
    rep.final_loss = fit.trace.back();
    rep.iterations = fit.iterations;
    rep.seconds = seconds;
    rep.diverged = fit.diverged;
    rep.relative_l2 = std::numeric_limits<double>::quiet_NaN();
    if (fit.model.banks().front().H.allFinite()) {
        const EvalGrid grid = eval_grid(problem.domain, cfg.eval_resolution);
        rep.relative_l2 = relative_l2(fit.model, problem.reference, grid.points);
    }
    if (!cfg.output_dir.empty()) {
        const std::filesystem::path dir(cfg.output_dir);
        std::filesystem::create_directories(dir);
        fit.trace.save_csv(dir / "trace.csv");
        save_checkpoint(fit.model, dir / "checkpoint.json");
        rep.checkpoint = (dir / "checkpoint.json").string();
        save_report(rep, dir / "report.json");
    }
    if (fit.diverged && throw_on_divergence)
        throw Error(ErrorCode::Diverged, "fit diverged after " + std::to_string(fit.iterations) + " iterations");
    return {std::move(rep), std::move(fit)};
}

SolveReport run(const RunConfig& cfg) { return run_full(cfg).report; }

// ---------------------------------------------------------------- sweeps

SweepAxis sweep_axis_from_string(std::string_view name) {
    const std::string v = lower(std::string(name));
    if (v == "length_scale" || v == "ls") return SweepAxis::LengthScale;
    if (v == "rank") return SweepAxis::Rank;
    if (v == "collocation_count" || v == "points") return SweepAxis::CollocationCount;
    config_error("axis", "expected length_scale, rank or collocation_count");
}

std::string_view to_string(SweepAxis axis) noexcept {
    switch (axis) {
        case SweepAxis::LengthScale: return "length_scale";
        case SweepAxis::Rank: return "rank";
        case SweepAxis::CollocationCount: return "collocation_count";
    }
    return "unknown";
}

RunConfig sweep_point(const RunConfig& base, SweepAxis axis, double value) {
    RunConfig c = base;
    c.custom = true;
    switch (axis) {
        case SweepAxis::LengthScale:
            for (KernelSpec& k : c.kernels) k.length_scale = value;
            break;
        case SweepAxis::Rank: {
            const int r = static_cast<int>(std::lround(value));
            for (int& x : c.ranks) x = r;
            break;
        }
        case SweepAxis::CollocationCount: {
            const auto total = static_cast<Eigen::Index>(std::llround(value));
            if (c.collocation.kind == CollocationSpec::Kind::Grid) {
                const double per = std::pow(value, 1.0 / static_cast<double>(c.collocation.shape.size()));
                for (int& n : c.collocation.shape) n = static_cast<int>(std::lround(per));
            } else {
                c.collocation = CollocationSpec::random_total(total);
            }
            break;
        }
    }
    if (!c.output_dir.empty())
        c.output_dir = (std::filesystem::path(c.output_dir) / (std::string(to_string(axis)) + "-" + csv_number(value))).string();
    return c;
}

std::vector<SweepRow> sweep(const RunConfig& base, SweepAxis axis, const std::vector<double>& values) {
    std::vector<SweepRow> rows;
    for (double v : values) {
        SweepRow row;
        row.value = v;
        row.relative_l2 = row.seconds = std::numeric_limits<double>::quiet_NaN();
        try {
            const RunArtifacts out = run_full(sweep_point(base, axis, v), false);
            row.relative_l2 = out.report.relative_l2;
            row.seconds = out.report.seconds;
            if (out.report.diverged) row.error = "diverged";
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::string out = "value,relative_l2,seconds,error\n";
    for (const SweepRow& r : rows) {
        std::string err = r.error;
        std::replace(err.begin(), err.end(), ',', ';');
        std::replace(err.begin(), err.end(), '\n', ' ');
        out += csv_number(r.value) + "," + csv_number(r.relative_l2) + "," + csv_number(r.seconds) + "," + err + "\n";
    }
    return out;
}

// ---------------------------------------------------------------- trainers

TrainerComparison compare_trainers(const RunConfig& cfg) {
    const PdeProblem problem = make_problem(cfg.problem);
    cfg.validate(problem.dim);
    const FactorModel model = make_model(cfg, problem);
    const CollocationSet colloc = make_collocation(cfg, problem);
    SolverConfig solver = cfg.solver;
    solver.seed = cfg.seed;
    TrainerComparison out;
    out.als = als_fit(model, problem.equations, colloc, solver).trace;
    out.adam = adam_fit(model, problem.equations, colloc, solver, cfg.adam).trace;
    return out;
}

std::string comparison_csv(const TrainerComparison& cmp) {
    std::string out = "trainer,iter,objective,interior_mse,boundary_mse,rkhs_penalty,seconds\n";
    for (const auto& [name, trace] : {std::pair{"als", &cmp.als}, std::pair{"adam", &cmp.adam}})
        for (const LossRecord& r : trace->records)
            out += std::string(name) + "," + std::to_string(r.iter) + "," + csv_number(r.objective) + "," +
                   csv_number(r.interior_mse) + "," + csv_number(r.boundary_mse) + "," + csv_number(r.rkhs_penalty) + "," +
                   csv_number(r.seconds) + "\n";
    return out;
}

// ---------------------------------------------------------------- pointwise errors

Eigen::VectorXd pointwise_errors(const FactorModel& model, const PdeProblem& problem, const Eigen::MatrixXd& points) {
    const Eigen::VectorXd u = evaluate_points(model, points);
    Eigen::VectorXd err(points.rows());
    std::vector<double> x(static_cast<std::size_t>(points.cols()));
    for (Eigen::Index m = 0; m < points.rows(); ++m) {
        for (Eigen::Index j = 0; j < points.cols(); ++j) x[static_cast<std::size_t>(j)] = points(m, j);
        err[m] = std::abs(u[m] - problem.reference(x));
    }
    return err;
}

Eigen::Index pointwise_error_export(const FactorModel& model, const PdeProblem& problem, const Eigen::MatrixXd& points,
                                    const std::filesystem::path& path) {
    const Eigen::VectorXd err = pointwise_errors(model, problem, points);
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out.imbue(std::locale::classic());
    out.precision(17);
    for (Eigen::Index j = 0; j < points.cols(); ++j) out << 'x' << j << ',';
    out << "abs_error\n";
    for (Eigen::Index m = 0; m < points.rows(); ++m) {
        for (Eigen::Index j = 0; j < points.cols(); ++j) out << points(m, j) << ',';
        out << err[m] << '\n';
    }
    return points.rows();
}

}  // namespace tgp
