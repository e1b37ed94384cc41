// sine_lab: identity suites, Monte Carlo experiments and tables for the sine process.

#include "sinelab/identities.hpp"
#include "sinelab/mc.hpp"
#include "sinelab/sampler.hpp"
#include "sinelab/spectral.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using namespace sinelab;

namespace {

enum Exit { ok = 0, checks_failed = 1, usage = 2, runtime = 3 };

unsigned resolve_threads(std::optional<unsigned> flag)
{
    if (flag && *flag > 0) return *flag;
    if (const char* env = std::getenv("SINE_LAB_THREADS")) {
        try {
            const long v = std::stol(env);
            if (v > 0) return static_cast<unsigned>(v);
        } catch (const std::exception&) {
        }
        std::cerr << "warning: ignoring SINE_LAB_THREADS=" << env << '\n';
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

// Writes to `path`, or to stdout when the path is empty or "-".
void emit(const std::string& path, const std::string& text)
{
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

std::string verdict_line(const Check& c)
{
    std::ostringstream os;
    os << std::setprecision(6);
    std::string verdict = c.verdict;
    for (auto& ch : verdict) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    os << std::left << std::setw(5) << verdict << " N=" << c.n_scale << ' ' << c.statistic << " est=" << c.estimate;
    if (c.se > 0.0) os << " se=" << c.se;
    if (c.verdict != "info" || c.target != 0.0) os << " target=" << c.target;
    if (c.tolerance > 0.0) os << " tol=" << c.tolerance;
    if (c.exact_finite_n) os << " exact=" << *c.exact_finite_n;
    return os.str();
}

struct Common {
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::string out;
};

int cmd_identities(const Common& common, const std::vector<std::string>& scopes, const std::string& fault)
{
    IdentityOptions opts;
    opts.seed = common.seed.value_or(1);
    opts.inject_fault = fault;
    const auto report = run_identities(scopes, opts);
    for (const auto& c : report.checks) {
        std::cerr << (c.passed ? "PASS " : "FAIL ") << c.suite << '/' << c.name << " defect=" << c.defect
                  << " tol=" << c.tolerance << '\n';
    }
    auto j = report.to_json();
    j["seed"] = opts.seed;
    j["version"] = kVersion;
    j["scopes"] = scopes;
    emit(common.out, j.dump(2) + "\n");
    return report.passed() ? ok : checks_failed;
}

int cmd_experiment(const Common& common, const std::string& config_path)
{
    ExperimentConfig cfg = load_config(config_path);
    if (common.seed) cfg.seed = *common.seed;

    fs::path json_path;
    if (!common.out.empty()) json_path = common.out;
    else if (!cfg.output.empty()) json_path = fs::path(config_path).parent_path() / cfg.output;
    else json_path = fs::path(config_path).replace_extension(".result.json");
    if (json_path.extension() != ".json") json_path += ".json";
    fs::path csv_path = json_path;
    csv_path.replace_extension(".csv");

    ExperimentResult partial;
    partial.config = cfg;
    RunOptions opts;
    opts.threads = resolve_threads(common.threads);
    opts.log = [](const std::string& m) { std::cerr << m << '\n'; };
    opts.on_check = [&](const Check& c) {
        partial.checks.push_back(c);
        std::cout << verdict_line(c) << '\n';
    };

    auto write = [&](const ExperimentResult& r, const std::optional<std::string>& error) {
        auto j = r.to_json();
        if (error) {
            j["error"] = *error;
            j["passed"] = false;
        }
        std::ofstream(json_path) << j.dump(2) << '\n';
        std::ofstream csv(csv_path);
        r.write_csv(csv);
    };

    try {
        const auto result = run_experiment(cfg, opts);
        write(result, std::nullopt);
        std::cout << (result.passed() ? "PASS" : "FAIL") << " experiment " << to_string(cfg.kind) << " -> "
                  << json_path.string() << '\n';
        return result.passed() ? ok : checks_failed;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        partial.timestamp = utc_timestamp();
        write(partial, std::string(e.what()));
        std::cerr << "error: " << e.what() << " (partial results in " << json_path.string() << ")\n";
        return runtime;
    }
}

int cmd_covariance_table(const Common& common, double tau, int grid)
{
    if (grid < 2) throw UsageError("--grid must be at least 2");
    const ZCovarianceModel model(tau);
    std::ostringstream os;
    os << "# z covariance tau=" << tau << " grid=" << grid << " version=" << kVersion << '\n';
    os << std::setprecision(17) << "t,s,covariance\n";
    for (int i = 0; i < grid; ++i) {
        for (int j = 0; j < grid; ++j) {
            const double t = static_cast<double>(i) / (grid - 1);
            const double s = static_cast<double>(j) / (grid - 1);
            os << t << ',' << s << ',' << z_covariance(model, t, s) << '\n';
        }
    }
    emit(common.out, os.str());
    return ok;
}

int cmd_sample(const Common& common, const std::string& sampler, std::vector<double> window, int count,
               double nodes_per_unit, std::size_t matrix_dim)
{
    if (window.size() != 2 || !(window[1] > window[0])) throw UsageError("--window needs lo < hi");
    if (count < 1) throw UsageError("--count must be positive");
    const Window w(window[0], window[1]);
    const RngStream root(common.seed.value_or(1), 0x5a);
    std::ostringstream os;
    os << "# sampler " << sampler << " version " << kVersion << '\n';
    if (sampler == "dpp") {
        const auto op = build_operator(w, default_node_count(w, nodes_per_unit));
        for (int r = 0; r < count; ++r) {
            RngStream rng = root.child(static_cast<std::uint64_t>(r));
            os << "# replica " << r << '\n';
            write_configuration(os, sample_dpp(op, rng));
        }
    } else if (sampler == "gue") {
        for (int r = 0; r < count; ++r) {
            RngStream rng = root.child(static_cast<std::uint64_t>(r));
            os << "# replica " << r << '\n';
            write_configuration(os, sample_gue_bulk(matrix_dim, w, rng));
        }
    } else {
        throw UsageError("unknown sampler \"" + sampler + "\" (dpp or gue)");
    }
    emit(common.out, os.str());
    return ok;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Numerical laboratory for the sine determinantal point process"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    Common common;
    app.add_option("--seed", common.seed, "Root seed");
    app.add_option("--threads", common.threads, "Worker threads (default: SINE_LAB_THREADS, then hardware)");
    app.add_option("--out", common.out, "Output path (stdout when omitted, where applicable)");

    auto* ids = app.add_subcommand("identities", "Run exact and numerical identity suites");
    std::vector<std::string> scopes{"all"};
    std::string fault;
    ids->add_option("scope", scopes, "Suites: all, none, combinatorial, overlap, intlog, trace, scaling, covariance");
    ids->add_option("--inject-fault", fault, "Perturb the named identity")->group("");

    auto* exp = app.add_subcommand("experiment", "Run a Monte Carlo experiment from a JSON config");
    std::string config_path;
    exp->add_option("config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);

    auto* cov = app.add_subcommand("covariance-table", "Tabulate the z covariance on a square grid");
    double tau = 1.0;
    int grid = 101;
    cov->add_option("--tau", tau, "Reference time in (0, 1]");
    cov->add_option("--grid", grid, "Grid points per axis (>= 2)");

    auto* smp = app.add_subcommand("sample", "Dump raw configurations");
    std::string sampler = "dpp";
    std::vector<double> window{0.0, 100.0};
    int count = 1;
    double npu = kDefaultNodesPerUnit;
    std::size_t matrix_dim = 400;
    smp->add_option("--sampler", sampler, "dpp or gue");
    smp->add_option("--window", window, "Window endpoints lo hi")->expected(2);
    smp->add_option("--count", count, "Number of configurations");
    smp->add_option("--nodes-per-unit", npu, "Quadrature nodes per unit length (dpp)");
    smp->add_option("--matrix-dim", matrix_dim, "Tridiagonal matrix dimension (gue)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : usage;
    }

    try {
        if (*ids) return cmd_identities(common, scopes, fault);
        if (*exp) return cmd_experiment(common, config_path);
        if (*cov) return cmd_covariance_table(common, tau, grid);
        if (*smp) return cmd_sample(common, sampler, window, count, npu, matrix_dim);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return usage;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return usage;
    } catch (const DomainError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return usage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return runtime;
    }
    return usage;
}
