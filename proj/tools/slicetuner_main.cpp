// slicetuner command line: run experiments, fit single curves, compare estimation modes.
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "slicetuner/curves.hpp"
#include "slicetuner/errors.hpp"
#include "slicetuner/harness.hpp"

namespace st = slicetuner;

namespace {

void setup_logging() {
    auto logger = spdlog::stderr_color_mt("slicetuner");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::warn);
    if (const char* env = std::getenv("SLICETUNER_LOG")) {
        const auto lvl = spdlog::level::from_str(env);
        // from_str maps unknown names to "off"; only honour it when asked for explicitly.
        if (lvl != spdlog::level::off || std::string(env) == "off")
            spdlog::set_level(lvl);
        else
            spdlog::warn("ignoring unknown SLICETUNER_LOG level '{}'", env);
    }
}

std::vector<st::CurvePoint> read_points(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw st::ConfigError("cannot open points file " + path);
    std::vector<st::CurvePoint> pts;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        for (auto& ch : line)
            if (ch == ',') ch = ' ';
        std::istringstream fields(line);
        st::CurvePoint p;
        if (!(fields >> p.size >> p.loss)) {
            if (lineno == 1) continue;  // header
            throw st::ConfigError(path + ":" + std::to_string(lineno) + ": expected size,loss[,weight]");
        }
        if (!(fields >> p.weight)) p.weight = 1.0;
        pts.push_back(p);
    }
    return pts;
}

void print_summary(const st::ComparisonReport& report) {
    std::printf("%-13s %8s %10s %4s %12s %12s %12s %12s %12s %12s %6s\n", "method", "lambda", "budget", "ok", "loss",
                "loss_se", "avg_eer", "avg_eer_se", "max_eer", "max_eer_se", "iters");
    for (const auto& s : report.summary)
        std::printf("%-13s %8g %10g %4d %12.6f %12.6f %12.6f %12.6f %12.6f %12.6f %6.2f\n", s.method.c_str(), s.lambda,
                    s.budget, s.trials_ok, s.loss_mean, s.loss_se, s.avg_eer_mean, s.avg_eer_se, s.max_eer_mean,
                    s.max_eer_se, s.iterations_mean);
    if (report.warnings) std::printf("%d trial run(s) failed; see raw.csv\n", report.warnings);
}

int cmd_run(const std::string& config_path, const std::string& out, std::optional<int> trials,
            std::optional<std::uint64_t> seed) {
    auto cfg = st::load_config(config_path);
    if (trials) cfg.num_trials = *trials;
    if (seed) cfg.master_seed = *seed;
    if (!out.empty()) cfg.output_dir = out;
    cfg.validate();
    const auto report = st::run_experiment(cfg);
    st::write_report(cfg.output_dir, report);
    print_summary(report);
    std::printf("report written to %s\n", cfg.output_dir.string().c_str());
    if (!report.rows.empty() && report.warnings == static_cast<int>(report.rows.size()))
        return static_cast<int>(report.rows.front().error_code);
    return 0;
}

int cmd_fit(const std::string& points_path, bool fit_floor) {
    const auto pts = read_points(points_path);
    st::FitOptions opts;
    opts.fit_floor = fit_floor;
    const auto fit = st::fit_power_law(pts, opts);
    std::printf("a=%.10g b=%.10g c=%.10g converged=%s iterations=%d residual=%.10g\n", fit.curve.a, fit.curve.b,
                fit.curve.c, fit.converged ? "true" : "false", fit.iterations, fit.residual);
    return 0;
}

int cmd_compare(const std::string& config_path, std::optional<int> trials) {
    auto cfg = st::load_config(config_path);
    if (trials) cfg.num_trials = *trials;
    const auto cmp = st::compare_estimation_modes(cfg);
    st::write_estimation_comparison(std::cout, cmp);
    return 0;
}

int cmd_plot(const std::string& report_dir) {
    const std::filesystem::path dir(report_dir);
    std::ifstream in(dir / "raw.csv");
    if (!in) throw st::ConfigError("cannot read " + (dir / "raw.csv").string());
    const auto rows = st::read_raw_csv(in);
    const auto target = dir / "plot_data.csv";
    std::ofstream out(target);
    if (!out) throw st::ConfigError("cannot write " + target.string());
    st::emit_plot_data(out, rows);
    if (!out) throw st::ConfigError("write failed for " + target.string());
    std::printf("%s\n", target.string().c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    setup_logging();
    CLI::App app{"Selective data acquisition for slice-level fairness"};
    app.require_subcommand(1);

    std::string config_path, out_dir, points_path, report_dir;
    std::optional<int> trials;
    std::optional<std::uint64_t> seed;
    bool fit_floor = false;

    auto* run = app.add_subcommand("run", "run every configured method and write raw/summary CSVs");
    run->add_option("--config", config_path, "config file")->required();
    run->add_option("--out", out_dir, "output directory (overrides output_dir)");
    run->add_option("--trials", trials, "number of trials")->check(CLI::PositiveNumber);
    run->add_option("--seed", seed, "master seed");

    auto* fit = app.add_subcommand("fit", "fit b*x^-a (+c) to size,loss[,weight] points");
    fit->add_option("--points", points_path, "CSV of size,loss[,weight]")->required();
    fit->add_flag("--fit-floor", fit_floor, "also fit the irreducible loss c");

    auto* cmp = app.add_subcommand("compare-estimation", "amortized vs exhaustive curve estimation");
    cmp->add_option("--config", config_path, "config file")->required();
    cmp->add_option("--trials", trials, "number of trials")->check(CLI::PositiveNumber);

    auto* plot = app.add_subcommand("plot-data", "write plot_data.csv from a report directory");
    plot->add_option("--report", report_dir, "directory holding raw.csv")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(st::ExitCode::config);
    }

    try {
        if (*run) return cmd_run(config_path, out_dir, trials, seed);
        if (*fit) return cmd_fit(points_path, fit_floor);
        if (*cmp) return cmd_compare(config_path, trials);
        if (*plot) return cmd_plot(report_dir);
    } catch (const st::Error& e) {
        spdlog::error("{}", e.what());
        return static_cast<int>(e.code());
    } catch (const std::exception& e) {
        spdlog::error("internal failure: {}", e.what());
        return static_cast<int>(st::ExitCode::numerical);
    }
    return 0;
}
