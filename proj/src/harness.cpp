#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "slicetuner/errors.hpp"
#include "slicetuner/harness.hpp"
#include "slicetuner/parallel.hpp"
#include "slicetuner/rng.hpp"

namespace slicetuner {

TrialSeeds trial_seeds(std::uint64_t master_seed, int trial) {
    TrialSeeds s;
    s.trial = mix_seed(master_seed, {static_cast<std::uint64_t>(trial)});
    s.world = mix_seed(s.trial, {1});
    s.curves = mix_seed(s.trial, {2});
    s.evaluation = mix_seed(s.trial, {3});
    return s;
}

const MethodSummary& ComparisonReport::find(const std::string& method, double lambda, double budget) const {
    for (const auto& s : summary)
        if (s.method == method && s.lambda == lambda && s.budget == budget) return s;
    throw InvalidArgument("report has no summary for method '" + method + "'");
}

const MethodSummary& ComparisonReport::find(const std::string& method) const {
    for (const auto& s : summary)
        if (s.method == method) return s;
    throw InvalidArgument("report has no summary for method '" + method + "'");
}

std::unique_ptr<LossOracle> make_oracle(const ExperimentConfig& config, std::uint64_t world_seed) {
    const auto ids = config.partition.ids();
    if (config.oracle.kind == OracleSpec::Kind::trainer)
        return std::make_unique<TrainerOracle>(config.oracle.endpoint, ids);
    SyntheticWorld w;
    w.ids = ids;
    w.truth = config.oracle.truth;
    w.initial_sizes = config.partition.sizes();
    w.influence = config.oracle.influence;
    w.influence_max = config.oracle.influence_max;
    w.noise_sigma = config.oracle.noise_sigma;
    w.pool_limit = config.oracle.pool_limit;
    w.seed = world_seed;
    return std::make_unique<SyntheticOracle>(std::move(w));
}

namespace {

LimitStrategy strategy_for(const ExperimentConfig& config, Method m) {
    switch (m) {
        case Method::conservative:
            return LimitStrategy::conservative();
        case Method::aggressive:
            return LimitStrategy::aggressive(config.aggressive_factor);
        default:
            return LimitStrategy::moderate(config.moderate_step);
    }
}

double cost_of(const SlicePartition& p, std::span<const Count> counts) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.n(); ++i) s += p[i].cost * static_cast<double>(counts[i]);
    return s;
}

}  // namespace

TrialRow run_method(const ExperimentConfig& config, Method method, double lambda, double budget, int trial,
                    LossOracle& oracle, const TrialSeeds& seeds, EstimationMode mode) {
    const auto& partition = config.partition;
    const std::size_t n = partition.n();
    TrialRow row;
    row.method = method_name(method);
    row.lambda = lambda;
    row.budget = budget;
    row.trial = trial;
    row.seed = seeds.trial;
    row.acquired.assign(n, 0);
    if (const auto* synth = dynamic_cast<const SyntheticOracle*>(&oracle)) row.world_digest = synth->digest();

    CurveEstimationConfig curves = config.curves;
    curves.seed = seeds.curves;
    RunOptions opts;
    opts.exec = config.parallel ? Execution::parallel : Execution::serial;
    opts.estimation = mode;
    opts.evaluate_each_iteration = false;

    try {
        switch (method) {
            case Method::original:
                break;
            case Method::uniform:
            case Method::water_filling: {
                const auto plan = method == Method::uniform ? uniform_allocate(partition, budget)
                                                            : water_filling_allocate(partition, budget);
                const auto got = oracle.acquire(plan.d);
                row.acquired = got.realized;
                row.spent = cost_of(partition, got.realized);
                break;
            }
            case Method::one_shot: {
                const auto log = run_one_shot(partition, oracle, curves, lambda, config.iterative.min_slice_size,
                                              budget, opts);
                row.acquired = log.total_acquired;
                row.spent = log.spent;
                row.iterations = static_cast<int>(log.iteration_count());
                break;
            }
            case Method::conservative:
            case Method::moderate:
            case Method::aggressive: {
                IterativeConfig it = config.iterative;
                it.lambda = lambda;
                it.strategy = strategy_for(config, method);
                const auto log = run_iterative(partition, oracle, curves, it, budget, opts);
                row.acquired = log.total_acquired;
                row.spent = log.spent;
                row.iterations = static_cast<int>(log.iteration_count());
                break;
            }
        }
        const auto losses = oracle.evaluate(EvalQuery::uniform_fraction(n, 1.0, seeds.evaluation));
        const auto report = make_loss_report(losses, partition.validation_sizes());
        row.loss = report.overall_loss;
        row.avg_eer = report.avg_eer;
        row.max_eer = report.max_eer;
    } catch (const Error& e) {
        row.ok = false;
        row.error = e.what();
        row.error_code = e.code();
    } catch (const std::exception& e) {
        row.ok = false;
        row.error = e.what();
        row.error_code = ExitCode::numerical;
    }

    const auto costs = partition.costs();
    const double max_cost = *std::max_element(costs.begin(), costs.end());
    row.within_budget = row.spent <= budget + 1e-9 * std::max(1.0, budget);
    row.residual_below_max_cost = method == Method::original || budget - row.spent < max_cost;
    return row;
}

namespace {

std::vector<TrialRow> run_point(const ExperimentConfig& config, double budget, double lambda, int trial) {
    const auto seeds = trial_seeds(config.master_seed, trial);
    std::vector<TrialRow> rows;
    for (const auto m : config.methods) {
        try {
            auto oracle = make_oracle(config, seeds.world);
            rows.push_back(run_method(config, m, lambda, budget, trial, *oracle, seeds));
        } catch (const std::exception& e) {
            TrialRow row;
            const auto* err = dynamic_cast<const Error*>(&e);
            row.error_code = err ? err->code() : ExitCode::oracle;
            row.method = method_name(m);
            row.lambda = lambda;
            row.budget = budget;
            row.trial = trial;
            row.seed = seeds.trial;
            row.ok = false;
            row.error = e.what();
            row.acquired.assign(config.partition.n(), 0);
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

double mean_of(const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double standard_error(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1)) / std::sqrt(static_cast<double>(v.size()));
}

}  // namespace

std::vector<MethodSummary> summarize(const std::vector<TrialRow>& rows, std::size_t num_slices) {
    using Key = std::tuple<double, double, std::string>;
    std::vector<Key> order;
    std::map<Key, std::vector<const TrialRow*>> groups;
    for (const auto& r : rows) {
        Key k{r.budget, r.lambda, r.method};
        if (!groups.count(k)) order.push_back(k);
        groups[k].push_back(&r);
    }
    std::vector<MethodSummary> out;
    for (const auto& k : order) {
        MethodSummary s;
        s.budget = std::get<0>(k);
        s.lambda = std::get<1>(k);
        s.method = std::get<2>(k);
        s.acquired_mean.assign(num_slices, 0.0);
        std::vector<double> loss, avg, mx, iters;
        for (const auto* r : groups[k]) {
            if (!r->ok) {
                ++s.failures;
                continue;
            }
            loss.push_back(r->loss);
            avg.push_back(r->avg_eer);
            mx.push_back(r->max_eer);
            iters.push_back(r->iterations);
            for (std::size_t i = 0; i < num_slices && i < r->acquired.size(); ++i)
                s.acquired_mean[i] += static_cast<double>(r->acquired[i]);
        }
        s.trials_ok = static_cast<int>(loss.size());
        s.loss_mean = mean_of(loss);
        s.loss_se = standard_error(loss);
        s.avg_eer_mean = mean_of(avg);
        s.avg_eer_se = standard_error(avg);
        s.max_eer_mean = mean_of(mx);
        s.max_eer_se = standard_error(mx);
        s.iterations_mean = mean_of(iters);
        if (s.trials_ok > 0)
            for (auto& a : s.acquired_mean) a /= s.trials_ok;
        out.push_back(std::move(s));
    }
    return out;
}

ComparisonReport run_experiment(const ExperimentConfig& config) {
    config.validate();
    struct Point {
        double budget;
        double lambda;
        int trial;
    };
    std::vector<Point> points;
    for (double b : config.budgets)
        for (double l : config.lambdas)
            for (int t = 0; t < config.num_trials; ++t) points.push_back({b, l, t});

    std::vector<std::vector<TrialRow>> results(points.size());
    const bool concurrent = config.parallel && config.oracle.kind == OracleSpec::Kind::synthetic;
    parallel_for(points.size(), concurrent, [&](std::size_t i) {
        results[i] = run_point(config, points[i].budget, points[i].lambda, points[i].trial);
    });

    ComparisonReport report;
    report.slice_ids = config.partition.ids();
    for (auto& rs : results)
        for (auto& r : rs) {
            if (!r.ok) {
                ++report.warnings;
                spdlog::warn("{} trial {} failed: {}", r.method, r.trial, r.error);
            }
            report.rows.push_back(std::move(r));
        }
    report.summary = summarize(report.rows, config.partition.n());
    return report;
}

namespace {

std::string clean(std::string s) {
    for (auto& ch : s)
        if (ch == ',' || ch == '\n' || ch == '\r') ch = ' ';
    return s;
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(line);
    while (std::getline(in, cur, sep)) out.push_back(cur);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

}  // namespace

void write_raw_csv(std::ostream& out, const ComparisonReport& report) {
    out << "method,lambda,budget,trial,seed,status,loss,avg_eer,max_eer,iterations,spent,acquired,world_digest,error\n";
    const auto prec = out.precision(17);
    for (const auto& r : report.rows) {
        out << r.method << ',' << r.lambda << ',' << r.budget << ',' << r.trial << ',' << r.seed << ','
            << (r.ok ? "ok" : "error") << ',' << r.loss << ',' << r.avg_eer << ',' << r.max_eer << ',' << r.iterations
            << ',' << r.spent << ',';
        for (std::size_t i = 0; i < r.acquired.size(); ++i) out << (i ? ";" : "") << r.acquired[i];
        out << ',' << r.world_digest << ',' << clean(r.error) << '\n';
    }
    out.precision(prec);
}

void write_summary_csv(std::ostream& out, const ComparisonReport& report) {
    out << "method,lambda,budget,trials_ok,failures,loss_mean,loss_se,avg_eer_mean,avg_eer_se,max_eer_mean,max_eer_se,"
           "iterations_mean";
    for (const auto& id : report.slice_ids) out << ",acquired_" << id;
    out << '\n';
    const auto prec = out.precision(17);
    for (const auto& s : report.summary) {
        out << s.method << ',' << s.lambda << ',' << s.budget << ',' << s.trials_ok << ',' << s.failures << ','
            << s.loss_mean << ',' << s.loss_se << ',' << s.avg_eer_mean << ',' << s.avg_eer_se << ',' << s.max_eer_mean
            << ',' << s.max_eer_se << ',' << s.iterations_mean;
        for (double a : s.acquired_mean) out << ',' << a;
        out << '\n';
    }
    out.precision(prec);
}

std::vector<TrialRow> read_raw_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw InvalidArgument("raw CSV is empty");
    const auto header = split(line, ',');
    if (header.size() != 14 || header[0] != "method" || header[6] != "loss")
        throw InvalidArgument("raw CSV has an unexpected header");
    std::vector<TrialRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split(line, ',');
        if (f.size() != 14) throw InvalidArgument("raw CSV row has " + std::to_string(f.size()) + " fields");
        TrialRow r;
        try {
            r.method = f[0];
            r.lambda = std::stod(f[1]);
            r.budget = std::stod(f[2]);
            r.trial = std::stoi(f[3]);
            r.seed = std::stoull(f[4]);
            r.ok = f[5] == "ok";
            r.loss = std::stod(f[6]);
            r.avg_eer = std::stod(f[7]);
            r.max_eer = std::stod(f[8]);
            r.iterations = std::stoi(f[9]);
            r.spent = std::stod(f[10]);
            for (const auto& a : split(f[11], ';'))
                if (!a.empty()) r.acquired.push_back(std::stoll(a));
            r.world_digest = std::stoull(f[12]);
            r.error = f[13];
        } catch (const std::logic_error&) {
            throw InvalidArgument("raw CSV row is malformed: " + line);
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

void emit_plot_data(std::ostream& out, const std::vector<TrialRow>& rows) {
    out << "method,budget,trial,loss,avg_eer,max_eer\n";
    std::vector<double> lambdas;
    for (const auto& r : rows)
        if (std::find(lambdas.begin(), lambdas.end(), r.lambda) == lambdas.end()) lambdas.push_back(r.lambda);
    const bool tag_lambda = lambdas.size() > 1;
    const auto prec = out.precision(17);
    for (const auto& r : rows) {
        if (!r.ok) continue;
        out << r.method;
        if (tag_lambda) out << "[lambda=" << r.lambda << ']';
        out << ',' << r.budget << ',' << r.trial << ',' << r.loss << ',' << r.avg_eer << ',' << r.max_eer << '\n';
    }
    out.precision(prec);
}

void write_report(const std::filesystem::path& dir, const ComparisonReport& report) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(ExitCode::config, "cannot create output directory " + dir.string() + ": " + ec.message());
    auto open = [&](const char* name) {
        std::ofstream f(dir / name);
        if (!f) throw Error(ExitCode::config, "cannot write " + (dir / name).string());
        return f;
    };
    {
        auto f = open("raw.csv");
        write_raw_csv(f, report);
    }
    {
        auto f = open("summary.csv");
        write_summary_csv(f, report);
    }
}

EstimationComparison compare_estimation_modes(const ExperimentConfig& config) {
    config.validate();
    if (config.oracle.kind != OracleSpec::Kind::synthetic)
        throw ConfigError("compare-estimation needs the synthetic oracle");
    const double budget = config.budgets.front();
    const double lambda = config.lambdas.front();

    EstimationComparison cmp;
    cmp.amortized.mode = "amortized";
    cmp.exhaustive.mode = "exhaustive";
    for (auto* res : {&cmp.amortized, &cmp.exhaustive}) {
        const auto mode = res == &cmp.amortized ? EstimationMode::amortized : EstimationMode::exhaustive;
        // Query count of a single estimation pass on the initial partition.
        {
            auto world = make_oracle(config, trial_seeds(config.master_seed, 0).world);
            CountingOracle counting(*world);
            auto cfg = config.curves;
            const auto sizes = config.partition.sizes();
            const Count smallest = *std::min_element(sizes.begin(), sizes.end());
            cfg.min_fraction = std::max(cfg.min_fraction, std::min(0.5, 2.0 / static_cast<double>(smallest)));
            estimate_curves(counting, config.partition, cfg, mode, Execution::serial);
            res->queries_per_estimation = counting.queries();
        }
        double queries = 0.0;
        double wall = 0.0;
        for (int t = 0; t < config.num_trials; ++t) {
            const auto seeds = trial_seeds(config.master_seed, t);
            auto world = make_oracle(config, seeds.world);
            CountingOracle counting(*world);
            const auto start = std::chrono::steady_clock::now();
            const auto row = run_method(config, config.compare_method, lambda, budget, t, counting, seeds, mode);
            wall += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
            if (!row.ok) throw Error(ExitCode::numerical, "compare-estimation run failed: " + row.error);
            queries += static_cast<double>(counting.queries());
            res->loss.push_back(row.loss);
            res->avg_eer.push_back(row.avg_eer);
            res->max_eer.push_back(row.max_eer);
        }
        res->total_queries_mean = queries / config.num_trials;
        res->wall_ms_mean = wall / config.num_trials;
    }
    return cmp;
}

void write_estimation_comparison(std::ostream& out, const EstimationComparison& cmp) {
    out << "mode,queries_per_estimation,total_queries_mean,wall_ms_mean,loss_mean,avg_eer_mean,max_eer_mean\n";
    for (const auto* r : {&cmp.amortized, &cmp.exhaustive}) {
        out << r->mode << ',' << r->queries_per_estimation << ',' << r->total_queries_mean << ',' << r->wall_ms_mean
            << ',' << mean_of(r->loss) << ',' << mean_of(r->avg_eer) << ',' << mean_of(r->max_eer) << '\n';
    }
}

}  // namespace slicetuner
