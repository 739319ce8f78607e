#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "slicetuner/errors.hpp"
#include "slicetuner/harness.hpp"

using namespace slicetuner;

namespace {

ExperimentConfig small_config(std::vector<Method> methods, int trials = 3) {
    auto flat = parse_flat_config(R"(
schema_version = 1
slices.sizes = [120, 40, 80]
oracle.a = [0.5, 0.4, 0.6]
oracle.b = [3.0, 2.0, 4.0]
oracle.noise_sigma = 0.01
methods = ["Original"]
budget = 200
lambda = 1
curves.num_repeats = 2
seed = 11
)");
    auto cfg = config_from_flat(flat);
    cfg.methods = std::move(methods);
    cfg.num_trials = trials;
    return cfg;
}

const std::vector<Method> kAll{Method::original,     Method::uniform,  Method::water_filling, Method::one_shot,
                               Method::conservative, Method::moderate, Method::aggressive};

std::string raw_of(const ComparisonReport& r) {
    std::ostringstream out;
    write_raw_csv(out, r);
    return out.str();
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("trial seeds") {
    const auto a = trial_seeds(5, 0), b = trial_seeds(5, 0), c = trial_seeds(5, 1);
    CHECK(a.world == b.world);
    CHECK(a.world != c.world);
    std::set<std::uint64_t> distinct{a.trial, a.world, a.curves, a.evaluation};
    CHECK(distinct.size() == 4);
}

TEST_CASE("original is a no-op control") {
    const auto cfg = small_config({Method::original}, 2);
    const auto rep = run_experiment(cfg);
    REQUIRE(rep.rows.size() == 2);
    auto world = make_oracle(cfg, trial_seeds(cfg.master_seed, 0).world);
    const auto losses = world->evaluate(EvalQuery::uniform_fraction(3, 1.0, trial_seeds(cfg.master_seed, 0).evaluation));
    const auto expected = make_loss_report(losses, cfg.partition.validation_sizes());
    CHECK(rep.rows[0].loss == expected.overall_loss);
    CHECK(rep.rows[0].avg_eer == expected.avg_eer);
    CHECK(rep.rows[0].acquired == std::vector<Count>{0, 0, 0});
    CHECK(rep.rows[0].spent == 0.0);
}

TEST_CASE("reproducible and execution-independent") {
    auto cfg = small_config(kAll);
    const auto a = raw_of(run_experiment(cfg));
    const auto b = raw_of(run_experiment(cfg));
    CHECK(a == b);
    cfg.parallel = false;
    CHECK(raw_of(run_experiment(cfg)) == a);
    cfg.master_seed = 12;
    CHECK(raw_of(run_experiment(cfg)) != a);
}

TEST_CASE("every method sees the same initial world") {
    const auto rep = run_experiment(small_config(kAll));
    std::map<int, std::set<std::uint64_t>> digests;
    for (const auto& r : rep.rows) digests[r.trial].insert(r.world_digest);
    for (const auto& [t, d] : digests) CHECK(d.size() == 1);
    CHECK(digests.size() == 3);
}

TEST_CASE("summary is recomputable from the raw csv") {
    auto cfg = small_config(kAll, 4);
    cfg.lambdas = {0.0, 1.0};
    const auto rep = run_experiment(cfg);
    std::istringstream in(raw_of(rep));
    const auto rows = read_raw_csv(in);
    REQUIRE(rows.size() == rep.rows.size());
    const auto again = summarize(rows, 3);
    REQUIRE(again.size() == rep.summary.size());
    for (std::size_t i = 0; i < again.size(); ++i) {
        CHECK(again[i].method == rep.summary[i].method);
        CHECK(std::abs(again[i].loss_mean - rep.summary[i].loss_mean) <= 1e-12);
        CHECK(std::abs(again[i].avg_eer_mean - rep.summary[i].avg_eer_mean) <= 1e-12);
        CHECK(std::abs(again[i].max_eer_mean - rep.summary[i].max_eer_mean) <= 1e-12);
        CHECK(std::abs(again[i].loss_se - rep.summary[i].loss_se) <= 1e-12);
    }
    std::ostringstream summary;
    write_summary_csv(summary, rep);
    CHECK(summary.str().rfind("method,lambda,budget,trials_ok", 0) == 0);
    CHECK_THROWS_AS([] {
        std::istringstream bad("nope\n");
        read_raw_csv(bad);
    }(), InvalidArgument);
}

TEST_CASE("budget accounting across all runs") {
    const auto rep = run_experiment(small_config(kAll, 3));
    for (const auto& r : rep.rows) {
        CAPTURE(r.method);
        CHECK(r.ok);
        CHECK(r.within_budget);
        CHECK(r.residual_below_max_cost);
    }
}

TEST_CASE("failures are recorded and excluded") {
    auto cfg = small_config({Method::original, Method::one_shot}, 2);
    // Two-example slices cannot be subsampled for curve fitting.
    cfg.partition = SlicePartition({{"s0", 2, 1.0, 500}, {"s1", 40, 1.0, 500}, {"s2", 80, 1.0, 500}});
    const auto rep = run_experiment(cfg);
    CHECK(rep.warnings == 2);
    const auto& s = rep.find("OneShot");
    CHECK(s.trials_ok == 0);
    CHECK(s.failures == 2);
    CHECK(rep.find("Original").trials_ok == 2);
    for (const auto& r : rep.rows)
        if (!r.ok) CHECK_FALSE(r.error.empty());
}

TEST_CASE("plot data rows") {
    std::ostringstream empty;
    emit_plot_data(empty, {});
    CHECK(empty.str() == "method,budget,trial,loss,avg_eer,max_eer\n");

    auto cfg = small_config({Method::uniform, Method::moderate}, 10);
    cfg.budgets = {50, 100, 200};
    const auto rep = run_experiment(cfg);
    std::ostringstream out;
    emit_plot_data(out, rep.rows);
    std::istringstream in(out.str());
    std::string line;
    int rows = -1;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 60);
}

TEST_CASE("estimation mode comparison") {
    auto flat = parse_flat_config(R"(
schema_version = 1
slices.sizes = [200, 200, 200, 200, 200, 200, 200, 200, 200, 200]
oracle.a = 0.5
oracle.b = [1, 2, 3, 4, 5, 1, 2, 3, 4, 5]
oracle.noise_sigma = 0.01
methods = ["Moderate"]
budget = 500
trials = 2
)");
    const auto cmp = compare_estimation_modes(config_from_flat(flat));
    CHECK(cmp.amortized.queries_per_estimation == 50);
    CHECK(cmp.exhaustive.queries_per_estimation == 500);
    CHECK(cmp.amortized.loss.size() == 2);
    CHECK(cmp.exhaustive.total_queries_mean > cmp.amortized.total_queries_mean);

    auto one = config_from_flat(parse_flat_config(R"(
schema_version = 1
slices.sizes = [200]
oracle.a = 0.5
oracle.b = 1
methods = ["Moderate"]
budget = 50
trials = 1
)"));
    const auto c1 = compare_estimation_modes(one);
    CHECK(c1.amortized.queries_per_estimation == c1.exhaustive.queries_per_estimation);
    std::ostringstream out;
    write_estimation_comparison(out, c1);
    CHECK(out.str().rfind("mode,queries_per_estimation", 0) == 0);

    one.oracle.kind = OracleSpec::Kind::trainer;
    one.oracle.endpoint.command = {"true"};
    CHECK_THROWS_AS(compare_estimation_modes(one), ConfigError);
}

TEST_CASE("a run driven through the trainer protocol") {
    auto cfg = config_from_flat(parse_flat_config(R"(
schema_version = 1
slices.sizes = [300, 100, 100]
oracle.kind = "trainer"
oracle.command = [")" FAKE_TRAINER R"(", "--sizes", "300,100,100"]
oracle.timeout_seconds = 10
methods = ["Original", "Moderate"]
budget = 1500
lambda = 1
iterative.max_iterations = 2
curves.num_repeats = 1
trials = 1
)"));
    const auto rep = run_experiment(cfg);
    REQUIRE(rep.rows.size() == 2);
    CHECK(rep.warnings == 0);
    const auto& original = rep.rows[0];
    const auto& moderate = rep.rows[1];
    CHECK(moderate.ok);
    CHECK(moderate.iterations == 2);
    CHECK(moderate.spent > 0.0);
    CHECK(moderate.loss < original.loss);

    cfg.oracle.endpoint.command = {FAKE_TRAINER, "--mode", "crash"};
    const auto bad = run_experiment(cfg);
    CHECK(bad.warnings == 2);
    CHECK(bad.rows[1].error_code == ExitCode::oracle);
}

}
