#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "slicetuner/config.hpp"
#include "slicetuner/errors.hpp"

namespace slicetuner {

// Seeds derived for one trial. Every method in the trial uses the same values.
struct TrialSeeds {
    std::uint64_t trial = 0;
    std::uint64_t world = 0;
    std::uint64_t curves = 0;
    std::uint64_t evaluation = 0;
};
TrialSeeds trial_seeds(std::uint64_t master_seed, int trial);

struct TrialRow {
    std::string method;
    double lambda = 0.0;
    double budget = 0.0;
    int trial = 0;
    std::uint64_t seed = 0;
    bool ok = true;
    std::string error;
    ExitCode error_code = ExitCode::ok;
    double loss = 0.0;
    double avg_eer = 0.0;
    double max_eer = 0.0;
    int iterations = 0;
    double spent = 0.0;
    std::vector<Count> acquired;
    std::uint64_t world_digest = 0;
    // Budget accounting for the feasibility checks.
    bool within_budget = true;
    bool residual_below_max_cost = true;
};

struct MethodSummary {
    std::string method;
    double lambda = 0.0;
    double budget = 0.0;
    int trials_ok = 0;
    int failures = 0;
    double loss_mean = 0.0, loss_se = 0.0;
    double avg_eer_mean = 0.0, avg_eer_se = 0.0;
    double max_eer_mean = 0.0, max_eer_se = 0.0;
    double iterations_mean = 0.0;
    std::vector<double> acquired_mean;
};

struct ComparisonReport {
    std::vector<std::string> slice_ids;
    std::vector<TrialRow> rows;         // ordered by (budget, lambda, trial, method)
    std::vector<MethodSummary> summary; // ordered by (budget, lambda, method)
    int warnings = 0;

    const MethodSummary& find(const std::string& method, double lambda, double budget) const;
    const MethodSummary& find(const std::string& method) const;
};

// Fresh oracle for one (trial, method) run.
std::unique_ptr<LossOracle> make_oracle(const ExperimentConfig& config, std::uint64_t world_seed);

// Runs one method against `oracle` and evaluates the final state.
TrialRow run_method(const ExperimentConfig& config, Method method, double lambda, double budget, int trial,
                    LossOracle& oracle, const TrialSeeds& seeds, EstimationMode mode = EstimationMode::amortized);

// Runs every configured method on every (budget, lambda, trial) point and aggregates.
// Trials run concurrently when the oracle is synthetic and config.parallel is set.
ComparisonReport run_experiment(const ExperimentConfig& config);

std::vector<MethodSummary> summarize(const std::vector<TrialRow>& rows, std::size_t num_slices);

void write_raw_csv(std::ostream& out, const ComparisonReport& report);
void write_summary_csv(std::ostream& out, const ComparisonReport& report);
std::vector<TrialRow> read_raw_csv(std::istream& in);

// Long-format rows: method,budget,trial,loss,avg_eer,max_eer.
void emit_plot_data(std::ostream& out, const std::vector<TrialRow>& rows);

// Writes raw.csv and summary.csv into dir.
void write_report(const std::filesystem::path& dir, const ComparisonReport& report);

struct EstimationModeResult {
    std::string mode;
    std::uint64_t queries_per_estimation = 0;
    double total_queries_mean = 0.0;
    double wall_ms_mean = 0.0;
    std::vector<double> loss;  // one per trial
    std::vector<double> avg_eer;
    std::vector<double> max_eer;
};

struct EstimationComparison {
    EstimationModeResult amortized;
    EstimationModeResult exhaustive;
};

// Runs config.compare_method with amortized and with exhaustive curve estimation on paired seeds.
EstimationComparison compare_estimation_modes(const ExperimentConfig& config);
void write_estimation_comparison(std::ostream& out, const EstimationComparison& cmp);

}  // namespace slicetuner
