#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace slicetuner {

using Count = std::int64_t;

struct SliceState {
    std::string id;
    Count size = 0;            // training examples currently in the slice
    double cost = 1.0;         // per-example acquisition cost
    Count validation_size = 500;
};

// Ordered, non-overlapping slices of one dataset. Construction validates the invariants.
class SlicePartition {
public:
    SlicePartition() = default;
    explicit SlicePartition(std::vector<SliceState> slices);

    std::size_t n() const noexcept { return slices_.size(); }
    const std::vector<SliceState>& slices() const noexcept { return slices_; }
    const SliceState& operator[](std::size_t i) const { return slices_[i]; }

    std::vector<Count> sizes() const;
    std::vector<double> costs() const;
    std::vector<std::string> ids() const;
    std::vector<Count> validation_sizes() const;

    // Returns a copy with sizes[i] += added[i].
    SlicePartition grown(std::span<const Count> added) const;

private:
    std::vector<SliceState> slices_;
};

struct LossReport {
    std::vector<double> per_slice_loss;
    double overall_loss = 0.0;
    double avg_eer = 0.0;
    double max_eer = 0.0;
};

class Budget {
public:
    explicit Budget(double total);

    double total() const noexcept { return total_; }
    double spent() const noexcept { return spent_; }
    double remaining() const noexcept { return total_ - spent_; }

    // Throws InvalidArgument if the charge would overdraw the budget
    // beyond a relative round-off slack.
    void charge(double amount);

private:
    double total_;
    double spent_ = 0.0;
};

struct Unfairness {
    double avg_eer = 0.0;
    double max_eer = 0.0;
};

inline constexpr double kProbabilityClip = 1e-7;

// Binary cross-entropy averaged over examples; probabilities are clipped to [eps, 1 - eps].
double log_loss(std::span<const double> predicted_probs, std::span<const int> labels);

// Categorical cross-entropy. probs is row-major, one row of num_classes entries per example.
double multiclass_log_loss(std::span<const double> probs, std::size_t num_classes,
                           std::span<const int> labels);

// Mean and max of |loss_i - overall|.
Unfairness unfairness(std::span<const double> per_slice_loss, double overall_loss);

// Loss on the union of the validation sets, i.e. the validation-size-weighted mean.
double overall_loss(std::span<const double> per_slice_loss, std::span<const Count> validation_sizes);

LossReport make_loss_report(std::vector<double> per_slice_loss, std::span<const Count> validation_sizes);

// max(sizes) / min(sizes); every entry must be > 0.
double imbalance_ratio_of(std::span<const double> sizes);

// cost_i = time_i / min(time), rounded to one decimal place.
std::vector<double> normalize_costs(std::span<const double> avg_task_times);

}  // namespace slicetuner
