#include "slicetuner/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "slicetuner/errors.hpp"

namespace slicetuner {

SlicePartition::SlicePartition(std::vector<SliceState> slices) : slices_(std::move(slices)) {
    if (slices_.empty()) throw InvalidArgument("partition must contain at least one slice");
    std::unordered_set<std::string> seen;
    for (const auto& s : slices_) {
        if (!seen.insert(s.id).second) throw InvalidArgument("duplicate slice id '" + s.id + "'");
        if (s.size < 0) throw InvalidArgument("slice '" + s.id + "' has negative size");
        if (!(s.cost > 0.0) || !std::isfinite(s.cost))
            throw InvalidArgument("slice '" + s.id + "' must have a positive cost");
        if (s.validation_size < 1)
            throw InvalidArgument("slice '" + s.id + "' needs at least one validation example");
    }
}

std::vector<Count> SlicePartition::sizes() const {
    std::vector<Count> out;
    out.reserve(n());
    for (const auto& s : slices_) out.push_back(s.size);
    return out;
}

std::vector<double> SlicePartition::costs() const {
    std::vector<double> out;
    out.reserve(n());
    for (const auto& s : slices_) out.push_back(s.cost);
    return out;
}

std::vector<std::string> SlicePartition::ids() const {
    std::vector<std::string> out;
    out.reserve(n());
    for (const auto& s : slices_) out.push_back(s.id);
    return out;
}

std::vector<Count> SlicePartition::validation_sizes() const {
    std::vector<Count> out;
    out.reserve(n());
    for (const auto& s : slices_) out.push_back(s.validation_size);
    return out;
}

SlicePartition SlicePartition::grown(std::span<const Count> added) const {
    if (added.size() != n()) throw InvalidArgument("grown: count list length differs from slice count");
    auto copy = slices_;
    for (std::size_t i = 0; i < copy.size(); ++i) copy[i].size += added[i];
    return SlicePartition(std::move(copy));
}

Budget::Budget(double total) : total_(total) {
    if (!(total >= 0.0) || !std::isfinite(total)) throw InvalidArgument("budget must be finite and >= 0");
}

void Budget::charge(double amount) {
    if (amount < 0.0) throw InvalidArgument("negative budget charge");
    const double slack = 1e-9 * std::max(1.0, total_);
    if (spent_ + amount > total_ + slack) throw InvalidArgument("budget overdrawn");
    spent_ = std::min(total_, spent_ + amount);
}

double log_loss(std::span<const double> predicted_probs, std::span<const int> labels) {
    if (predicted_probs.empty() || predicted_probs.size() != labels.size())
        throw InvalidArgument("log_loss: inputs must be nonempty and of equal length");
    double sum = 0.0;
    for (std::size_t k = 0; k < labels.size(); ++k) {
        const double p = std::clamp(predicted_probs[k], kProbabilityClip, 1.0 - kProbabilityClip);
        if (labels[k] == 1)
            sum -= std::log(p);
        else if (labels[k] == 0)
            sum -= std::log1p(-p);
        else
            throw InvalidArgument("log_loss: labels must be 0 or 1");
    }
    return sum / static_cast<double>(labels.size());
}

double multiclass_log_loss(std::span<const double> probs, std::size_t num_classes,
                           std::span<const int> labels) {
    if (labels.empty() || num_classes < 2 || probs.size() != labels.size() * num_classes)
        throw InvalidArgument("multiclass_log_loss: shape mismatch");
    double sum = 0.0;
    for (std::size_t k = 0; k < labels.size(); ++k) {
        if (labels[k] < 0 || static_cast<std::size_t>(labels[k]) >= num_classes)
            throw InvalidArgument("multiclass_log_loss: label out of range");
        const double p = std::clamp(probs[k * num_classes + labels[k]], kProbabilityClip, 1.0 - kProbabilityClip);
        sum -= std::log(p);
    }
    return sum / static_cast<double>(labels.size());
}

Unfairness unfairness(std::span<const double> per_slice_loss, double overall) {
    if (per_slice_loss.empty()) throw InvalidArgument("unfairness: empty loss list");
    Unfairness u;
    double sum = 0.0;
    for (double l : per_slice_loss) {
        const double dev = std::abs(l - overall);
        sum += dev;
        u.max_eer = std::max(u.max_eer, dev);
    }
    u.avg_eer = sum / static_cast<double>(per_slice_loss.size());
    return u;
}

double overall_loss(std::span<const double> per_slice_loss, std::span<const Count> validation_sizes) {
    if (per_slice_loss.empty() || per_slice_loss.size() != validation_sizes.size())
        throw InvalidArgument("overall_loss: inputs must be nonempty and of equal length");
    double weighted = 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < per_slice_loss.size(); ++i) {
        weighted += per_slice_loss[i] * static_cast<double>(validation_sizes[i]);
        total += static_cast<double>(validation_sizes[i]);
    }
    return weighted / total;
}

LossReport make_loss_report(std::vector<double> per_slice_loss, std::span<const Count> validation_sizes) {
    LossReport r;
    r.overall_loss = overall_loss(per_slice_loss, validation_sizes);
    const auto u = unfairness(per_slice_loss, r.overall_loss);
    r.avg_eer = u.avg_eer;
    r.max_eer = u.max_eer;
    r.per_slice_loss = std::move(per_slice_loss);
    return r;
}

double imbalance_ratio_of(std::span<const double> sizes) {
    if (sizes.empty()) throw InvalidArgument("imbalance ratio of an empty size list");
    const auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
    if (!(*lo > 0.0)) throw InvalidArgument("imbalance ratio undefined for a zero-sized slice");
    return *hi / *lo;
}

std::vector<double> normalize_costs(std::span<const double> avg_task_times) {
    if (avg_task_times.empty()) throw InvalidArgument("normalize_costs: empty input");
    for (double t : avg_task_times)
        if (!(t > 0.0) || !std::isfinite(t)) throw InvalidArgument("normalize_costs: times must be positive");
    const double fastest = *std::min_element(avg_task_times.begin(), avg_task_times.end());
    std::vector<double> out;
    out.reserve(avg_task_times.size());
    // Round at one decimal; the division result is snapped first so that
    // exact ratios like 135.2 / 67.6 do not land just under a .x5 boundary.
    for (double t : avg_task_times) {
        const double ratio = t / fastest;
        const double tenths = std::round(ratio * 10.0 * (1.0 + 1e-12));
        out.push_back(tenths / 10.0);
    }
    return out;
}

}  // namespace slicetuner
