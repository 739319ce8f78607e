#pragma once

#include <sys/types.h>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "slicetuner/oracle.hpp"
#include <json.hpp>

namespace slicetuner {

inline constexpr const char* kProtocolVersion = "slice-tuner/1";

struct TrainerEndpoint {
    std::vector<std::string> command;  // argv; command[0] is looked up on PATH
    std::string protocol_version = kProtocolVersion;
    double timeout_seconds = 60.0;

    void validate() const;
};

// Message builders and parsers for the newline-delimited JSON trainer protocol.
namespace protocol {

using json = nlohmann::json;

std::string hello(const std::string& version);
std::string eval_fractions(std::uint64_t id, const std::vector<std::string>& ids, const std::vector<double>& fractions,
                           std::uint64_t seed);
std::string eval_sizes(std::uint64_t id, const std::vector<std::string>& ids, const std::vector<Count>& sizes,
                       std::uint64_t seed);
std::string acquire(std::uint64_t id, const std::vector<std::string>& ids, const std::vector<Count>& counts);

// Parses one response line and checks its type and id. Throws ProtocolError,
// or OracleError for an "error" message.
json parse_response(const std::string& line, const std::string& expected_type, std::optional<std::uint64_t> expected_id);

std::vector<double> losses_from(const json& msg, const std::vector<std::string>& ids, const std::string& raw);
AcquireResult ack_from(const json& msg, const std::vector<std::string>& ids, const std::vector<Count>& requested,
                       const std::string& raw);

}  // namespace protocol

// Child process speaking the protocol on its stdin/stdout. One request in flight at a time.
class TrainerOracle final : public LossOracle {
public:
    TrainerOracle(TrainerEndpoint endpoint, std::vector<std::string> slice_ids);
    ~TrainerOracle() override;

    TrainerOracle(const TrainerOracle&) = delete;
    TrainerOracle& operator=(const TrainerOracle&) = delete;

    std::size_t num_slices() const override { return ids_.size(); }
    OracleCapabilities capabilities() const override { return {false, true}; }
    std::vector<double> evaluate(const EvalQuery& query) override;
    AcquireResult acquire(std::span<const Count> counts) override;

    std::uint64_t requests_sent() const noexcept { return next_id_ - 1; }

private:
    void launch();
    void send(const std::string& line);
    std::string receive();
    [[noreturn]] void fail_closed(const std::string& what);

    TrainerEndpoint endpoint_;
    std::vector<std::string> ids_;
    pid_t child_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    std::string buffer_;
    std::uint64_t next_id_ = 1;
};

}  // namespace slicetuner
