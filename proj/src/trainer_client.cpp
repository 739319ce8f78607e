#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <mutex>

#include "slicetuner/errors.hpp"
#include "slicetuner/trainer.hpp"

namespace slicetuner {

void TrainerEndpoint::validate() const {
    if (command.empty() || command.front().empty()) throw ConfigError("trainer endpoint needs a command");
    if (protocol_version != kProtocolVersion)
        throw ConfigError("trainer protocol version must be '" + std::string(kProtocolVersion) + "', got '" +
                          protocol_version + "'");
    if (!(timeout_seconds > 0.0)) throw ConfigError("trainer timeout must be > 0 seconds");
}

namespace protocol {

namespace {

template <typename T>
json slice_map(const std::vector<std::string>& ids, const std::vector<T>& values) {
    json m = json::object();
    for (std::size_t i = 0; i < ids.size(); ++i) m[ids[i]] = values.at(i);
    return m;
}

}  // namespace

std::string hello(const std::string& version) { return json{{"type", "hello"}, {"version", version}}.dump(); }

std::string eval_fractions(std::uint64_t id, const std::vector<std::string>& ids, const std::vector<double>& fractions,
                           std::uint64_t seed) {
    return json{{"type", "eval"}, {"id", id}, {"fractions", slice_map(ids, fractions)}, {"seed", seed}}.dump();
}

std::string eval_sizes(std::uint64_t id, const std::vector<std::string>& ids, const std::vector<Count>& sizes,
                       std::uint64_t seed) {
    return json{{"type", "eval"}, {"id", id}, {"sizes", slice_map(ids, sizes)}, {"seed", seed}}.dump();
}

std::string acquire(std::uint64_t id, const std::vector<std::string>& ids, const std::vector<Count>& counts) {
    return json{{"type", "acquire"}, {"id", id}, {"counts", slice_map(ids, counts)}}.dump();
}

json parse_response(const std::string& line, const std::string& expected_type,
                    std::optional<std::uint64_t> expected_id) {
    json msg;
    try {
        msg = json::parse(line);
    } catch (const json::parse_error& e) {
        throw ProtocolError(std::string("trainer sent invalid JSON: ") + e.what(), line);
    }
    if (!msg.is_object() || !msg.contains("type") || !msg["type"].is_string())
        throw ProtocolError("trainer message lacks a string 'type' field", line);
    const auto type = msg["type"].get<std::string>();
    if (expected_id) {
        if (!msg.contains("id") || !msg["id"].is_number_unsigned())
            throw ProtocolError("trainer response lacks an integer 'id'", line);
        const auto id = msg["id"].get<std::uint64_t>();
        if (id != *expected_id)
            throw ProtocolError("trainer response id " + std::to_string(id) + " does not match request id " +
                                    std::to_string(*expected_id),
                                line);
    }
    if (type == "error") {
        const auto code = msg.value("code", std::string("unknown"));
        const auto message = msg.value("message", std::string());
        throw OracleError("trainer reported error '" + code + "': " + message);
    }
    if (type != expected_type)
        throw ProtocolError("expected a '" + expected_type + "' message, got '" + type + "'", line);
    return msg;
}

std::vector<double> losses_from(const json& msg, const std::vector<std::string>& ids, const std::string& raw) {
    if (!msg.contains("losses") || !msg["losses"].is_object()) throw ProtocolError("losses message lacks a map", raw);
    const auto& m = msg["losses"];
    std::vector<double> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
        if (!m.contains(id) || !m[id].is_number()) throw ProtocolError("losses message lacks slice '" + id + "'", raw);
        const double v = m[id].get<double>();
        if (!std::isfinite(v) || v < 0.0) throw ProtocolError("loss for slice '" + id + "' is not a finite value >= 0", raw);
        out.push_back(v);
    }
    return out;
}

AcquireResult ack_from(const json& msg, const std::vector<std::string>& ids, const std::vector<Count>& requested,
                       const std::string& raw) {
    if (!msg.contains("realized") || !msg["realized"].is_object()) throw ProtocolError("ack message lacks a map", raw);
    const auto& m = msg["realized"];
    AcquireResult r;
    r.realized.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto& id = ids[i];
        if (!m.contains(id) || !m[id].is_number_integer())
            throw ProtocolError("ack message lacks slice '" + id + "'", raw);
        const auto v = m[id].get<Count>();
        if (v < 0 || v > requested[i]) throw ProtocolError("ack for slice '" + id + "' is out of range", raw);
        if (v < requested[i]) r.pool_limited = true;
        r.realized.push_back(v);
    }
    if (msg.contains("clamped") && msg["clamped"].is_boolean() && msg["clamped"].get<bool>()) r.pool_limited = true;
    return r;
}

}  // namespace protocol

namespace {

std::once_flag sigpipe_once;

}  // namespace

TrainerOracle::TrainerOracle(TrainerEndpoint endpoint, std::vector<std::string> slice_ids)
    : endpoint_(std::move(endpoint)), ids_(std::move(slice_ids)) {
    endpoint_.validate();
    if (ids_.empty()) throw ConfigError("trainer oracle needs at least one slice id");
    launch();
    send(protocol::hello(endpoint_.protocol_version));
    const auto line = receive();
    const auto msg = protocol::parse_response(line, "hello", std::nullopt);
    if (msg.value("version", std::string()) != endpoint_.protocol_version)
        fail_closed("trainer speaks protocol '" + msg.value("version", std::string()) + "'");
}

TrainerOracle::~TrainerOracle() {
    if (to_child_ >= 0) ::close(to_child_);
    if (from_child_ >= 0) ::close(from_child_);
    if (child_ > 0) {
        // Closing stdin asks the trainer to exit; give it a moment, then kill it.
        for (int i = 0; i < 50; ++i) {
            if (::waitpid(child_, nullptr, WNOHANG) == child_) return;
            ::usleep(10000);
        }
        ::kill(child_, SIGKILL);
        ::waitpid(child_, nullptr, 0);
    }
}

void TrainerOracle::launch() {
    std::call_once(sigpipe_once, [] { ::signal(SIGPIPE, SIG_IGN); });
    int in_pipe[2];
    int out_pipe[2];
    if (::pipe2(in_pipe, O_CLOEXEC) != 0 || ::pipe2(out_pipe, O_CLOEXEC) != 0)
        throw OracleError(std::string("cannot create trainer pipes: ") + std::strerror(errno));

    std::vector<char*> argv;
    for (auto& a : endpoint_.command) argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);

    const pid_t pid = ::fork();
    if (pid < 0) throw OracleError(std::string("cannot fork trainer: ") + std::strerror(errno));
    if (pid == 0) {
        ::dup2(in_pipe[0], STDIN_FILENO);
        ::dup2(out_pipe[1], STDOUT_FILENO);
        ::execvp(argv[0], argv.data());
        ::_exit(127);
    }
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    child_ = pid;
    to_child_ = in_pipe[1];
    from_child_ = out_pipe[0];
}

void TrainerOracle::fail_closed(const std::string& what) {
    if (child_ > 0) {
        ::kill(child_, SIGKILL);
        ::waitpid(child_, nullptr, 0);
        child_ = -1;
    }
    throw OracleError(what);
}

void TrainerOracle::send(const std::string& line) {
    if (to_child_ < 0) throw TrainerCrashed("trainer is not running");
    const std::string framed = line + "\n";
    std::size_t off = 0;
    while (off < framed.size()) {
        const auto w = ::write(to_child_, framed.data() + off, framed.size() - off);
        if (w < 0) {
            if (errno == EINTR) continue;
            throw TrainerCrashed(std::string("cannot write to trainer: ") + std::strerror(errno));
        }
        off += static_cast<std::size_t>(w);
    }
}

std::string TrainerOracle::receive() {
    using clock = std::chrono::steady_clock;
    const auto deadline = clock::now() + std::chrono::duration<double>(endpoint_.timeout_seconds);
    while (true) {
        if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
            auto line = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            if (line.empty()) continue;
            return line;
        }
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - clock::now()).count();
        if (left <= 0) {
            if (child_ > 0) {
                ::kill(child_, SIGKILL);
                ::waitpid(child_, nullptr, 0);
                child_ = -1;
            }
            throw TrainerTimeout("trainer did not answer within " + std::to_string(endpoint_.timeout_seconds) + " s");
        }
        pollfd p{from_child_, POLLIN, 0};
        const int ready = ::poll(&p, 1, static_cast<int>(std::min<long long>(left, 1000)));
        if (ready < 0 && errno != EINTR) throw OracleError(std::string("poll failed: ") + std::strerror(errno));
        if (ready <= 0) continue;
        char chunk[4096];
        const auto got = ::read(from_child_, chunk, sizeof chunk);
        if (got > 0) {
            buffer_.append(chunk, static_cast<std::size_t>(got));
            continue;
        }
        if (got < 0 && errno == EINTR) continue;
        // EOF: the trainer went away.
        int status = 0;
        std::string why = "trainer exited";
        if (child_ > 0 && ::waitpid(child_, &status, 0) == child_) {
            if (WIFEXITED(status)) why += " with status " + std::to_string(WEXITSTATUS(status));
            if (WIFSIGNALED(status)) why += " on signal " + std::to_string(WTERMSIG(status));
            child_ = -1;
        }
        throw TrainerCrashed(why);
    }
}

std::vector<double> TrainerOracle::evaluate(const EvalQuery& query) {
    const auto id = next_id_++;
    if (query.sizes) {
        if (query.sizes->size() != ids_.size()) throw InvalidArgument("trainer eval: wrong slice count");
        send(protocol::eval_sizes(id, ids_, *query.sizes, query.seed));
    } else if (query.fractions) {
        if (query.fractions->size() != ids_.size()) throw InvalidArgument("trainer eval: wrong slice count");
        send(protocol::eval_fractions(id, ids_, *query.fractions, query.seed));
    } else {
        throw InvalidArgument("trainer eval: query carries neither sizes nor fractions");
    }
    const auto line = receive();
    const auto msg = protocol::parse_response(line, "losses", id);
    return protocol::losses_from(msg, ids_, line);
}

AcquireResult TrainerOracle::acquire(std::span<const Count> counts) {
    if (counts.size() != ids_.size()) throw InvalidArgument("trainer acquire: wrong slice count");
    std::vector<Count> requested(counts.begin(), counts.end());
    const auto id = next_id_++;
    send(protocol::acquire(id, ids_, requested));
    const auto line = receive();
    const auto msg = protocol::parse_response(line, "ack", id);
    return protocol::ack_from(msg, ids_, requested, line);
}

}  // namespace slicetuner
