#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "slicetuner/config.hpp"
#include "slicetuner/errors.hpp"

namespace slicetuner {

using json = nlohmann::json;

std::string method_name(Method m) {
    switch (m) {
        case Method::original:
            return "Original";
        case Method::uniform:
            return "Uniform";
        case Method::water_filling:
            return "WaterFilling";
        case Method::one_shot:
            return "OneShot";
        case Method::conservative:
            return "Conservative";
        case Method::moderate:
            return "Moderate";
        case Method::aggressive:
            return "Aggressive";
    }
    return "?";
}

Method parse_method(const std::string& text) {
    std::string key;
    for (char ch : text)
        if (std::isalnum(static_cast<unsigned char>(ch))) key += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    static const std::map<std::string, Method> names = {
        {"original", Method::original},         {"uniform", Method::uniform},
        {"waterfilling", Method::water_filling}, {"oneshot", Method::one_shot},
        {"conservative", Method::conservative}, {"moderate", Method::moderate},
        {"aggressive", Method::aggressive},
    };
    const auto it = names.find(key);
    if (it == names.end()) throw ConfigError("unknown method '" + text + "'");
    return it->second;
}

bool is_iterative(Method m) {
    return m == Method::conservative || m == Method::moderate || m == Method::aggressive;
}

void ExperimentConfig::validate() const {
    if (methods.empty()) throw ConfigError("config lists no methods");
    if (num_trials < 1) throw ConfigError("trials must be >= 1");
    if (budgets.empty()) throw ConfigError("config needs a budget");
    for (double b : budgets)
        if (!(b >= 0.0)) throw ConfigError("budgets must be >= 0");
    if (lambdas.empty()) throw ConfigError("config needs a lambda");
    for (double l : lambdas)
        if (!(l >= 0.0)) throw ConfigError("lambda must be >= 0");
    if (partition.n() == 0) throw ConfigError("config defines no slices");
    try {
        curves.validate();
        iterative.validate();
        LimitStrategy::moderate(moderate_step).validate();
        LimitStrategy::aggressive(aggressive_factor).validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
    if (oracle.kind == OracleSpec::Kind::synthetic) {
        if (oracle.truth.size() != partition.n()) throw ConfigError("oracle.a / oracle.b need one entry per slice");
    } else {
        oracle.endpoint.validate();
    }
}

FlatConfig parse_flat_config(const std::string& text) {
    FlatConfig out;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        // Strip comments outside of string literals.
        bool quoted = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) quoted = !quoted;
            if (line[i] == '#' && !quoted) {
                line.resize(i);
                break;
            }
        }
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
        auto key = line.substr(0, eq);
        key.erase(key.find_last_not_of(" \t") + 1);
        key.erase(0, key.find_first_not_of(" \t"));
        if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
        const auto value_text = line.substr(eq + 1);
        try {
            if (!out.emplace(key, json::parse(value_text)).second)
                throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
        } catch (const json::parse_error& e) {
            throw ConfigError("line " + std::to_string(lineno) + ": value of '" + key + "' is not valid: " + e.what());
        }
    }
    return out;
}

namespace {

class Reader {
public:
    explicit Reader(const FlatConfig& flat) : flat_(flat) {}

    bool has(const std::string& key) const { return flat_.count(key) != 0; }

    template <typename T>
    T get(const std::string& key) const {
        used_.insert(key);
        const auto it = flat_.find(key);
        if (it == flat_.end()) throw ConfigError("missing config key '" + key + "'");
        try {
            return it->second.get<T>();
        } catch (const json::exception& e) {
            throw ConfigError("config key '" + key + "' has the wrong type: " + e.what());
        }
    }

    template <typename T>
    T get_or(const std::string& key, T fallback) const {
        return has(key) ? get<T>(key) : fallback;
    }

    const json& raw(const std::string& key) const {
        used_.insert(key);
        return flat_.at(key);
    }

    std::vector<std::string> unused() const {
        std::vector<std::string> out;
        for (const auto& [k, v] : flat_)
            if (!used_.count(k)) out.push_back(k);
        return out;
    }

private:
    const FlatConfig& flat_;
    mutable std::set<std::string> used_;
};

template <typename T>
std::vector<T> per_slice(const Reader& r, const std::string& key, std::size_t n, std::optional<T> fallback) {
    if (!r.has(key)) {
        if (!fallback) throw ConfigError("missing config key '" + key + "'");
        return std::vector<T>(n, *fallback);
    }
    const auto& v = r.raw(key);
    if (!v.is_array()) {
        try {
            return std::vector<T>(n, v.get<T>());
        } catch (const json::exception&) {
            throw ConfigError("config key '" + key + "' has the wrong type");
        }
    }
    auto out = r.get<std::vector<T>>(key);
    if (out.size() != n) throw ConfigError("config key '" + key + "' needs " + std::to_string(n) + " entries");
    return out;
}

}  // namespace

ExperimentConfig config_from_flat(const FlatConfig& flat) {
    Reader r(flat);
    if (r.get<int>("schema_version") != 1) throw ConfigError("unsupported schema_version (expected 1)");

    ExperimentConfig cfg;
    cfg.scenario = r.get_or<std::string>("scenario", "default");

    const auto sizes = r.get<std::vector<Count>>("slices.sizes");
    const std::size_t n = sizes.size();
    if (n == 0) throw ConfigError("slices.sizes is empty");
    std::vector<std::string> ids;
    if (r.has("slices.ids")) {
        ids = r.get<std::vector<std::string>>("slices.ids");
        if (ids.size() != n) throw ConfigError("slices.ids and slices.sizes differ in length");
    } else {
        for (std::size_t i = 0; i < n; ++i) ids.push_back("s" + std::to_string(i));
    }
    std::vector<double> costs;
    if (r.has("slices.avg_task_times")) {
        if (r.has("slices.costs")) throw ConfigError("give either slices.costs or slices.avg_task_times, not both");
        const auto times = r.get<std::vector<double>>("slices.avg_task_times");
        if (times.size() != n) throw ConfigError("slices.avg_task_times needs one entry per slice");
        try {
            costs = normalize_costs(times);
        } catch (const InvalidArgument& e) {
            throw ConfigError(e.what());
        }
    } else {
        costs = per_slice<double>(r, "slices.costs", n, 1.0);
    }
    const auto validation = per_slice<Count>(r, "slices.validation_size", n, Count{500});
    std::vector<SliceState> slices;
    for (std::size_t i = 0; i < n; ++i) slices.push_back({ids[i], sizes[i], costs[i], validation[i]});
    try {
        cfg.partition = SlicePartition(std::move(slices));
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }

    const auto kind = r.get_or<std::string>("oracle.kind", "synthetic");
    if (kind == "synthetic") {
        cfg.oracle.kind = OracleSpec::Kind::synthetic;
        const auto a = per_slice<double>(r, "oracle.a", n, std::nullopt);
        const auto b = per_slice<double>(r, "oracle.b", n, std::nullopt);
        const auto c = per_slice<double>(r, "oracle.c", n, 0.0);
        for (std::size_t i = 0; i < n; ++i) cfg.oracle.truth.push_back({a[i], b[i], c[i]});
        cfg.oracle.noise_sigma = r.get_or<double>("oracle.noise_sigma", 0.0);
        cfg.oracle.influence_max = r.get_or<double>("oracle.influence_max", 0.2);
        if (r.has("oracle.influence")) {
            const auto rows = r.get<std::vector<std::vector<double>>>("oracle.influence");
            if (rows.size() != n) throw ConfigError("oracle.influence must be n x n");
            for (const auto& row : rows) {
                if (row.size() != n) throw ConfigError("oracle.influence must be n x n");
                cfg.oracle.influence.insert(cfg.oracle.influence.end(), row.begin(), row.end());
            }
        }
        if (r.has("oracle.pool_limit")) {
            const auto& v = r.raw("oracle.pool_limit");
            if (!v.is_array() || v.size() != n) throw ConfigError("oracle.pool_limit needs one entry per slice");
            for (const auto& e : v) {
                if (e.is_null())
                    cfg.oracle.pool_limit.emplace_back(std::nullopt);
                else if (e.is_number_integer())
                    cfg.oracle.pool_limit.emplace_back(e.get<Count>());
                else
                    throw ConfigError("oracle.pool_limit entries must be integers or null");
            }
        }
    } else if (kind == "trainer") {
        cfg.oracle.kind = OracleSpec::Kind::trainer;
        cfg.oracle.endpoint.command = r.get<std::vector<std::string>>("oracle.command");
        cfg.oracle.endpoint.protocol_version = r.get_or<std::string>("oracle.protocol", kProtocolVersion);
        cfg.oracle.endpoint.timeout_seconds = r.get_or<double>("oracle.timeout_seconds", 60.0);
    } else {
        throw ConfigError("oracle.kind must be 'synthetic' or 'trainer'");
    }

    for (const auto& m : r.get<std::vector<std::string>>("methods")) cfg.methods.push_back(parse_method(m));

    if (r.has("budgets"))
        cfg.budgets = r.get<std::vector<double>>("budgets");
    else
        cfg.budgets = {r.get<double>("budget")};
    if (r.has("lambdas"))
        cfg.lambdas = r.get<std::vector<double>>("lambdas");
    else
        cfg.lambdas = {r.get_or<double>("lambda", 1.0)};

    cfg.curves.num_subsets = r.get_or<int>("curves.num_subsets", 10);
    cfg.curves.num_repeats = r.get_or<int>("curves.num_repeats", 5);
    cfg.curves.min_fraction = r.get_or<double>("curves.min_fraction", 0.1);
    cfg.curves.fit_floor = r.get_or<bool>("curves.fit_floor", false);

    cfg.iterative.min_slice_size = r.get_or<Count>("iterative.min_slice_size", 1);
    cfg.iterative.initial_limit = r.get_or<double>("iterative.initial_limit", 1.0);
    cfg.iterative.max_iterations = r.get_or<int>("iterative.max_iterations", 50);
    cfg.moderate_step = r.get_or<double>("iterative.moderate_step", 1.0);
    cfg.aggressive_factor = r.get_or<double>("iterative.aggressive_factor", 2.0);

    cfg.num_trials = r.get_or<int>("trials", 10);
    cfg.master_seed = r.get_or<std::uint64_t>("seed", 0);
    cfg.output_dir = r.get_or<std::string>("output_dir", "slicetuner-out");
    cfg.parallel = r.get_or<bool>("parallel", true);
    if (r.has("compare.method")) cfg.compare_method = parse_method(r.get<std::string>("compare.method"));

    if (const auto extra = r.unused(); !extra.empty()) throw ConfigError("unknown config key '" + extra.front() + "'");
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return config_from_flat(parse_flat_config(ss.str()));
}

}  // namespace slicetuner
