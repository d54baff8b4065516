#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include "brql/baselines.hpp"
#include "brql/environments.hpp"
#include "brql/learner.hpp"
#include "brql/risk.hpp"

namespace brql {

/// Every violation found in a configuration, reported together.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(std::vector<std::string> violations)
        : std::runtime_error(join(violations)), violations_(std::move(violations)) {}

    const std::vector<std::string>& violations() const { return violations_; }

private:
    static std::string join(const std::vector<std::string>& v) {
        std::string out = "invalid configuration:";
        for (const auto& s : v) out += "\n  - " + s;
        return out;
    }
    std::vector<std::string> violations_;
};

enum class EnvironmentKind { CoinToss, Inventory, InventoryUniform, InventoryStateDependent };

inline std::string_view to_string(EnvironmentKind k) {
    switch (k) {
    case EnvironmentKind::CoinToss: return "coin-toss";
    case EnvironmentKind::Inventory: return "inventory";
    case EnvironmentKind::InventoryUniform: return "inventory-I";
    case EnvironmentKind::InventoryStateDependent: return "inventory-II";
    }
    return "";
}

struct EnvironmentSpec {
    EnvironmentKind kind = EnvironmentKind::CoinToss;
    double discount = 0.95;
    // coin toss
    std::size_t coins = 10;
    std::vector<double> head_probs; // empty: every coin fair
    // inventory
    std::size_t capacity = 10;
    InventoryCosts costs;
    double demand_mean = 3.0;  // "inventory": truncated Poisson mean
    double demand_base = 2.0;  // "inventory-II": mean = base + slope * s+ / K
    double demand_slope = 2.0;

    bool is_inventory() const { return kind != EnvironmentKind::CoinToss; }

    std::vector<double> resolved_head_probs() const {
        return head_probs.empty() ? std::vector<double>(coins, 0.5) : head_probs;
    }

    MdpModel build() const {
        switch (kind) {
        case EnvironmentKind::CoinToss: return coin_toss_env(coins, resolved_head_probs(), discount);
        case EnvironmentKind::Inventory:
            return inventory_env(capacity, costs, demand::poisson(demand_mean, capacity), discount);
        case EnvironmentKind::InventoryUniform:
            return inventory_env(capacity, costs, demand::uniform(capacity), discount);
        case EnvironmentKind::InventoryStateDependent:
            return inventory_env(capacity, costs,
                                 demand::state_dependent(capacity, demand_base, demand_slope), discount);
        }
        throw std::logic_error("unknown environment kind");
    }

    /// Same inventory with stationary truncated-Poisson demand of the given mean.
    MdpModel with_demand_mean(double mean) const {
        if (!is_inventory()) throw std::invalid_argument("demand shifts need an inventory environment");
        return inventory_env(capacity, costs, demand::poisson(mean, capacity), discount);
    }
};

enum class AlgorithmKind { BrqlVaR, BrqlCVaR, BrqlMean, DrqlKL, DrqlWass };

struct AlgorithmSpec {
    AlgorithmKind kind = AlgorithmKind::BrqlMean;
    double alpha = 0.2;  // BRQL-VaR / BRQL-CVaR
    double radius = 0.1; // DRQL

    bool bayesian() const {
        return kind == AlgorithmKind::BrqlVaR || kind == AlgorithmKind::BrqlCVaR ||
               kind == AlgorithmKind::BrqlMean;
    }

    RiskFunctional risk() const {
        switch (kind) {
        case AlgorithmKind::BrqlVaR: return RiskFunctional::var(alpha);
        case AlgorithmKind::BrqlCVaR: return RiskFunctional::cvar(alpha);
        default: return RiskFunctional::mean();
        }
    }

    AmbiguityKind ambiguity() const {
        return kind == AlgorithmKind::DrqlKL ? AmbiguityKind::KL : AmbiguityKind::Wasserstein;
    }

    std::string kind_name() const {
        switch (kind) {
        case AlgorithmKind::BrqlVaR: return "brql-var";
        case AlgorithmKind::BrqlCVaR: return "brql-cvar";
        case AlgorithmKind::BrqlMean: return "brql-mean";
        case AlgorithmKind::DrqlKL: return "drql-kl";
        case AlgorithmKind::DrqlWass: return "drql-wass";
        }
        return "";
    }

    /// Display name, also the `algorithm` column of the CSV outputs.
    std::string label() const {
        switch (kind) {
        case AlgorithmKind::BrqlVaR: return "BRQL-VaR";
        case AlgorithmKind::BrqlCVaR: return "BRQL-CVaR";
        case AlgorithmKind::BrqlMean: return "BRQL-mean";
        case AlgorithmKind::DrqlKL: return "DRQL-KL";
        case AlgorithmKind::DrqlWass: return "DRQL-Wass";
        }
        return "";
    }
};

enum class EvaluationMode { Streaming, FixedData };
enum class BehaviorKind { Trajectory, Covering };

struct ExperimentConfig {
    std::string name = "experiment";
    EvaluationMode mode = EvaluationMode::Streaming;
    std::size_t replications = 20;
    std::uint64_t seed = 0;
    std::size_t threads = 1;

    EnvironmentSpec environment;
    std::vector<AlgorithmSpec> algorithms;

    std::size_t horizon = 200;
    std::size_t batch_size = 1;
    std::size_t sweeps = 1;
    std::size_t initial_batch = 10;
    std::size_t min_sample_size = 10;
    std::optional<std::size_t> sample_size_cap;
    double rate_exponent = 0.7;
    double prior_concentration = 1.0; // every prior count; 1 is the uniform prior
    BehaviorKind behavior = BehaviorKind::Trajectory;

    // fixed-data mode
    std::vector<double> demand_means;
    std::size_t saa_samples = 2000;

    DirichletPosterior prior(const MdpModel& model) const {
        return DirichletPosterior::uniform(model.layout(), prior_concentration);
    }

    LearnerConfig learner_config() const {
        LearnerConfig c;
        c.schedule = StageSchedule::constant(horizon, batch_size, sweeps, initial_batch);
        c.rate = RateSchedule(rate_exponent);
        c.min_sample_size = min_sample_size;
        c.sample_size_cap = sample_size_cap;
        return c;
    }

    /// All violations; empty when the configuration is usable.
    std::vector<std::string> validate() const {
        std::vector<std::string> v;
        if (replications < 1) v.push_back("replications must be at least 1");
        if (threads < 1) v.push_back("threads must be at least 1");
        if (!(environment.discount > 0.0 && environment.discount < 1.0))
            v.push_back("environment.discount must lie in (0,1)");
        if (environment.kind == EnvironmentKind::CoinToss) {
            if (environment.coins < 1) v.push_back("environment.coins must be at least 1");
            if (!environment.head_probs.empty() && environment.head_probs.size() != environment.coins)
                v.push_back("environment.head_probs needs one entry per coin");
            for (double p : environment.head_probs)
                if (!(p > 0.0 && p < 1.0)) v.push_back("environment.head_probs entries must lie in (0,1)");
        } else {
            if (environment.capacity < 1) v.push_back("environment.capacity must be at least 1");
            if (!(environment.demand_mean > 0.0)) v.push_back("environment.demand_mean must be positive");
            if (!(environment.demand_base > 0.0) || environment.demand_slope < 0.0)
                v.push_back("environment.demand_base must be positive and demand_slope nonnegative");
        }
        if (algorithms.empty()) v.push_back("at least one [[algorithms]] entry is required");
        for (std::size_t i = 0; i < algorithms.size(); ++i) {
            const auto& a = algorithms[i];
            const auto where = "algorithms[" + std::to_string(i) + "]";
            if ((a.kind == AlgorithmKind::BrqlVaR || a.kind == AlgorithmKind::BrqlCVaR) &&
                !(a.alpha > 0.0 && a.alpha < 1.0))
                v.push_back(where + ".alpha must lie in (0,1)");
            if (!a.bayesian() && !(a.radius >= 0.0)) v.push_back(where + ".radius must be nonnegative");
        }
        if (min_sample_size < 1) v.push_back("schedule.min_sample_size must be at least 1");
        if (sample_size_cap && *sample_size_cap < min_sample_size)
            v.push_back("schedule.sample_size_cap must be at least min_sample_size");
        if (!(rate_exponent > 0.0)) v.push_back("rate.exponent must be positive");
        if (!(prior_concentration > 0.0) || !std::isfinite(prior_concentration))
            v.push_back("prior.concentration must be positive and finite");
        if (mode == EvaluationMode::Streaming) {
            if (horizon < 1) v.push_back("schedule.horizon must be at least 1");
            if (sweeps < 1) v.push_back("schedule.sweeps must be at least 1");
        } else {
            if (!environment.is_inventory()) v.push_back("fixed-data mode needs an inventory environment");
            if (demand_means.empty()) v.push_back("fixed.demand_means must be nonempty");
            for (double m : demand_means)
                if (!(m > 0.0)) v.push_back("fixed.demand_means entries must be positive");
            if (saa_samples < 1) v.push_back("fixed.saa_samples must be at least 1");
        }
        return v;
    }
};

namespace detail {

class TomlReader {
public:
    explicit TomlReader(std::vector<std::string>& errors) : errors_(errors) {}

    template <class T>
    void read(const toml::table& tbl, std::string_view section, std::string_view key, T& out) {
        const auto* node = tbl.get(key);
        if (!node) return;
        auto value = node->value<T>();
        if (!value) {
            errors_.push_back(path(section, key) + " has the wrong type");
            return;
        }
        out = *value;
    }

    void read_count(const toml::table& tbl, std::string_view section, std::string_view key,
                    std::size_t& out) {
        std::int64_t v = static_cast<std::int64_t>(out);
        read(tbl, section, key, v);
        if (v < 0) {
            errors_.push_back(path(section, key) + " must be nonnegative");
            return;
        }
        out = static_cast<std::size_t>(v);
    }

    void read_list(const toml::table& tbl, std::string_view section, std::string_view key,
                   std::vector<double>& out) {
        const auto* node = tbl.get(key);
        if (!node) return;
        const auto* arr = node->as_array();
        if (!arr) {
            errors_.push_back(path(section, key) + " must be an array of numbers");
            return;
        }
        out.clear();
        for (const auto& item : *arr) {
            auto v = item.value<double>();
            if (!v) {
                errors_.push_back(path(section, key) + " must contain only numbers");
                return;
            }
            out.push_back(*v);
        }
    }

    void check_keys(const toml::table& tbl, std::string_view section,
                    std::initializer_list<std::string_view> allowed) {
        std::set<std::string_view> ok(allowed);
        for (const auto& [k, _] : tbl)
            if (!ok.count(k.str())) errors_.push_back("unknown key " + path(section, k.str()));
    }

    static std::string path(std::string_view section, std::string_view key) {
        return section.empty() ? std::string(key) : std::string(section) + "." + std::string(key);
    }

private:
    std::vector<std::string>& errors_;
};

} // namespace detail

/// Parses and validates a TOML experiment description.
inline ExperimentConfig parse_config(std::string_view text, std::string_view source = "config") {
    toml::table root;
    try {
        root = toml::parse(text, source);
    } catch (const toml::parse_error& e) {
        std::ostringstream os;
        os << source << ':' << e.source().begin.line << ':' << e.source().begin.column << ": "
           << e.description();
        throw ConfigError({os.str()});
    }

    std::vector<std::string> errors;
    detail::TomlReader r(errors);
    ExperimentConfig c;
    r.check_keys(root, "", {"name", "mode", "replications", "seed", "threads", "environment",
                            "schedule", "rate", "observations", "prior", "algorithms", "fixed"});
    r.read(root, "", "name", c.name);
    std::string mode = "streaming";
    r.read(root, "", "mode", mode);
    if (mode == "streaming")
        c.mode = EvaluationMode::Streaming;
    else if (mode == "fixed")
        c.mode = EvaluationMode::FixedData;
    else
        errors.push_back("mode must be \"streaming\" or \"fixed\"");
    r.read_count(root, "", "replications", c.replications);
    std::int64_t seed = 0;
    r.read(root, "", "seed", seed);
    c.seed = static_cast<std::uint64_t>(seed);
    r.read_count(root, "", "threads", c.threads);

    if (const auto* env = root["environment"].as_table()) {
        r.check_keys(*env, "environment",
                     {"kind", "discount", "coins", "head_probs", "capacity", "order_cost", "profit",
                      "penalty", "holding", "demand_mean", "demand_base", "demand_slope"});
        std::string kind = "coin-toss";
        r.read(*env, "environment", "kind", kind);
        if (kind == "coin-toss")
            c.environment.kind = EnvironmentKind::CoinToss;
        else if (kind == "inventory")
            c.environment.kind = EnvironmentKind::Inventory;
        else if (kind == "inventory-I")
            c.environment.kind = EnvironmentKind::InventoryUniform;
        else if (kind == "inventory-II")
            c.environment.kind = EnvironmentKind::InventoryStateDependent;
        else
            errors.push_back("environment.kind \"" + kind +
                             "\" is not coin-toss, inventory, inventory-I or inventory-II");
        auto& e = c.environment;
        r.read(*env, "environment", "discount", e.discount);
        r.read_count(*env, "environment", "coins", e.coins);
        r.read_list(*env, "environment", "head_probs", e.head_probs);
        r.read_count(*env, "environment", "capacity", e.capacity);
        r.read(*env, "environment", "order_cost", e.costs.order_cost);
        r.read(*env, "environment", "profit", e.costs.profit);
        r.read(*env, "environment", "penalty", e.costs.penalty);
        r.read(*env, "environment", "holding", e.costs.holding);
        r.read(*env, "environment", "demand_mean", e.demand_mean);
        r.read(*env, "environment", "demand_base", e.demand_base);
        r.read(*env, "environment", "demand_slope", e.demand_slope);
    } else {
        errors.push_back("missing [environment] table");
    }

    if (const auto* s = root["schedule"].as_table()) {
        r.check_keys(*s, "schedule", {"horizon", "batch_size", "sweeps", "initial_batch",
                                      "min_sample_size", "sample_size_cap"});
        r.read_count(*s, "schedule", "horizon", c.horizon);
        r.read_count(*s, "schedule", "batch_size", c.batch_size);
        r.read_count(*s, "schedule", "sweeps", c.sweeps);
        r.read_count(*s, "schedule", "initial_batch", c.initial_batch);
        r.read_count(*s, "schedule", "min_sample_size", c.min_sample_size);
        std::size_t cap = 0;
        r.read_count(*s, "schedule", "sample_size_cap", cap);
        if (cap > 0) c.sample_size_cap = cap;
    }

    if (const auto* rate = root["rate"].as_table()) {
        r.check_keys(*rate, "rate", {"family", "exponent"});
        std::string family = "power";
        r.read(*rate, "rate", "family", family);
        if (family != "power") errors.push_back("rate.family must be \"power\"");
        r.read(*rate, "rate", "exponent", c.rate_exponent);
    }

    if (const auto* obs = root["observations"].as_table()) {
        r.check_keys(*obs, "observations", {"behavior"});
        std::string behavior = "trajectory";
        r.read(*obs, "observations", "behavior", behavior);
        if (behavior == "trajectory")
            c.behavior = BehaviorKind::Trajectory;
        else if (behavior == "covering")
            c.behavior = BehaviorKind::Covering;
        else
            errors.push_back("observations.behavior must be \"trajectory\" or \"covering\"");
    }

    if (const auto* prior = root["prior"].as_table()) {
        r.check_keys(*prior, "prior", {"concentration"});
        r.read(*prior, "prior", "concentration", c.prior_concentration);
    }

    if (const auto* algs = root["algorithms"].as_array()) {
        for (std::size_t i = 0; i < algs->size(); ++i) {
            const auto where = "algorithms[" + std::to_string(i) + "]";
            const auto* t = (*algs)[i].as_table();
            if (!t) {
                errors.push_back(where + " must be a table");
                continue;
            }
            r.check_keys(*t, where, {"kind", "alpha", "radius"});
            AlgorithmSpec a;
            std::string kind;
            r.read(*t, where, "kind", kind);
            if (kind == "brql-var")
                a.kind = AlgorithmKind::BrqlVaR;
            else if (kind == "brql-cvar")
                a.kind = AlgorithmKind::BrqlCVaR;
            else if (kind == "brql-mean")
                a.kind = AlgorithmKind::BrqlMean;
            else if (kind == "drql-kl")
                a.kind = AlgorithmKind::DrqlKL;
            else if (kind == "drql-wass")
                a.kind = AlgorithmKind::DrqlWass;
            else
                errors.push_back(where + ".kind \"" + kind +
                                 "\" is not brql-var, brql-cvar, brql-mean, drql-kl or drql-wass");
            r.read(*t, where, "alpha", a.alpha);
            r.read(*t, where, "radius", a.radius);
            c.algorithms.push_back(a);
        }
    } else if (root.contains("algorithms")) {
        errors.push_back("algorithms must be an array of tables ([[algorithms]])");
    }

    if (const auto* f = root["fixed"].as_table()) {
        r.check_keys(*f, "fixed", {"demand_means", "saa_samples"});
        r.read_list(*f, "fixed", "demand_means", c.demand_means);
        r.read_count(*f, "fixed", "saa_samples", c.saa_samples);
    }

    for (auto& v : c.validate()) errors.push_back(std::move(v));
    if (!errors.empty()) throw ConfigError(std::move(errors));
    return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError({"cannot read config file " + path.string()});
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.string());
}

/// Resolved configuration as TOML; parsing it back yields the same config.
inline std::string to_toml(const ExperimentConfig& c) {
    toml::table root;
    root.insert("name", c.name);
    root.insert("mode", c.mode == EvaluationMode::Streaming ? "streaming" : "fixed");
    root.insert("replications", static_cast<std::int64_t>(c.replications));
    root.insert("seed", static_cast<std::int64_t>(c.seed));
    root.insert("threads", static_cast<std::int64_t>(c.threads));

    toml::table env;
    const auto& e = c.environment;
    env.insert("kind", std::string(to_string(e.kind)));
    env.insert("discount", e.discount);
    if (e.kind == EnvironmentKind::CoinToss) {
        env.insert("coins", static_cast<std::int64_t>(e.coins));
        toml::array probs;
        for (double p : e.resolved_head_probs()) probs.push_back(p);
        env.insert("head_probs", probs);
    } else {
        env.insert("capacity", static_cast<std::int64_t>(e.capacity));
        env.insert("order_cost", e.costs.order_cost);
        env.insert("profit", e.costs.profit);
        env.insert("penalty", e.costs.penalty);
        env.insert("holding", e.costs.holding);
        env.insert("demand_mean", e.demand_mean);
        env.insert("demand_base", e.demand_base);
        env.insert("demand_slope", e.demand_slope);
    }
    root.insert("environment", env);

    toml::table sched;
    sched.insert("horizon", static_cast<std::int64_t>(c.horizon));
    sched.insert("batch_size", static_cast<std::int64_t>(c.batch_size));
    sched.insert("sweeps", static_cast<std::int64_t>(c.sweeps));
    sched.insert("initial_batch", static_cast<std::int64_t>(c.initial_batch));
    sched.insert("min_sample_size", static_cast<std::int64_t>(c.min_sample_size));
    sched.insert("sample_size_cap", static_cast<std::int64_t>(c.sample_size_cap.value_or(0)));
    root.insert("schedule", sched);

    toml::table rate;
    rate.insert("family", "power");
    rate.insert("exponent", c.rate_exponent);
    root.insert("rate", rate);

    toml::table obs;
    obs.insert("behavior", c.behavior == BehaviorKind::Trajectory ? "trajectory" : "covering");
    root.insert("observations", obs);

    toml::table prior;
    prior.insert("concentration", c.prior_concentration);
    root.insert("prior", prior);

    toml::array algs;
    for (const auto& a : c.algorithms) {
        toml::table t;
        t.insert("kind", a.kind_name());
        if (a.kind == AlgorithmKind::BrqlVaR || a.kind == AlgorithmKind::BrqlCVaR)
            t.insert("alpha", a.alpha);
        if (!a.bayesian()) t.insert("radius", a.radius);
        algs.push_back(t);
    }
    root.insert("algorithms", algs);

    if (c.mode == EvaluationMode::FixedData) {
        toml::table f;
        toml::array means;
        for (double m : c.demand_means) means.push_back(m);
        f.insert("demand_means", means);
        f.insert("saa_samples", static_cast<std::int64_t>(c.saa_samples));
        root.insert("fixed", f);
    }

    std::ostringstream os;
    os << root << '\n';
    return os.str();
}

} // namespace brql
