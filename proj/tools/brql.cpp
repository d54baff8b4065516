// brql: experiment runner and oracle calculator.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "brql/brql.hpp"

namespace fs = std::filesystem;

namespace {

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> replications;
    std::optional<std::size_t> threads;
};

brql::ExperimentConfig resolve(const std::string& path, const Overrides& o) {
    auto config = brql::load_config(path);
    if (o.seed) config.seed = *o.seed;
    if (o.replications) config.replications = *o.replications;
    if (o.threads) config.threads = *o.threads;
    if (auto v = config.validate(); !v.empty()) throw brql::ConfigError(std::move(v));
    return config;
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    return out;
}

void run_streaming(const brql::ExperimentConfig& config, const fs::path& out) {
    const auto result = brql::run_experiment(config);
    brql::emit_outputs(result, out, brql::config_echo(config), config.name);
    std::cout << "wrote " << (out / "curves.csv").string() << '\n';
}

void run_fixed(const brql::ExperimentConfig& config, const fs::path& out) {
    const auto result = brql::run_fixed_data_experiment(config);
    brql::emit_outputs(result, out, brql::config_echo(config), config.name);
    std::cout << "wrote " << (out / "curves.csv").string() << '\n';
}

// Oracle Q for the true model and for each Bayesian algorithm at the
// posterior built from the first n(0) observations of replication 0.
void solve(const brql::ExperimentConfig& config, const fs::path& out) {
    fs::create_directories(out);
    const auto model = config.environment.build();
    const double tol = brql::default_oracle_tolerance(model);
    {
        auto os = open_out(out / "kernel.txt");
        brql::write_kernel_dump(os, model);
    }
    {
        auto os = open_out(out / "q_true.txt");
        brql::write_q_dump(os, brql::value_iteration(model, tol));
    }
    const brql::RngKey root(config.seed);
    brql::Rng rng = root.child("observations").stream();
    std::vector<brql::ObservationTriple> data;
    if (config.behavior == brql::BehaviorKind::Covering)
        data = brql::CoveringStream(model, std::move(rng)).next_batch(config.initial_batch);
    else
        data = brql::TrajectoryStream(model, std::move(rng)).next_batch(config.initial_batch);
    auto posterior = config.prior(model);
    posterior.update(data);
    {
        auto os = open_out(out / "posterior.txt");
        brql::write_posterior(os, posterior);
    }
    const brql::SaaSampleSet set(brql::LimitingPosteriorSpec::all_frozen(posterior), config.saa_samples,
                                 root.child("saa"));
    for (const auto& alg : config.algorithms) {
        if (!alg.bayesian()) continue;
        const auto q = brql::brmdp_fixed_point(set, model, alg.risk(), tol);
        auto os = open_out(out / ("q_" + alg.kind_name() + ".txt"));
        brql::write_q_dump(os, q);
        std::cout << alg.label() << ": deployed value "
                  << brql::deployed_value(model, brql::greedy_policy(q)) << '\n';
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian risk-averse Q-learning experiments"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    Overrides overrides;
    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "TOML experiment file")->required()->check(CLI::ExistingFile);
        cmd->add_option("--out", out_dir, "output directory");
        cmd->add_option("--seed", overrides.seed, "base seed");
        cmd->add_option("--replications", overrides.replications, "replication count");
        cmd->add_option("--threads", overrides.threads, "worker threads");
    };

    auto* run_cmd = app.add_subcommand("run", "streaming experiment: value curves over stages");
    add_common(run_cmd);
    auto* fixed_cmd = app.add_subcommand("fixed", "fixed-data experiment: value under demand shift");
    add_common(fixed_cmd);
    auto* solve_cmd = app.add_subcommand("solve", "oracle Q-functions for a configuration");
    add_common(solve_cmd);
    auto* env_cmd = app.add_subcommand("dump-env", "print the transition kernel and rewards");
    env_cmd->add_option("--config", config_path, "TOML experiment file")->required()->check(CLI::ExistingFile);

    std::size_t o_min = 0, num_states = 0;
    double alpha = 0.0, r_bar = 0.0, gamma = 0.0;
    auto* bound_cmd = app.add_subcommand("bound", "concentration bound for the BRMDP value");
    bound_cmd->add_option("--observations", o_min, "smallest per-pair observation count")->required();
    bound_cmd->add_option("--states", num_states, "number of states")->required();
    bound_cmd->add_option("--alpha", alpha, "risk level")->required();
    bound_cmd->add_option("--reward-bound", r_bar, "sup |r|")->required();
    bound_cmd->add_option("--discount", gamma, "discount factor")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run_cmd) {
            run_streaming(resolve(config_path, overrides), out_dir);
        } else if (*fixed_cmd) {
            run_fixed(resolve(config_path, overrides), out_dir);
        } else if (*solve_cmd) {
            solve(resolve(config_path, overrides), out_dir);
        } else if (*env_cmd) {
            const auto config = resolve(config_path, {});
            brql::write_kernel_dump(std::cout, config.environment.build());
        } else if (*bound_cmd) {
            const auto b = brql::concentration_bound(o_min, num_states, alpha, r_bar, gamma);
            std::printf("probability_floor %.17g\nsup_norm_bound %.17g\n", b.probability_floor,
                        b.sup_norm_bound);
            if (b.vacuous()) std::printf("vacuous\n");
        }
    } catch (const brql::ConfigError& e) {
        std::cerr << e.what() << '\n';
        return 2;
    } catch (const brql::DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
