// Acceptance checks. Prints one PASS/FAIL line per criterion.
//
//   acceptance [--out DIR] [--strict] [--sample-cap N] [criterion ...]
//
// Without --strict the exit status only reflects crashes, so a faithful
// implementation can report an unattained criterion without breaking ctest.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>

#include "brql/brql.hpp"
#include "support.hpp"

using namespace brql;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Options {
    fs::path out = "acceptance-out";
    bool strict = false;
    std::size_t sample_cap = 30;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double pooled_half_width(const Summary& a, const Summary& b) {
    return 1.96 * std::sqrt(a.sd * a.sd / static_cast<double>(a.n) + b.sd * b.sd / static_cast<double>(b.n));
}

bool close_ulps(double x, double y, double scale) {
    return std::abs(x - y) <= 4.0 * std::numeric_limits<double>::epsilon() * scale;
}

ExperimentConfig preset(const char* name) {
    return load_config(std::string(BRQL_CONFIG_DIR) + "/" + name + ".toml");
}

// ---------------------------------------------------------------------------
// 1: estimator identities on 1000 random batches

Outcome estimator_identities(const Options&) {
    Rng rng(RngKey(101).stream());
    std::map<std::string, int> failures;
    auto check = [&](bool ok, const char* what) {
        if (!ok) ++failures[what];
    };
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng.index(200);
        const double alpha = 1.0 - rng.uniform(); // (0, 1]
        const double alpha2 = alpha + (1.0 - alpha) * rng.uniform();
        // integer values keep every sum exact, so orderings are decided exactly
        std::vector<double> x(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = static_cast<double>(static_cast<int>(rng.index(201)) - 100);
            y[i] = x[i] + static_cast<double>(rng.index(5));
        }
        const SampleBatch bx(x), by(y);
        const auto var = RiskFunctional::var(alpha), cvar = RiskFunctional::cvar(alpha),
                   mean = RiskFunctional::mean();
        const double v = estimate_from_samples(bx, var), c = estimate_from_samples(bx, cvar),
                     m = estimate_from_samples(bx, mean);
        check(c <= v, "CVaR <= VaR");
        check(v <= *std::max_element(x.begin(), x.end()), "VaR <= max");
        check(c <= m, "CVaR <= mean");
        check(v <= estimate_from_samples(bx, RiskFunctional::var(alpha2)), "VaR monotone in alpha");
        check(c <= estimate_from_samples(bx, RiskFunctional::cvar(alpha2)), "CVaR monotone in alpha");

        const double shift = static_cast<double>(static_cast<int>(rng.index(201)) - 100);
        const double dyadic = std::ldexp(1.0, static_cast<int>(rng.index(9)) - 4);
        const double scale = 0.01 + 10.0 * rng.uniform();
        std::vector<double> xs(x), xd(x), xg(x);
        for (auto& e : xs) e += shift;
        for (auto& e : xd) e *= dyadic;
        for (auto& e : xg) e *= scale;
        for (const auto& risk : {var, cvar, mean}) {
            const double base = estimate_from_samples(bx, risk);
            const double shifted = estimate_from_samples(SampleBatch(xs), risk);
            const double mag = std::abs(base) + std::abs(shift) + 1.0;
            // VaR picks an element, so it commutes with the shift exactly; the
            // averaging estimators round once per division
            if (risk.kind() == RiskKind::VaR)
                check(shifted == base + shift, "translation");
            else
                check(close_ulps(shifted, base + shift, mag), "translation");
            check(estimate_from_samples(SampleBatch(xd), risk) == dyadic * base, "homogeneity (dyadic)");
            // each scaled element is rounded before summing
            check(close_ulps(estimate_from_samples(SampleBatch(xg), risk), scale * base,
                             scale * static_cast<double>(n + 2) * 100.0),
                  "homogeneity");
            check(base <= estimate_from_samples(by, risk), "batchwise monotonicity");
        }
    }
    if (failures.empty()) return {true, "1000 batches, all identities hold"};
    std::string d;
    for (const auto& [k, v] : failures) d += fmt("%s: %d violations; ", k.c_str(), v);
    return {false, d};
}

// ---------------------------------------------------------------------------
// 2: sample-wise contraction with shared kernel draws

Outcome samplewise_contraction(const Options&) {
    Rng rng(RngKey(202).stream());
    int violations = 0, checks = 0;
    double worst = -INFINITY;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t S = 2 + rng.index(5), A = 1 + rng.index(3);
        const double gamma = 0.05 + 0.9 * rng.uniform();
        const auto model = gen::random_mdp(rng, S, A, gamma, -1.0, 1.0);
        const auto posterior = gen::random_posterior(rng, model.layout(), 20);
        const auto q1 = gen::random_q(rng, model.layout(), 5.0), q2 = gen::random_q(rng, model.layout(), 5.0);
        const double lip = gamma * sup_distance(q1, q2);
        const std::size_t n = 1 + rng.index(100);
        for (std::size_t s = 0; s < S; ++s)
            for (std::size_t a = 0; a < A; ++a) {
                std::vector<std::vector<double>> kernels;
                for (std::size_t i = 0; i < n; ++i) kernels.push_back(posterior.sample(s, a, rng));
                const double alpha = 1.0 - rng.uniform();
                for (const auto& risk :
                     {RiskFunctional::var(alpha), RiskFunctional::cvar(alpha), RiskFunctional::mean()}) {
                    const double d = std::abs(estimate_from_kernels(kernels, s, a, q1, risk, model) -
                                              estimate_from_kernels(kernels, s, a, q2, risk, model));
                    ++checks;
                    worst = std::max(worst, d - lip);
                    if (d > lip + 1e-12) ++violations;
                }
            }
    }
    return {violations == 0,
            fmt("%d of %d pair estimates violate; max excess %.3g", violations, checks, worst)};
}

// ---------------------------------------------------------------------------
// 3: oracle fixed point on the two benchmarks

Outcome oracle_fixed_point(const Options&) {
    bool ok = true;
    std::string d;
    const std::pair<const char*, ExperimentConfig> envs[] = {{"coin-toss", preset("coin-a02")},
                                                             {"inventory", preset("inventory-fixed")}};
    for (const auto& [label, config] : envs) {
        const auto model = config.environment.build();
        const double tol = default_oracle_tolerance(model);
        auto posterior = init_uniform_prior(model);
        posterior.update(TrajectoryStream(model, RngKey(303).child("observations").stream()).next_batch(20));
        const SaaSampleSet set(LimitingPosteriorSpec::all_frozen(posterior), kDefaultSaaSamples,
                               RngKey(303).child("saa"));
        d += fmt("%s |S|=%zu:", label, model.num_states());
        for (const auto& risk :
             {RiskFunctional::var(0.2), RiskFunctional::cvar(0.2), RiskFunctional::mean()}) {
            const auto q = brmdp_fixed_point(set, model, risk, tol);
            const double residual = sup_distance(apply_saa_operator(set, model, risk, q), q);
            ok = ok && residual <= tol;
            d += fmt(" %s residual %.2g;", risk.name().c_str(), residual);
        }
        const auto dirac = brmdp_fixed_point(LimitingPosteriorSpec::all_dirac(model), RiskFunctional::cvar(0.2),
                                             model, kDefaultSaaSamples, tol, RngKey(303));
        const double gap = sup_distance(dirac, value_iteration(model, tol));
        ok = ok && gap <= 1e-6 * model.value_bound();
        d += fmt(" Dirac vs value iteration %.2g (tol %.2g); ", gap, tol);
    }
    return {ok, d};
}

// ---------------------------------------------------------------------------
// 4 and 5 share a fixed random 3-state/2-action MDP

MdpModel small_random_mdp() {
    Rng rng(RngKey(404).stream());
    return gen::random_mdp(rng, 3, 2, 0.9, 0.0, 1.0);
}

Outcome learner_convergence(const Options& opt) {
    const auto model = small_random_mdp();
    const auto q_star = value_iteration(model, 1e-12);
    const double limit = 0.05 * model.value_bound();
    LearnerConfig cfg;
    cfg.schedule = StageSchedule::constant(20000, 1, 1, 0);
    cfg.min_sample_size = 10;
    cfg.sample_size_cap = opt.sample_cap;
    std::string d;
    bool ok = true;
    for (const auto& risk : {RiskFunctional::var(0.2), RiskFunctional::cvar(0.2)}) {
        int within = 0;
        double worst = 0.0;
        for (std::uint64_t r = 0; r < 100; ++r) {
            const RngKey root(4000 + r);
            CoveringStream stream(model, root.child("observations").stream());
            BayesianRiskTarget target(risk);
            const auto snaps = run(model, cfg, stream, target, root.child("posterior-sampling"));
            const double err = sup_distance(snaps.back().q, q_star);
            worst = std::max(worst, err);
            if (err <= limit) ++within;
        }
        ok = ok && within >= 95;
        d += fmt("%s: %d/100 within %.3g (worst %.3g); ", risk.name().c_str(), within, limit, worst);
    }
    d += fmt("sample sizes capped at %zu", opt.sample_cap);
    return {ok, d};
}

Outcome posterior_deviation_monotone(const Options&) {
    const auto model = small_random_mdp();
    const auto q_star = value_iteration(model, 1e-12);
    const double tol = default_oracle_tolerance(model);
    const std::size_t checkpoints[] = {100, 1000, 10000};
    const RiskFunctional risks[] = {RiskFunctional::var(0.2), RiskFunctional::cvar(0.2)};
    int monotone[2] = {0, 0};
    double dev_mean[2][3] = {};
    for (std::uint64_t r = 0; r < 100; ++r) {
        const RngKey root(5000 + r);
        CoveringStream stream(model, root.child("observations").stream());
        auto posterior = init_uniform_prior(model);
        double dev[2][3];
        std::size_t seen = 0;
        for (std::size_t c = 0; c < 3; ++c) {
            posterior.update(stream.next_batch(checkpoints[c] - seen));
            seen = checkpoints[c];
            const SaaSampleSet set(LimitingPosteriorSpec::all_frozen(posterior), kDefaultSaaSamples,
                                   root.child("saa").child(c));
            for (int k = 0; k < 2; ++k) {
                dev[k][c] = sup_distance(brmdp_fixed_point(set, model, risks[k], tol), q_star);
                dev_mean[k][c] += dev[k][c] / 100.0;
            }
        }
        for (int k = 0; k < 2; ++k)
            if (dev[k][0] >= dev[k][1] && dev[k][1] >= dev[k][2]) ++monotone[k];
    }
    std::string d;
    for (int k = 0; k < 2; ++k)
        d += fmt("%s: %d/100 nonincreasing (mean deviation %.3g, %.3g, %.3g); ", risks[k].name().c_str(),
                 monotone[k], dev_mean[k][0], dev_mean[k][1], dev_mean[k][2]);
    return {monotone[0] >= 90 && monotone[1] >= 90, d};
}

// ---------------------------------------------------------------------------
// 6: concentration guarantee on a 2-state/1-action MDP

Outcome concentration_guarantee(const Options&) {
    const std::vector<double> p{0.3, 0.7, 0.6, 0.4};
    const std::vector<double> rewards{1.0, -0.5, 0.25, -1.0};
    const MdpModel model(std::vector<std::size_t>{1, 1}, p, rewards, 0.5);
    const std::size_t per_pair = 100000;
    const double alpha = 0.4;
    const auto bound = concentration_bound(per_pair, 2, alpha, 1.0, 0.5);
    const double failure_prob = std::max(0.0, 1.0 - bound.probability_floor);
    const Policy policy{{0, 0}};
    const auto v_true = policy_evaluation_exact(model, policy);
    const double tol = default_oracle_tolerance(model);
    int violations[2] = {0, 0};
    double worst = 0.0;
    for (std::uint64_t r = 0; r < 200; ++r) {
        const RngKey root(6000 + r);
        Rng rng = root.child("observations").stream();
        auto posterior = init_uniform_prior(model);
        for (std::size_t s = 0; s < 2; ++s)
            for (std::size_t i = 0; i < per_pair; ++i)
                posterior.observe({s, 0, rng.categorical(model.transition(s, 0))});
        const SaaSampleSet set(LimitingPosteriorSpec::all_frozen(posterior), kDefaultSaaSamples,
                               root.child("saa"));
        int k = 0;
        for (const auto& risk : {RiskFunctional::var(alpha), RiskFunctional::cvar(alpha)}) {
            const auto v = state_values(brmdp_fixed_point(set, model, risk, tol));
            double gap = 0.0;
            for (std::size_t s = 0; s < 2; ++s) gap = std::max(gap, std::abs(v[s] - v_true.values[s]));
            worst = std::max(worst, gap);
            if (gap > bound.sup_norm_bound) ++violations[k];
            ++k;
        }
    }
    const double frac = std::max(violations[0], violations[1]) / 200.0;
    return {frac <= failure_prob + 0.05,
            fmt("violations VaR %d, CVaR %d of 200; bound %.4g, largest gap %.3g, failure probability %.4g",
                violations[0], violations[1], bound.sup_norm_bound, worst, failure_prob)};
}

// ---------------------------------------------------------------------------
// 7 and 9: coin-toss streaming preset

std::optional<std::string> first_coin_raw;

RunResult coin_run(const Options& opt, const char* subdir) {
    const auto config = preset("coin-a02");
    auto result = run_experiment(config);
    emit_outputs(result, opt.out / subdir, config_echo(config), config.name);
    return result;
}

Outcome coin_orderings(const Options& opt) {
    const auto r = coin_run(opt, "coin-a02");
    first_coin_raw = raw_csv(r);
    const std::size_t last = r.axis_values.size() - 1, early = 20;
    const auto mean = r.summary(r.algorithm_index("BRQL-mean"), last);
    bool a = true, b = true;
    std::string d;
    for (const char* name : {"BRQL-VaR", "BRQL-CVaR"}) {
        const auto s = r.summary(r.algorithm_index(name), last);
        a = a && s.mean <= mean.mean + mean.half_width;
        d += fmt("%s %.4f (mean-risk %.4f +/- %.4f)", name, s.mean, mean.mean, mean.half_width);
        for (const char* drql : {"DRQL-KL", "DRQL-Wass"}) {
            const auto t = r.summary(r.algorithm_index(drql), last);
            const double margin = s.mean - t.mean, hw = pooled_half_width(s, t);
            b = b && margin > hw;
            d += fmt(", over %s by %.4f (pooled hw %.4f)", drql, margin, hw);
        }
        d += "; ";
    }
    const auto cvar20 = r.summary(r.algorithm_index("BRQL-CVaR"), early);
    const auto mean20 = r.summary(r.algorithm_index("BRQL-mean"), early);
    const bool c = cvar20.sd <= mean20.sd;
    d += fmt("stage-20 sd CVaR %.4f vs mean %.4f; (a) %s (b) %s (c) %s", cvar20.sd, mean20.sd,
             a ? "pass" : "fail", b ? "pass" : "fail", c ? "pass" : "fail");
    return {a && b && c, d};
}

// ---------------------------------------------------------------------------
// 8: inventory fixed-data preset under demand shift

Outcome inventory_crossover(const Options& opt) {
    const auto config = preset("inventory-fixed");
    const auto r = run_fixed_data_experiment(config);
    emit_outputs(r, opt.out / "inventory-fixed", config_echo(config), config.name);
    // lower demand than in training is the adversarial side
    const auto& xs = r.axis_values;
    const std::size_t adverse = static_cast<std::size_t>(std::min_element(xs.begin(), xs.end()) - xs.begin());
    const std::size_t nominal = static_cast<std::size_t>(
        std::find(xs.begin(), xs.end(), config.environment.demand_mean) - xs.begin());
    if (nominal == xs.size()) return {false, "training demand mean is not on the grid"};
    const auto cvar = r.algorithm_index("BRQL-CVaR"), mean = r.algorithm_index("BRQL-mean");
    const auto ca = r.summary(cvar, adverse), ma = r.summary(mean, adverse);
    const auto cn = r.summary(cvar, nominal), mn = r.summary(mean, nominal);
    const bool above = ca.mean - ma.mean > pooled_half_width(ca, ma);
    const bool below = mn.mean - cn.mean > pooled_half_width(cn, mn);
    return {above && below,
            fmt("demand %.1f: CVaR %.4f vs mean %.4f (pooled hw %.4f); demand %.1f: CVaR %.4f vs mean %.4f "
                "(pooled hw %.4f)",
                xs[adverse], ca.mean, ma.mean, pooled_half_width(ca, ma), xs[nominal], cn.mean, mn.mean,
                pooled_half_width(cn, mn))};
}

Outcome determinism(const Options& opt) {
    if (!first_coin_raw) first_coin_raw = raw_csv(coin_run(opt, "coin-a02"));
    const auto again = coin_run(opt, "coin-a02-repeat");
    const bool same = raw_csv(again) == *first_coin_raw;
    return {same, same ? "coin-a02 raw.csv byte-identical across two runs" : "raw.csv differs between runs"};
}

struct Criterion {
    int id;
    double limit_seconds; // 0 when the criterion states no limit
    std::function<Outcome(const Options&)> check;
};

} // namespace

int main(int argc, char** argv) {
    Options opt;
    std::vector<int> selected;
    for (int i = 1; i < argc; ++i) {
        if (!std::strcmp(argv[i], "--out") && i + 1 < argc)
            opt.out = argv[++i];
        else if (!std::strcmp(argv[i], "--strict"))
            opt.strict = true;
        else if (!std::strcmp(argv[i], "--sample-cap") && i + 1 < argc)
            opt.sample_cap = std::stoul(argv[++i]);
        else
            selected.push_back(std::atoi(argv[i]));
    }
    const Criterion criteria[] = {
        {1, 5, estimator_identities},      {2, 10, samplewise_contraction},
        {3, 120, oracle_fixed_point},      {4, 300, learner_convergence},
        {5, 0, posterior_deviation_monotone}, {6, 600, concentration_guarantee},
        {7, 1200, coin_orderings},         {8, 1800, inventory_crossover},
        {9, 0, determinism},
    };
    fs::create_directories(opt.out);
    std::ofstream report(opt.out / "report.txt");
    int failed = 0;
    for (const auto& c : criteria) {
        if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end()) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.check(opt);
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_time = c.limit_seconds == 0 || secs < c.limit_seconds;
        if (!in_time) o.detail += "; over the runtime limit";
        const bool pass = o.pass && in_time;
        failed += !pass;
        const std::string line =
            fmt("criterion %d: %s  ", c.id, pass ? "PASS" : "FAIL") + o.detail +
            fmt(" [%.1f s%s]", secs, c.limit_seconds > 0 ? fmt(", limit %.0f s", c.limit_seconds).c_str() : "");
        std::printf("%s\n", line.c_str());
        std::fflush(stdout);
        report << line << '\n' << std::flush;
    }
    return opt.strict && failed > 0 ? 1 : 0;
}
