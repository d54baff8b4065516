#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "brql/baselines.hpp"
#include "brql/config.hpp"
#include "brql/learner.hpp"
#include "brql/oracle.hpp"

namespace brql {

/// Mean, sample standard deviation and the 95% normal-approximation half-width.
struct Summary {
    double mean = 0.0;
    double sd = 0.0;
    double half_width = 0.0;
    std::size_t n = 0;
};

inline Summary summarize(std::span<const double> xs) {
    Summary out;
    out.n = xs.size();
    if (xs.empty()) return out;
    double acc = 0.0;
    for (double x : xs) acc += x;
    out.mean = acc / static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - out.mean) * (x - out.mean);
        out.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    }
    out.half_width = 1.96 * out.sd / std::sqrt(static_cast<double>(xs.size()));
    return out;
}

/**
 * Deployed values for every (algorithm, replication, x point). The x axis is
 * the stage index in streaming mode and the demand mean in fixed-data mode.
 */
struct RunResult {
    std::string axis = "stage";
    std::vector<double> axis_values;
    std::vector<std::string> algorithms;
    std::vector<std::uint64_t> seeds;                       // per replication
    std::vector<std::vector<std::vector<double>>> values;   // [algorithm][replication][point]
    std::vector<std::vector<std::uint64_t>> stream_hashes;  // [algorithm][replication]

    std::size_t replications() const { return seeds.size(); }

    std::vector<double> column(std::size_t alg, std::size_t point) const {
        std::vector<double> out;
        out.reserve(values[alg].size());
        for (const auto& rep : values[alg]) out.push_back(rep[point]);
        return out;
    }

    Summary summary(std::size_t alg, std::size_t point) const { return summarize(column(alg, point)); }

    std::size_t algorithm_index(std::string_view label) const {
        for (std::size_t i = 0; i < algorithms.size(); ++i)
            if (algorithms[i] == label) return i;
        throw std::out_of_range("no algorithm " + std::string(label) + " in result");
    }
};

namespace detail {

/// Hands out batches from a dataset and hashes exactly what it handed out.
class HashingReplay final : public ObservationSource {
public:
    explicit HashingReplay(std::span<const ObservationTriple> data) : replay_(data), data_(data) {}

    std::vector<ObservationTriple> next_batch(std::size_t n) override { return replay_.next_batch(n); }

    std::uint64_t hash() const { return stream_hash(data_.first(replay_.consumed())); }

private:
    ReplayStream replay_;
    std::span<const ObservationTriple> data_;
};

inline std::vector<ObservationTriple> generate_observations(const ExperimentConfig& config,
                                                           const MdpModel& model, const RngKey& root,
                                                           std::size_t count) {
    Rng rng = root.child("observations").stream();
    if (config.behavior == BehaviorKind::Covering) return CoveringStream(model, std::move(rng)).next_batch(count);
    return TrajectoryStream(model, std::move(rng)).next_batch(count);
}

inline void check_bounded(double value, const MdpModel& model) {
    if (!(std::abs(value) <= model.value_bound() * (1.0 + 1e-9) + 1e-9))
        throw std::logic_error("deployed value exceeds R/(1-gamma)");
}

template <class Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn) {
    threads = std::max<std::size_t>(1, std::min(threads, count));
    if (threads == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < threads; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    pool.clear();
    if (error) std::rethrow_exception(error);
}

struct ReplicationOutput {
    std::vector<std::vector<double>> values; // [algorithm][point]
    std::vector<std::uint64_t> hashes;       // [algorithm]
};

inline ReplicationOutput streaming_replication(const ExperimentConfig& config, const MdpModel& model,
                                               std::uint64_t seed) {
    const RngKey root(seed);
    const auto learner = config.learner_config();
    const auto data =
        generate_observations(config, model, root, learner.schedule.total_observations());
    const std::span<const ObservationTriple> initial(data.data(), config.initial_batch);
    const RngKey sampling = root.child("posterior-sampling");

    ReplicationOutput out;
    for (const auto& alg : config.algorithms) {
        HashingReplay stream(data);
        std::vector<Snapshot> snaps;
        if (alg.bayesian()) {
            BayesianRiskTarget target(alg.risk());
            snaps = run(model, learner, stream, target, sampling, config.prior(model));
        } else {
            RobustTarget target =
                drql_target(alg.ambiguity(), AmbiguityRadius(alg.radius), model.layout(), initial);
            snaps = run(model, learner, stream, target, sampling, config.prior(model));
        }
        std::vector<double> curve;
        curve.reserve(snaps.size());
        for (const auto& s : snaps) {
            check_bounded(s.deployed_value, model);
            curve.push_back(s.deployed_value);
        }
        out.values.push_back(std::move(curve));
        out.hashes.push_back(stream.hash());
    }
    return out;
}

inline ReplicationOutput fixed_data_replication(const ExperimentConfig& config, const MdpModel& model,
                                                const std::vector<MdpModel>& shifted,
                                                std::uint64_t seed) {
    const RngKey root(seed);
    const auto data = generate_observations(config, model, root, config.initial_batch);
    auto posterior = config.prior(model);
    posterior.update(data);
    const double tol = default_oracle_tolerance(model);

    // VaR and CVaR share one frozen sample set
    std::optional<SaaSampleSet> saa;
    ReplicationOutput out;
    for (const auto& alg : config.algorithms) {
        QTable q;
        switch (alg.kind) {
        case AlgorithmKind::BrqlVaR:
        case AlgorithmKind::BrqlCVaR:
            if (!saa)
                saa.emplace(LimitingPosteriorSpec::all_frozen(posterior), config.saa_samples,
                            root.child("saa"));
            q = brmdp_fixed_point(*saa, model, alg.risk(), tol);
            break;
        case AlgorithmKind::BrqlMean:
            q = value_iteration(model.with_transitions(posterior.mean_table()), tol);
            break;
        case AlgorithmKind::DrqlKL:
        case AlgorithmKind::DrqlWass:
            q = robust_value_iteration(
                model, drql_target(alg.ambiguity(), AmbiguityRadius(alg.radius), model.layout(), data),
                tol);
            break;
        }
        const Policy policy = greedy_policy(q);
        std::vector<double> curve;
        for (const auto& env : shifted) {
            const double v = deployed_value(env, policy);
            check_bounded(v, env);
            curve.push_back(v);
        }
        out.values.push_back(std::move(curve));
        out.hashes.push_back(stream_hash(data));
    }
    return out;
}

template <class Replicate>
RunResult collect(const ExperimentConfig& config, Replicate&& replicate) {
    RunResult result;
    for (const auto& a : config.algorithms) result.algorithms.push_back(a.label());
    const std::size_t reps = config.replications;
    std::vector<ReplicationOutput> outputs(reps);
    parallel_for(reps, config.threads,
                 [&](std::size_t r) { outputs[r] = replicate(config.seed + r); });
    result.values.assign(config.algorithms.size(), {});
    result.stream_hashes.assign(config.algorithms.size(), {});
    for (std::size_t r = 0; r < reps; ++r) {
        result.seeds.push_back(config.seed + r);
        for (std::size_t i = 0; i < config.algorithms.size(); ++i) {
            result.values[i].push_back(std::move(outputs[r].values[i]));
            result.stream_hashes[i].push_back(outputs[r].hashes[i]);
        }
    }
    return result;
}

} // namespace detail

/**
 * Streaming experiment: per replication r (seed = base + r) one observation
 * stream is generated and replayed to every algorithm; each stage's greedy
 * policy is evaluated exactly in the true environment.
 */
inline RunResult run_experiment(const ExperimentConfig& config) {
    if (auto v = config.validate(); !v.empty()) throw ConfigError(std::move(v));
    if (config.mode != EvaluationMode::Streaming)
        throw ConfigError({"run_experiment needs mode = \"streaming\""});
    const MdpModel model = config.environment.build();
    RunResult result = detail::collect(
        config, [&](std::uint64_t seed) { return detail::streaming_replication(config, model, seed); });
    result.axis = "stage";
    for (std::size_t t = 0; t <= config.horizon; ++t) result.axis_values.push_back(static_cast<double>(t));
    return result;
}

/**
 * Fixed-data experiment: each algorithm learns once from the n(0) historical
 * batch (solved to its fixed point) and the greedy policy is evaluated under
 * truncated-Poisson demand at every configured mean.
 */
inline RunResult run_fixed_data_experiment(const ExperimentConfig& config) {
    if (auto v = config.validate(); !v.empty()) throw ConfigError(std::move(v));
    if (config.mode != EvaluationMode::FixedData)
        throw ConfigError({"run_fixed_data_experiment needs mode = \"fixed\""});
    const MdpModel model = config.environment.build();
    std::vector<MdpModel> shifted;
    for (double m : config.demand_means) shifted.push_back(config.environment.with_demand_mean(m));
    RunResult result = detail::collect(config, [&](std::uint64_t seed) {
        return detail::fixed_data_replication(config, model, shifted, seed);
    });
    result.axis = "demand_mean";
    result.axis_values = config.demand_means;
    return result;
}

// ---------------------------------------------------------------------------
// Outputs

namespace detail {

inline std::string format_double(double x) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
    if (ec != std::errc{}) throw std::runtime_error("number formatting failed");
    return std::string(buf, end);
}

inline double parse_double(std::string_view s) {
    double x = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw std::invalid_argument("bad number '" + std::string(s) + "'");
    return x;
}

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << content;
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

} // namespace detail

inline std::string curves_csv(const RunResult& r) {
    std::string out = "algorithm," + r.axis + ",mean,sd,ci_half_width,replications\n";
    for (std::size_t i = 0; i < r.algorithms.size(); ++i)
        for (std::size_t p = 0; p < r.axis_values.size(); ++p) {
            const auto s = r.summary(i, p);
            out += r.algorithms[i] + ',' + detail::format_double(r.axis_values[p]) + ',' +
                   detail::format_double(s.mean) + ',' + detail::format_double(s.sd) + ',' +
                   detail::format_double(s.half_width) + ',' + std::to_string(s.n) + '\n';
        }
    return out;
}

inline std::string raw_csv(const RunResult& r) {
    std::string out = "algorithm,replication,seed," + r.axis + ",value\n";
    for (std::size_t i = 0; i < r.algorithms.size(); ++i)
        for (std::size_t rep = 0; rep < r.values[i].size(); ++rep)
            for (std::size_t p = 0; p < r.axis_values.size(); ++p)
                out += r.algorithms[i] + ',' + std::to_string(rep) + ',' + std::to_string(r.seeds[rep]) +
                       ',' + detail::format_double(r.axis_values[p]) + ',' +
                       detail::format_double(r.values[i][rep][p]) + '\n';
    return out;
}

struct CurveRow {
    std::string algorithm;
    double x = 0.0;
    Summary summary;

    friend bool operator==(const CurveRow& a, const CurveRow& b) {
        return a.algorithm == b.algorithm && a.x == b.x && a.summary.mean == b.summary.mean &&
               a.summary.sd == b.summary.sd && a.summary.half_width == b.summary.half_width &&
               a.summary.n == b.summary.n;
    }
};

inline std::vector<CurveRow> curve_rows(const RunResult& r) {
    std::vector<CurveRow> rows;
    for (std::size_t i = 0; i < r.algorithms.size(); ++i)
        for (std::size_t p = 0; p < r.axis_values.size(); ++p)
            rows.push_back({r.algorithms[i], r.axis_values[p], r.summary(i, p)});
    return rows;
}

inline std::vector<CurveRow> parse_curves_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("curves.csv is empty");
    std::vector<CurveRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = detail::split_csv(line);
        if (cells.size() != 6) throw std::invalid_argument("curves.csv row needs 6 cells");
        CurveRow row;
        row.algorithm = cells[0];
        row.x = detail::parse_double(cells[1]);
        row.summary.mean = detail::parse_double(cells[2]);
        row.summary.sd = detail::parse_double(cells[3]);
        row.summary.half_width = detail::parse_double(cells[4]);
        row.summary.n = std::stoul(cells[5]);
        rows.push_back(std::move(row));
    }
    return rows;
}

/// Rebuilds aggregates from raw.csv with the same summary arithmetic.
inline std::vector<CurveRow> aggregate_raw_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("raw.csv is empty");
    std::vector<std::string> order;
    std::vector<std::pair<std::string, double>> keys; // (algorithm, x) in first-seen order
    std::vector<std::vector<double>> samples;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = detail::split_csv(line);
        if (cells.size() != 5) throw std::invalid_argument("raw.csv row needs 5 cells");
        const double x = detail::parse_double(cells[3]);
        std::size_t k = 0;
        while (k < keys.size() && !(keys[k].first == cells[0] && keys[k].second == x)) ++k;
        if (k == keys.size()) {
            keys.emplace_back(cells[0], x);
            samples.emplace_back();
        }
        samples[k].push_back(detail::parse_double(cells[4]));
    }
    std::vector<CurveRow> rows;
    for (std::size_t k = 0; k < keys.size(); ++k) rows.push_back({keys[k].first, keys[k].second, summarize(samples[k])});
    return rows;
}

/// Self-contained SVG of the mean curves with shaded 95% bands.
inline std::string curves_svg(const RunResult& r, const std::string& title) {
    constexpr double W = 800, H = 500, L = 70, R = 160, T = 40, B = 50;
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
       << "\" viewBox=\"0 0 " << W << ' ' << H << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
          "font-size=\"16\">"
       << title << "</text>\n";
    os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
       << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B
       << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" << r.axis
       << "</text>\n";

    const bool empty = r.algorithms.empty() || r.axis_values.empty() || r.replications() == 0;
    if (!empty) {
        double xmin = r.axis_values.front(), xmax = r.axis_values.back();
        double ymin = INFINITY, ymax = -INFINITY;
        for (std::size_t i = 0; i < r.algorithms.size(); ++i)
            for (std::size_t p = 0; p < r.axis_values.size(); ++p) {
                const auto s = r.summary(i, p);
                ymin = std::min(ymin, s.mean - s.half_width);
                ymax = std::max(ymax, s.mean + s.half_width);
            }
        if (xmax == xmin) xmax = xmin + 1;
        if (ymax == ymin) ymax = ymin + 1;
        const double pad = 0.05 * (ymax - ymin);
        ymin -= pad;
        ymax += pad;
        auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
        auto py = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };

        for (int k = 0; k <= 4; ++k) {
            const double y = ymin + (ymax - ymin) * k / 4.0;
            const double x = xmin + (xmax - xmin) * k / 4.0;
            os << "<text x=\"" << L - 6 << "\" y=\"" << py(y) + 4
               << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
               << std::round(y * 100) / 100 << "</text>\n";
            os << "<text x=\"" << px(x) << "\" y=\"" << H - B + 16
               << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
               << std::round(x * 100) / 100 << "</text>\n";
        }

        static constexpr const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                                 "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
        for (std::size_t i = 0; i < r.algorithms.size(); ++i) {
            const char* color = colors[i % 8];
            std::ostringstream band, line;
            std::vector<Summary> s;
            for (std::size_t p = 0; p < r.axis_values.size(); ++p) s.push_back(r.summary(i, p));
            for (std::size_t p = 0; p < s.size(); ++p)
                band << px(r.axis_values[p]) << ',' << py(s[p].mean + s[p].half_width) << ' ';
            for (std::size_t p = s.size(); p-- > 0;)
                band << px(r.axis_values[p]) << ',' << py(s[p].mean - s[p].half_width) << ' ';
            for (std::size_t p = 0; p < s.size(); ++p)
                line << px(r.axis_values[p]) << ',' << py(s[p].mean) << ' ';
            os << "<polygon points=\"" << band.str() << "\" fill=\"" << color
               << "\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";
            os << "<polyline points=\"" << line.str() << "\" fill=\"none\" stroke=\"" << color
               << "\" stroke-width=\"1.5\"/>\n";
            const double ly = T + 20 + 20 * static_cast<double>(i);
            os << "<line x1=\"" << W - R + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 30
               << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
            os << "<text x=\"" << W - R + 36 << "\" y=\"" << ly + 4
               << "\" font-family=\"sans-serif\" font-size=\"12\">" << r.algorithms[i] << "</text>\n";
        }
    }
    os << "</svg>\n";
    return os.str();
}

/// Resolved config plus the reporting conventions that are not config keys.
inline std::string config_echo(const ExperimentConfig& config) {
    return "# confidence bands: mean +/- 1.96 sd / sqrt(replications), sd with n-1\n"
           "# deployed value: exact policy evaluation averaged over a uniform start state\n"
           "# replication r uses seed = seed + r\n" +
           to_toml(config);
}

/// Writes curves.csv, raw.csv, curves.svg and config.echo into out_dir.
inline void emit_outputs(const RunResult& result, const std::filesystem::path& out_dir,
                         const std::string& echo, const std::string& title = "deployed value") {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw std::runtime_error("cannot create " + out_dir.string() + ": " + ec.message());
    detail::write_file(out_dir / "curves.csv", curves_csv(result));
    detail::write_file(out_dir / "raw.csv", raw_csv(result));
    detail::write_file(out_dir / "curves.svg", curves_svg(result, title));
    detail::write_file(out_dir / "config.echo", echo);
}

} // namespace brql
