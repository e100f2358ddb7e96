#include "elastiq/cost_model.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <set>

namespace elastiq {

void validate_config_set(const std::vector<ClusterConfig>& configs) {
    if (configs.empty()) throw ScenarioError("config set is empty");
    for (std::size_t i = 0; i < configs.size(); ++i) {
        const auto& c = configs[i];
        if (c.id != static_cast<int>(i))
            throw ScenarioError("config ids must be ordinal positions 0..n-1");
        if (c.worker_nodes < 1) throw ScenarioError("config needs at least one worker node");
        if (c.price_per_node_second <= 0) throw ScenarioError("config price must be positive");
        if (i > 0 && configs[i - 1].worker_nodes >= c.worker_nodes)
            throw ScenarioError("configs must be strictly increasing in worker nodes");
    }
}

int mandatory_floor_nodes(const std::vector<ClusterConfig>& configs) {
    int smallest = configs.empty() ? 2 : configs.front().worker_nodes;
    return std::min(2, smallest);
}

int NodeTimeline::nodes_at(Millis t) const {
    int nodes = 0;
    for (const auto& p : points) {
        if (p.time_ms > t) break;
        nodes = p.nodes;
    }
    return nodes;
}

int NodeTimeline::max_nodes() const {
    int m = 0;
    for (const auto& p : points) m = std::max(m, p.nodes);
    return m;
}

Millis estimate_duration_ms(const ProcCostModel& model, int nodes, std::int64_t tuples) {
    if (nodes < 1) throw ScenarioError("duration model needs at least one node");
    const double n = static_cast<double>(nodes);
    const double seconds = (model.a_serial + model.a_parallel / n) * static_cast<double>(tuples) +
                           model.b_fixed + model.b_per_node / n;
    return ceil_ms(seconds);
}

std::int64_t estimate_tuples(const ProcCostModel& model, int nodes, Millis duration_ms) {
    if (duration_ms < 0) return 0;
    if (estimate_duration_ms(model, nodes, 0) > duration_ms) return 0;
    const double per_tuple = model.a_serial + model.a_parallel / static_cast<double>(nodes);
    // Durations independent of the tuple count mean unbounded capacity;
    // callers clip against pending work anyway.
    const std::int64_t cap = std::int64_t{1} << 50;
    if (per_tuple <= 0) return cap;

    std::int64_t lo = 0;
    std::int64_t hi = static_cast<std::int64_t>(
        std::min<double>(static_cast<double>(cap),
                         static_cast<double>(duration_ms) / 1000.0 / per_tuple + 2.0));
    while (estimate_duration_ms(model, nodes, hi) <= duration_ms && hi < cap) {
        lo = hi;
        hi = std::min(cap, hi * 2 + 1);
    }
    while (lo < hi) {
        const std::int64_t mid = lo + (hi - lo + 1) / 2;
        if (estimate_duration_ms(model, nodes, mid) <= duration_ms)
            lo = mid;
        else
            hi = mid - 1;
    }
    return lo;
}

double agg_duration_seconds(const AggCostModel& model, int nodes, std::int64_t num_batches) {
    if (num_batches <= 1) return 0;
    const double scale = model.scale_c0 + model.scale_c1 / static_cast<double>(nodes);
    if (model.breakpoints.empty()) return 0;

    const double b = static_cast<double>(num_batches);
    double base = 0;
    // Implicit (1, 0) anchor keeps g(1) == 0.
    double x0 = 1.0, y0 = 0.0;
    bool interpolated = false;
    for (const auto& [bx, by] : model.breakpoints) {
        const double x1 = static_cast<double>(bx);
        if (b <= x1) {
            base = x1 == x0 ? by : y0 + (by - y0) * (b - x0) / (x1 - x0);
            interpolated = true;
            break;
        }
        x0 = x1;
        y0 = by;
    }
    if (!interpolated) {
        // Continue past the last breakpoint with the final segment's slope.
        double px = 1.0, py = 0.0;
        if (model.breakpoints.size() >= 2) {
            const auto& prev = model.breakpoints[model.breakpoints.size() - 2];
            px = static_cast<double>(prev.first);
            py = prev.second;
        }
        const auto& last = model.breakpoints.back();
        const double lx = static_cast<double>(last.first);
        const double slope = lx == px ? 0.0 : (last.second - py) / (lx - px);
        base = last.second + slope * (b - lx);
    }
    return base * scale;
}

Millis estimate_agg_duration_ms(const AggCostModel& model, int nodes, std::int64_t num_batches) {
    return ceil_ms(agg_duration_seconds(model, nodes, num_batches));
}

namespace {

// Non-negative least squares by clamp-and-refit: solve, zero out the most
// negative coefficient, repeat on the reduced basis.
Eigen::VectorXd nnls_clamp_refit(const Eigen::MatrixXd& design, const Eigen::VectorXd& rhs) {
    const int cols = static_cast<int>(design.cols());
    std::vector<bool> active(cols, true);
    Eigen::VectorXd coeffs = Eigen::VectorXd::Zero(cols);
    for (int round = 0; round < cols + 1; ++round) {
        std::vector<int> idx;
        for (int j = 0; j < cols; ++j)
            if (active[j]) idx.push_back(j);
        if (idx.empty()) break;
        Eigen::MatrixXd sub(design.rows(), idx.size());
        for (std::size_t j = 0; j < idx.size(); ++j) sub.col(j) = design.col(idx[j]);
        Eigen::VectorXd sol = sub.colPivHouseholderQr().solve(rhs);
        int worst = -1;
        double worst_val = -1e-12;
        for (std::size_t j = 0; j < idx.size(); ++j) {
            if (sol[j] < worst_val) {
                worst_val = sol[j];
                worst = static_cast<int>(j);
            }
        }
        if (worst < 0) {
            coeffs.setZero();
            for (std::size_t j = 0; j < idx.size(); ++j) coeffs[idx[j]] = sol[j];
            return coeffs;
        }
        active[idx[worst]] = false;
    }
    return coeffs;
}

}  // namespace

ProcFitResult fit_proc_model(const std::vector<DurationSample>& samples) {
    std::set<int> node_counts;
    std::set<std::int64_t> tuple_counts;
    for (const auto& s : samples) {
        if (s.nodes < 1) throw DegenerateSamplesError("sample with nodes < 1");
        node_counts.insert(s.nodes);
        tuple_counts.insert(s.tuples);
    }
    if (samples.size() < 4 || node_counts.size() < 2 || tuple_counts.size() < 2)
        throw DegenerateSamplesError(
            "need >= 4 samples spanning >= 2 node counts and >= 2 tuple counts");

    const int rows = static_cast<int>(samples.size());
    Eigen::MatrixXd design(rows, 4);
    Eigen::VectorXd rhs(rows);
    for (int i = 0; i < rows; ++i) {
        const double n = static_cast<double>(samples[i].nodes);
        const double t = static_cast<double>(samples[i].tuples);
        design(i, 0) = t;
        design(i, 1) = t / n;
        design(i, 2) = 1.0;
        design(i, 3) = 1.0 / n;
        rhs[i] = samples[i].seconds;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    if (qr.rank() < 4) throw DegenerateSamplesError("design matrix is rank-deficient");

    const Eigen::VectorXd coeffs = nnls_clamp_refit(design, rhs);

    ProcFitResult result;
    result.model.a_serial = coeffs[0];
    result.model.a_parallel = coeffs[1];
    result.model.b_fixed = coeffs[2];
    result.model.b_per_node = coeffs[3];
    result.model.valid_min_nodes = *node_counts.begin();
    result.model.valid_max_nodes = *node_counts.rbegin();
    const Eigen::VectorXd resid = design * coeffs - rhs;
    result.residual_rms = std::sqrt(resid.squaredNorm() / rows);
    return result;
}

double extrapolate_duration(const std::vector<std::pair<int, double>>& known_durations,
                            int target_nodes) {
    std::set<int> node_counts;
    for (const auto& [n, d] : known_durations) node_counts.insert(n);
    if (node_counts.size() < 2)
        throw DegenerateSamplesError("need durations at >= 2 distinct node counts");

    const int rows = static_cast<int>(known_durations.size());
    Eigen::MatrixXd design(rows, 2);
    Eigen::VectorXd rhs(rows);
    for (int i = 0; i < rows; ++i) {
        design(i, 0) = 1.0;
        design(i, 1) = 1.0 / static_cast<double>(known_durations[i].first);
        rhs[i] = known_durations[i].second;
    }
    const Eigen::Vector2d c = design.colPivHouseholderQr().solve(rhs);
    return c[0] + c[1] / static_cast<double>(target_nodes);
}

double batch_cost(const ClusterConfig& config, Millis duration_ms) {
    if (duration_ms < 0) throw MalformedTimelineError("negative batch duration");
    return config.worker_nodes * config.price_per_node_second *
           static_cast<double>(duration_ms) / 1000.0;
}

double schedule_cost(const NodeTimeline& timeline, const PriceTable& prices) {
    if (prices.machine_rate_per_hour <= 0 || prices.platform_rate_per_hour <= 0 ||
        prices.minimum_billed_seconds <= 0)
        throw MalformedTimelineError("price table fields must be positive");
    if (timeline.points.empty()) return 0;
    if (timeline.points.back().nodes != 0)
        throw MalformedTimelineError("timeline must end with a zero-node point");

    const double rate_per_node_second =
        (prices.machine_rate_per_hour + prices.platform_rate_per_hour) / 3600.0;

    // Stack of (acquire time, count): extra nodes acquired later are
    // released first.
    std::vector<std::pair<Millis, int>> held;
    int current = 0;
    Millis prev_time = timeline.points.front().time_ms;
    double total = 0;

    for (const auto& p : timeline.points) {
        if (p.nodes < 0) throw MalformedTimelineError("negative node count");
        if (p.time_ms < prev_time) throw MalformedTimelineError("timeline times must not decrease");
        prev_time = p.time_ms;
        if (p.nodes > current) {
            held.emplace_back(p.time_ms, p.nodes - current);
        } else if (p.nodes < current) {
            int to_release = current - p.nodes;
            while (to_release > 0) {
                if (held.empty()) throw MalformedTimelineError("release without acquisition");
                auto& top = held.back();
                const int k = std::min(top.second, to_release);
                const double held_seconds = ms_to_seconds(p.time_ms - top.first);
                const double billed = std::max(prices.minimum_billed_seconds, held_seconds);
                total += billed * k * rate_per_node_second;
                top.second -= k;
                to_release -= k;
                if (top.second == 0) held.pop_back();
            }
        }
        current = p.nodes;
    }
    if (!held.empty()) throw MalformedTimelineError("unmatched acquisitions at end of timeline");
    return total;
}

}  // namespace elastiq
