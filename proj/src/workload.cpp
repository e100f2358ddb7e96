#include "elastiq/workload.hpp"

#include <algorithm>
#include <cmath>

namespace elastiq {

namespace {

// Raw (fractional) tuples arrived by t, before granule flooring.
double raw_cumulative(const InputProfile& profile, Millis t) {
    double raw = 0;
    for (std::size_t i = 0; i < profile.segments.size(); ++i) {
        const Millis seg_start = profile.segments[i].first;
        const Millis seg_end =
            i + 1 < profile.segments.size() ? profile.segments[i + 1].first : profile.end_ms;
        const Millis lo = seg_start;
        const Millis hi = std::min(seg_end, t);
        if (hi > lo) raw += profile.segments[i].second * ms_to_seconds(hi - lo);
    }
    return raw;
}

std::int64_t floor_guarded(double x) {
    return static_cast<std::int64_t>(std::floor(x + 1e-9));
}

}  // namespace

void validate_profile(const InputProfile& profile) {
    if (profile.granule < 1) throw ScenarioError("profile granule must be >= 1");
    for (std::size_t i = 0; i < profile.segments.size(); ++i) {
        if (profile.segments[i].second < 0)
            throw ScenarioError("profile rates must be nonnegative");
        if (i > 0 && profile.segments[i - 1].first >= profile.segments[i].first)
            throw ScenarioError("profile segment starts must be strictly increasing");
    }
    if (!profile.segments.empty() && profile.end_ms < profile.segments.back().first)
        throw ScenarioError("profile end precedes last segment start");
}

std::int64_t cumulative_tuples(const InputProfile& profile, Millis t) {
    const std::int64_t granules = floor_guarded(raw_cumulative(profile, t)) / profile.granule;
    return granules * profile.granule;
}

std::int64_t total_tuples(const InputProfile& profile) {
    return cumulative_tuples(profile, profile.end_ms);
}

Millis input_time(const InputProfile& profile, std::int64_t count) {
    if (count <= 0) return profile.start_ms();
    if (count > total_tuples(profile))
        throw NotEnoughTuplesError("profile " + profile.stream_id + " delivers fewer tuples");

    // Readiness rounds up: we need raw arrivals to reach the next whole
    // granule covering `count`.
    const double needed =
        static_cast<double>((count + profile.granule - 1) / profile.granule * profile.granule);
    double raw = 0;
    for (std::size_t i = 0; i < profile.segments.size(); ++i) {
        const Millis seg_start = profile.segments[i].first;
        const Millis seg_end =
            i + 1 < profile.segments.size() ? profile.segments[i + 1].first : profile.end_ms;
        const double rate = profile.segments[i].second;
        const double seg_amount = rate * ms_to_seconds(seg_end - seg_start);
        if (raw + seg_amount >= needed - 1e-9 && rate > 0) {
            const double remain = needed - raw;
            const Millis dt = ceil_ms(remain / rate);
            return std::min(seg_start + dt, seg_end);
        }
        raw += seg_amount;
    }
    return profile.end_ms;
}

QueryInput::QueryInput(const QuerySpec& spec, std::vector<const InputProfile*> profiles)
    : profiles_(std::move(profiles)),
      wind_start_ms_(spec.wind_start_ms),
      wind_end_ms_(spec.wind_end_ms) {
    if (profiles_.empty()) throw ScenarioError("query " + spec.query_id + " has no streams");
    for (const auto* p : profiles_) {
        // Arrivals exactly at the window start count as in-window; the base
        // is taken one ms before.
        const std::int64_t base = cumulative_tuples(*p, wind_start_ms_ - 1);
        const std::int64_t in_window = cumulative_tuples(*p, wind_end_ms_) - base;
        base_.push_back(base);
        in_window_.push_back(in_window);
        total_ += in_window;
        max_granule_ = std::max(max_granule_, p->granule);
    }
}

Millis QueryInput::availability_time(std::int64_t count) const {
    if (count <= 0) return wind_start_ms_;
    if (count > total_) throw NotEnoughTuplesError("query window delivers fewer tuples");
    Millis ready = wind_start_ms_;
    for (std::size_t i = 0; i < profiles_.size(); ++i) {
        // Proportional share, rounded up so every stream's part of the batch
        // has fully arrived.
        const std::int64_t share =
            total_ == 0 ? 0
                        : (count * in_window_[i] + total_ - 1) / total_;
        if (share <= 0) continue;
        ready = std::max(ready, input_time(*profiles_[i], base_[i] + share));
    }
    return ready;
}

std::int64_t QueryInput::available_at(Millis t) const {
    if (t < wind_start_ms_) return 0;
    std::int64_t avail = 0;
    for (std::size_t i = 0; i < profiles_.size(); ++i) {
        const std::int64_t now = cumulative_tuples(*profiles_[i], std::min(t, wind_end_ms_));
        avail += std::max<std::int64_t>(0, now - base_[i]);
    }
    return std::min(avail, total_);
}

Millis next_brt(const QuerySimState& state, const QueryInput& input) {
    const std::int64_t take = std::min(state.batch_size, state.pending);
    return input.availability_time(state.consumed + take);
}

double estimate_rate(const std::vector<std::pair<Millis, std::int64_t>>& arrival_log, Millis now,
                     Millis window_ms) {
    if (window_ms <= 0) throw ScenarioError("rate window must be positive");
    std::int64_t tuples = 0;
    for (const auto& [t, count] : arrival_log) {
        if (t > now - window_ms && t <= now) tuples += count;
    }
    return static_cast<double>(tuples) / ms_to_seconds(window_ms);
}

}  // namespace elastiq
