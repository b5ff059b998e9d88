#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dcin/model.hpp"

namespace dcin {

inline constexpr const char* kCacheSchema = "dcin-cache/v1";

// Precomputed target-independent interests for one user, pinned to the
// checkpoint they were computed under.
struct InterestCache {
    std::size_t user_id = 0;
    Tensor interests;         // N x interest_dim
    std::uint64_t digest = 0; // param_digest of the source checkpoint
};

// Runs PCAM + FCFM only. The signature takes no target item: the cache is
// valid for any target by construction.
InterestCache precompute_interests(const DcinModel& model,
                                   std::span<const ClickContextBlock> behaviors,
                                   std::size_t user_id);

// IMM + head only. Refuses a cache whose digest does not match the model.
double score_with_cache(const DcinModel& model, const InterestCache& cache,
                        const ItemRef& target);
std::vector<double> score_with_cache(const DcinModel& model, const InterestCache& cache,
                                     std::span<const ItemRef> targets);

void save_cache(const std::string& path, const InterestCache& cache);
InterestCache load_cache(const std::string& path);

struct PathLatency {
    double p50_us = 0.0;
    double p95_us = 0.0;
    double p99_us = 0.0;
};

struct LatencyReport {
    PathLatency full;
    PathLatency cached;
    std::size_t candidates_per_request = 0;
    std::size_t n_clicks = 0;
    std::size_t m_displays = 0;
    std::size_t warmup_calls = 0;
    std::size_t measured_calls = 0;
    double speedup_p50 = 0.0;      // full p50 / cached p50
    double precompute_us = 0.0;    // one-off cost amortized across requests

    std::string csv() const;
    std::string summary_json() const;
};

// Times K-candidate requests on both paths over a pool of sessions.
// Cached-path requests score against a prebuilt cache; the one-off
// precompute cost is reported separately.
LatencyReport bench_latency(const DcinModel& model, std::span<const Session> sessions,
                            std::size_t candidates_per_request, std::size_t warmup_calls,
                            std::size_t measured_calls);

// Max |full predict - cached score| over (session, target) pairs; the
// equivalence check behind `serve-bench --verify`.
double max_cache_deviation(const DcinModel& model, std::span<const Session> sessions,
                           std::size_t targets_per_session);

}  // namespace dcin
