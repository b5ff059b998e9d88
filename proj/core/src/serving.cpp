#include "dcin/serving.hpp"

#include <algorithm>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "dcin/checkpoint.hpp"
#include "dcin/embedding.hpp"
#include "dcin/errors.hpp"

namespace dcin {

InterestCache precompute_interests(const DcinModel& model,
                                   std::span<const ClickContextBlock> behaviors,
                                   std::size_t user_id) {
    if (behaviors.empty()) throw ValidationError("precompute_interests: no behavior blocks");
    InterestCache cache;
    cache.user_id = user_id;
    cache.interests = model.compute_interests(behaviors);
    cache.digest = param_digest(model.store());
    return cache;
}

static void check_digest(const DcinModel& model, const InterestCache& cache) {
    const std::uint64_t now = param_digest(model.store());
    if (now != cache.digest) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%016" PRIx64 " vs %016" PRIx64, cache.digest, now);
        throw StaleCacheError(std::string("score_with_cache: cache digest mismatch (") + buf +
                              "); recompute the cache for this checkpoint");
    }
}

double score_with_cache(const DcinModel& model, const InterestCache& cache,
                        const ItemRef& target) {
    check_digest(model, cache);
    return model.score_from_interests(cache.interests, cache.user_id,
                                      std::span<const ItemRef>(&target, 1))[0];
}

std::vector<double> score_with_cache(const DcinModel& model, const InterestCache& cache,
                                     std::span<const ItemRef> targets) {
    check_digest(model, cache);
    return model.score_from_interests(cache.interests, cache.user_id, targets);
}

void save_cache(const std::string& path, const InterestCache& cache) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw ValidationError("save_cache: cannot open " + path);
    std::fprintf(f, "%s\n", kCacheSchema);
    std::fprintf(f, "user_id %zu\n", cache.user_id);
    std::fprintf(f, "digest %016" PRIx64 "\n", cache.digest);
    std::fprintf(f, "interests %zu %zu\n", cache.interests.rows(), cache.interests.cols());
    const std::size_t c = cache.interests.cols();
    for (std::size_t i = 0; i < cache.interests.size(); ++i)
        std::fprintf(f, "%a%c", cache.interests.data[i], (i + 1) % c == 0 ? '\n' : ' ');
    std::fclose(f);
}

InterestCache load_cache(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ValidationError("load_cache: cannot open " + path);
    std::string line, key;
    if (!std::getline(f, line) || line != kCacheSchema)
        throw ParseError(path + ": not a " + std::string(kCacheSchema) + " file");
    InterestCache cache;
    f >> key >> cache.user_id;
    if (key != "user_id") throw ParseError(path + ": expected user_id");
    std::string digest_hex;
    f >> key >> digest_hex;
    if (key != "digest") throw ParseError(path + ": expected digest");
    cache.digest = std::stoull(digest_hex, nullptr, 16);
    std::size_t r = 0, c = 0;
    f >> key >> r >> c;
    if (key != "interests") throw ParseError(path + ": expected interests");
    cache.interests = Tensor::zeros(r, c);
    std::string tok;
    for (double& v : cache.interests.data) {
        if (!(f >> tok)) throw ParseError(path + ": truncated interest matrix");
        char* end = nullptr;
        v = std::strtod(tok.c_str(), &end);
        if (end == tok.c_str() || *end != '\0')
            throw ParseError(path + ": bad value \"" + tok + "\" in interest matrix");
    }
    return cache;
}

std::string LatencyReport::csv() const {
    std::ostringstream os;
    os << "path,p50_us,p95_us,p99_us\n";
    char buf[160];
    std::snprintf(buf, sizeof(buf), "full,%.2f,%.2f,%.2f\n", full.p50_us, full.p95_us,
                  full.p99_us);
    os << buf;
    std::snprintf(buf, sizeof(buf), "cached,%.2f,%.2f,%.2f\n", cached.p50_us, cached.p95_us,
                  cached.p99_us);
    os << buf;
    return os.str();
}

std::string LatencyReport::summary_json() const {
    nlohmann::json j;
    j["candidates_per_request"] = candidates_per_request;
    j["n_clicks"] = n_clicks;
    j["m_displays"] = m_displays;
    j["warmup_calls"] = warmup_calls;
    j["measured_calls"] = measured_calls;
    j["full_us"] = {{"p50", full.p50_us}, {"p95", full.p95_us}, {"p99", full.p99_us}};
    j["cached_us"] = {{"p50", cached.p50_us}, {"p95", cached.p95_us}, {"p99", cached.p99_us}};
    j["precompute_us"] = precompute_us;
    j["speedup_p50"] = speedup_p50;
    return j.dump(2);
}

namespace {

PathLatency percentiles(std::vector<double>& us) {
    std::sort(us.begin(), us.end());
    auto pick = [&](double q) {
        const std::size_t i = std::min(us.size() - 1,
                                       static_cast<std::size_t>(q * static_cast<double>(us.size())));
        return us[i];
    };
    return {pick(0.50), pick(0.95), pick(0.99)};
}

std::vector<ItemRef> sample_targets(const FeatureSchema& schema, std::size_t k,
                                    std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> item(0, schema.item_vocab - 1);
    std::uniform_int_distribution<std::size_t> cat(0, schema.category_vocab - 1);
    std::vector<ItemRef> targets(k);
    for (ItemRef& t : targets) t = {item(rng), cat(rng)};
    return targets;
}

}  // namespace

LatencyReport bench_latency(const DcinModel& model, std::span<const Session> sessions,
                            std::size_t candidates_per_request, std::size_t warmup_calls,
                            std::size_t measured_calls) {
    if (candidates_per_request == 0)
        throw ContractViolation("bench_latency: candidates_per_request must be >= 1");
    if (sessions.empty()) throw ValidationError("bench_latency: no sessions");
    using clock = std::chrono::steady_clock;
    std::mt19937_64 rng(12345);

    std::vector<InterestCache> caches;
    caches.reserve(sessions.size());
    const auto pre_t0 = clock::now();
    for (const Session& s : sessions)
        caches.push_back(precompute_interests(model, s.blocks, s.user_id));
    const double precompute_total_us =
        std::chrono::duration<double, std::micro>(clock::now() - pre_t0).count();

    LatencyReport report;
    report.candidates_per_request = candidates_per_request;
    report.n_clicks = sessions[0].blocks.size();
    report.m_displays = sessions[0].blocks[0].displays.size();
    report.warmup_calls = warmup_calls;
    report.measured_calls = measured_calls;
    report.precompute_us = precompute_total_us / static_cast<double>(sessions.size());

    volatile double sink = 0.0;
    auto run_full = [&](std::size_t i) {
        const Session& s = sessions[i % sessions.size()];
        std::vector<ItemRef> targets = sample_targets(model.schema(), candidates_per_request, rng);
        double acc = 0.0;
        for (const ItemRef& t : targets) {
            Tensor interests = model.compute_interests(s.blocks);
            acc += model.score_from_interests(interests, s.user_id,
                                              std::span<const ItemRef>(&t, 1))[0];
        }
        sink = sink + acc;
    };
    auto run_cached = [&](std::size_t i) {
        const std::size_t si = i % sessions.size();
        std::vector<ItemRef> targets = sample_targets(model.schema(), candidates_per_request, rng);
        std::vector<double> scores = score_with_cache(model, caches[si], targets);
        sink = sink + scores[0];
    };

    std::vector<double> full_us, cached_us;
    full_us.reserve(measured_calls);
    cached_us.reserve(measured_calls);
    for (std::size_t i = 0; i < warmup_calls; ++i) run_cached(i);
    for (std::size_t i = 0; i < measured_calls; ++i) {
        const auto t0 = clock::now();
        run_cached(i);
        cached_us.push_back(std::chrono::duration<double, std::micro>(clock::now() - t0).count());
    }
    for (std::size_t i = 0; i < warmup_calls; ++i) run_full(i);
    for (std::size_t i = 0; i < measured_calls; ++i) {
        const auto t0 = clock::now();
        run_full(i);
        full_us.push_back(std::chrono::duration<double, std::micro>(clock::now() - t0).count());
    }

    report.cached = percentiles(cached_us);
    report.full = percentiles(full_us);
    report.speedup_p50 = report.cached.p50_us > 0.0 ? report.full.p50_us / report.cached.p50_us
                                                    : 0.0;
    return report;
}

double max_cache_deviation(const DcinModel& model, std::span<const Session> sessions,
                           std::size_t targets_per_session) {
    std::mt19937_64 rng(777);
    double max_dev = 0.0;
    for (const Session& s : sessions) {
        InterestCache cache = precompute_interests(model, s.blocks, s.user_id);
        std::vector<ItemRef> targets = sample_targets(model.schema(), targets_per_session, rng);
        std::vector<double> cached = score_with_cache(model, cache, targets);
        for (std::size_t i = 0; i < targets.size(); ++i) {
            Session full = s;
            full.target = targets[i];
            max_dev = std::max(max_dev, std::abs(model.predict(full) - cached[i]));
        }
    }
    return max_dev;
}

}  // namespace dcin
