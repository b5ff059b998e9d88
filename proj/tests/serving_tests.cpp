#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <random>

#include "dcin/checkpoint.hpp"
#include "dcin/errors.hpp"
#include "dcin/serving.hpp"
#include "helpers.hpp"

using namespace dcin;
using namespace dcin::testing;

namespace {

DcinModel tiny_model(std::uint64_t seed) {
    return DcinModel(tiny_schema(), ModelDims::tiny(), {}, seed);
}

}  // namespace

TEST_CASE("cached scores equal full scores to 1e-9 across random session/target pairs") {
    DcinModel model = tiny_model(31);
    std::mt19937_64 rng(201);
    double worst = 0.0;
    for (int rep = 0; rep < 60; ++rep) {
        Session s = rand_session(model.schema(), 4, 5, rng);
        InterestCache cache = precompute_interests(model, s.blocks, s.user_id);
        for (int t = 0; t < 4; ++t) {
            ItemRef target = rand_item(model.schema(), rng);
            Session probe = s;
            probe.target = target;
            worst = std::max(worst,
                             std::abs(score_with_cache(model, cache, target) - model.predict(probe)));
        }
    }
    CHECK(worst < 1e-9);
}

TEST_CASE("batched cached scoring equals one-at-a-time cached scoring") {
    DcinModel model = tiny_model(33);
    std::mt19937_64 rng(203);
    Session s = rand_session(model.schema(), 3, 4, rng);
    InterestCache cache = precompute_interests(model, s.blocks, s.user_id);
    std::vector<ItemRef> targets;
    for (int i = 0; i < 10; ++i) targets.push_back(rand_item(model.schema(), rng));
    auto batched = score_with_cache(model, cache, targets);
    REQUIRE(batched.size() == targets.size());
    for (std::size_t i = 0; i < targets.size(); ++i)
        CHECK(batched[i] == doctest::Approx(score_with_cache(model, cache, targets[i]))
                                .epsilon(1e-14));
}

TEST_CASE("a cache from stale parameters is refused with both digests named") {
    DcinModel model = tiny_model(35);
    std::mt19937_64 rng(205);
    Session s = rand_session(model.schema(), 3, 4, rng);
    InterestCache cache = precompute_interests(model, s.blocks, s.user_id);
    CHECK_NOTHROW(score_with_cache(model, cache, s.target));
    // one optimizer-style nudge stales every prior cache
    model.store().at(0).value.data[0] += 1e-6;
    CHECK_THROWS_AS(score_with_cache(model, cache, s.target), StaleCacheError);
    try {
        score_with_cache(model, cache, s.target);
    } catch (const StaleCacheError& e) {
        const std::string msg = e.what();
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%016llx",
                      static_cast<unsigned long long>(cache.digest));
        CHECK(msg.find(buf) != std::string::npos);
    }
}

TEST_CASE("interest caches survive a save/load round-trip bit-exactly") {
    DcinModel model = tiny_model(37);
    std::mt19937_64 rng(207);
    Session s = rand_session(model.schema(), 4, 3, rng);
    InterestCache cache = precompute_interests(model, s.blocks, s.user_id);
    auto path = (std::filesystem::temp_directory_path() / "dcin_test_cache.txt").string();
    save_cache(path, cache);
    InterestCache loaded = load_cache(path);
    std::filesystem::remove(path);
    CHECK(loaded.user_id == cache.user_id);
    CHECK(loaded.digest == cache.digest);
    CHECK(loaded.interests.shape == cache.interests.shape);
    CHECK(loaded.interests.data == cache.interests.data);
}

TEST_CASE("flop counter: cached scoring cost is independent of the history length") {
    DcinModel model = tiny_model(39);
    std::mt19937_64 rng(209);
    std::vector<ItemRef> targets;
    for (int i = 0; i < 5; ++i) targets.push_back(rand_item(model.schema(), rng));

    auto cached_flops = [&](std::size_t n, std::size_t m) {
        Session s = rand_session(model.schema(), n, m, rng);
        InterestCache cache = precompute_interests(model, s.blocks, s.user_id);
        flops::reset();
        (void)score_with_cache(model, cache, targets);
        return flops::count();
    };
    auto full_flops = [&](std::size_t n, std::size_t m) {
        Session s = rand_session(model.schema(), n, m, rng);
        flops::reset();
        (void)model.predict(s);
        return flops::count();
    };

    // Window length m never touches the cached path: the count is constant.
    const auto cm2 = cached_flops(4, 2), cm5 = cached_flops(4, 5), cm8 = cached_flops(4, 8);
    CHECK(cm2 > 0);
    CHECK(cm2 == cm5);
    CHECK(cm5 == cm8);
    // The full path pays for the window every request.
    CHECK(full_flops(4, 8) > full_flops(4, 2));

    // Across history length n, only the linear IMM sliver remains.
    const auto c2 = cached_flops(2, 4), c4 = cached_flops(4, 4), c8 = cached_flops(8, 4);
    CHECK(2 * (c4 - c2) == c8 - c4);  // exactly linear, no hidden window work
    const auto f2 = full_flops(2, 4), f8 = full_flops(8, 4);
    CHECK(f8 > 3 * f2 / 2);                    // full path scales with history
    CHECK((f8 - f2) > 5 * (c8 - c2));          // cached slope is far shallower
}

TEST_CASE("flop counter instruments the dense kernels") {
    flops::reset();
    Tensor a = Tensor::full(3, 4, 1.0), b = Tensor::full(4, 5, 1.0);
    (void)matmul(a, b);
    CHECK(flops::count() == 3 * 4 * 5);  // one MAC per inner step
    flops::reset();
    CHECK(flops::count() == 0);
}

TEST_CASE("latency benchmark reports sane, internally consistent numbers") {
    DcinModel model = tiny_model(41);
    std::mt19937_64 rng(211);
    std::vector<Session> sessions;
    for (int i = 0; i < 4; ++i) sessions.push_back(rand_session(model.schema(), 4, 5, rng));
    LatencyReport r = bench_latency(model, sessions, 8, 3, 12);
    CHECK(r.candidates_per_request == 8);
    CHECK(r.measured_calls == 12);
    CHECK(r.full.p50_us > 0.0);
    CHECK(r.cached.p50_us > 0.0);
    CHECK(r.full.p95_us >= r.full.p50_us);
    CHECK(r.full.p99_us >= r.full.p95_us);
    CHECK(r.speedup_p50 == doctest::Approx(r.full.p50_us / r.cached.p50_us));
    const std::string js = r.summary_json();
    CHECK(js.find("speedup_p50") != std::string::npos);
    CHECK(r.csv().find("p50_us") != std::string::npos);
}

TEST_CASE("max_cache_deviation agrees with a direct comparison") {
    DcinModel model = tiny_model(43);
    std::mt19937_64 rng(213);
    std::vector<Session> sessions;
    for (int i = 0; i < 10; ++i) sessions.push_back(rand_session(model.schema(), 3, 4, rng));
    CHECK(max_cache_deviation(model, sessions, 5) < 1e-9);
}
