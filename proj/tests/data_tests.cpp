#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "dcin/data.hpp"
#include "dcin/errors.hpp"
#include "helpers.hpp"

using namespace dcin;
using namespace dcin::testing;

namespace {

SyntheticConfig small_config(std::uint64_t seed = 7) {
    SyntheticConfig cfg;
    cfg.num_users = 60;
    cfg.num_items = 200;
    cfg.num_categories = 10;
    cfg.n_clicks = 8;
    cfg.m_displays = 4;
    cfg.page_size = 10;
    cfg.train_targets_per_user = 2;
    cfg.test_targets_per_user = 1;
    cfg.max_warmup_pages = 60;
    cfg.seed = seed;
    return cfg;
}

std::vector<PositionedItem> make_page(std::size_t n) {
    std::vector<PositionedItem> page;
    for (std::size_t i = 0; i < n; ++i) page.push_back({{i, 0}, i});
    return page;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const char* tag) {
        path = std::filesystem::temp_directory_path() / (std::string("dcin_test_") + tag);
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const char* name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("display window keeps an interior click centered at index (m-1)/2") {
    auto page = make_page(10);
    for (std::size_t m : {3u, 4u, 5u}) {
        auto w = select_display_window(page, 5, m);
        REQUIRE(w.size() == m);
        CHECK(w[(m - 1) / 2] == page[5]);
        for (std::size_t j = 1; j < m; ++j)
            CHECK(w[j].abs_position == w[j - 1].abs_position + 1);
    }
}

TEST_CASE("display window clips and shifts at page boundaries") {
    auto page = make_page(10);
    auto front = select_display_window(page, 0, 5);
    REQUIRE(front.size() == 5);
    CHECK(front[0] == page[0]);  // shifted, not centered
    auto back = select_display_window(page, 9, 5);
    CHECK(back[4] == page[9]);
    // click always inside its window
    for (std::size_t ci = 0; ci < 10; ++ci) {
        auto w = select_display_window(page, ci, 4);
        CHECK(std::find(w.begin(), w.end(), page[ci]) != w.end());
    }
}

TEST_CASE("display window: m equal to the page takes the whole page; m=1 is the click") {
    auto page = make_page(6);
    auto all = select_display_window(page, 2, 6);
    CHECK(all.size() == 6);
    for (std::size_t i = 0; i < 6; ++i) CHECK(all[i] == page[i]);
    auto one = select_display_window(page, 4, 1);
    REQUIRE(one.size() == 1);
    CHECK(one[0] == page[4]);
}

TEST_CASE("config validation rejects impossible geometry") {
    SyntheticConfig cfg = small_config();
    CHECK_NOTHROW(cfg.validate());
    SyntheticConfig bad = cfg;
    bad.page_size = bad.m_displays - 1;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = cfg;
    bad.num_users = 0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = cfg;
    bad.target_ctr = 0.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = cfg;
    bad.theme_purity = 1.5;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("every generated session passes validation") {
    SyntheticConfig cfg = small_config();
    GeneratedData data = generate_sessions(cfg);
    FeatureSchema schema = cfg.feature_schema();
    std::size_t holdout_users = 0;
    for (std::size_t uid = 0; uid < cfg.num_users; ++uid) holdout_users += uid % 4 == 3;
    CHECK(data.train.size() == (cfg.num_users - holdout_users) * cfg.train_targets_per_user);
    CHECK(data.test.size() == holdout_users * cfg.test_targets_per_user);
    CHECK(data.test_truth.size() == data.test.size());
    for (const Session& s : data.train) validate_session(s, schema, cfg.n_clicks, cfg.m_displays);
    for (const Session& s : data.test) validate_session(s, schema, cfg.n_clicks, cfg.m_displays);
}

TEST_CASE("generation is byte-identical across repeated runs, differs across seeds") {
    TempDir dir("determinism");
    SyntheticConfig cfg = small_config(11);
    GeneratedData a = generate_sessions(cfg);
    GeneratedData b = generate_sessions(cfg);
    write_sessions(dir.file("a.jsonl"), a.train);
    write_sessions(dir.file("b.jsonl"), b.train);
    CHECK(slurp(dir.file("a.jsonl")) == slurp(dir.file("b.jsonl")));

    SyntheticConfig other = small_config(12);
    GeneratedData c = generate_sessions(other);
    write_sessions(dir.file("c.jsonl"), c.train);
    CHECK(slurp(dir.file("a.jsonl")) != slurp(dir.file("c.jsonl")));
}

TEST_CASE("calibrated base rate lands near the configured operating point") {
    SyntheticConfig cfg = small_config(13);
    cfg.num_users = 150;
    GeneratedData data = generate_sessions(cfg);
    CHECK(data.stats.train_base_rate == doctest::Approx(cfg.target_ctr).epsilon(0.30));
    CHECK(data.stats.test_base_rate > 0.05);
    CHECK(data.stats.test_base_rate < 0.60);
    // Both labels are represented in both splits.
    auto has_both = [](const std::vector<Session>& v) {
        bool pos = false, neg = false;
        for (const Session& s : v) (s.label ? pos : neg) = true;
        return pos && neg;
    };
    CHECK(has_both(data.train));
    CHECK(has_both(data.test));
}

TEST_CASE("click propensity depends on rank and on window competitiveness") {
    SyntheticConfig cfg = small_config(17);
    GroundTruthModel gt(cfg, build_catalog(cfg), 0.0);
    UserProfile u = build_profile(cfg, 0);
    // a liked-category item and pages stacked with strong vs weak competitors
    std::size_t liked_cat = 0;
    for (std::size_t c = 0; c < cfg.num_categories; ++c)
        if (u.affinity[c] > u.affinity[liked_cat]) liked_cat = c;
    std::size_t disliked_cat = 0;
    for (std::size_t c = 0; c < cfg.num_categories; ++c)
        if (u.affinity[c] < u.affinity[disliked_cat]) disliked_cat = c;
    auto items_of = [&](std::size_t cat) {
        std::vector<std::size_t> v;
        for (std::size_t i = 0; i < cfg.num_items; ++i)
            if (gt.catalog().category[i] == cat) v.push_back(i);
        return v;
    };
    auto liked_items = items_of(liked_cat);
    auto disliked_items = items_of(disliked_cat);
    REQUIRE(liked_items.size() >= cfg.page_size + 1);
    const std::size_t probe = liked_items[0];
    std::vector<std::size_t> strong_page(liked_items.begin() + 1,
                                         liked_items.begin() + 1 + cfg.page_size);
    std::vector<std::size_t> weak_page(disliked_items.begin(),
                                       disliked_items.begin() + cfg.page_size);
    strong_page[3] = probe;
    weak_page[3] = probe;
    CHECK(gt.ground_truth_ctr(u, probe, weak_page, 3) >
          gt.ground_truth_ctr(u, probe, strong_page, 3));
    CHECK(gt.ground_truth_ctr(u, probe, weak_page, 0) >
          gt.ground_truth_ctr(u, probe, weak_page, cfg.page_size - 1));
    // liked beats disliked all else equal
    CHECK(gt.ground_truth_ctr(u, probe, weak_page, 3) >
          gt.ground_truth_ctr(u, disliked_items[5], weak_page, 3));
}

TEST_CASE("standardized targets: recorded labels track the affinity oracle") {
    SyntheticConfig cfg = small_config(17);
    cfg.num_users = 400;
    cfg.test_targets_per_user = 4;
    GeneratedData data = generate_sessions(cfg);
    std::vector<double> full;
    std::vector<int> labels;
    for (std::size_t i = 0; i < data.test.size(); ++i) {
        full.push_back(data.test_truth[i].full_logit);
        labels.push_back(data.test[i].label);
    }
    CHECK(brute_force_auc(full, labels) > 0.75);
}

TEST_CASE("users denied enough organic clicks still produce full-length sessions") {
    SyntheticConfig cfg = small_config(19);
    cfg.max_warmup_pages = 2;  // guarantees padding kicks in
    GeneratedData data = generate_sessions(cfg);
    CHECK(data.stats.padded_sessions > 0);
    FeatureSchema schema = cfg.feature_schema();
    for (const Session& s : data.train) validate_session(s, schema, cfg.n_clicks, cfg.m_displays);
}

TEST_CASE("session files round-trip exactly") {
    TempDir dir("roundtrip");
    SyntheticConfig cfg = small_config(23);
    GeneratedData data = generate_sessions(cfg);
    write_sessions(dir.file("t.jsonl"), data.train);
    std::vector<Session> loaded = load_sessions(dir.file("t.jsonl"));
    REQUIRE(loaded.size() == data.train.size());
    write_sessions(dir.file("t2.jsonl"), loaded);
    CHECK(slurp(dir.file("t.jsonl")) == slurp(dir.file("t2.jsonl")));
    const Session& a = data.train[0];
    const Session& b = loaded[0];
    CHECK(a.user_id == b.user_id);
    CHECK(a.label == b.label);
    CHECK(a.target == b.target);
    CHECK(a.blocks[0].click == b.blocks[0].click);
    CHECK(a.blocks[0].displays == b.blocks[0].displays);
    CHECK(a.blocks[0].rel_positions == b.blocks[0].rel_positions);
}

TEST_CASE("loader rejects wrong schema headers and malformed lines with positions") {
    TempDir dir("badfiles");
    {
        std::ofstream out(dir.file("wrong.jsonl"));
        out << "other/v9\n";
    }
    CHECK_THROWS_WITH_AS(load_sessions(dir.file("wrong.jsonl")), doctest::Contains("other/v9"),
                         ParseError);
    {
        std::ofstream out(dir.file("trunc.jsonl"));
        out << "dcin-dataset/v1\n";
        out << "{\"user_id\":3,\n";
    }
    CHECK_THROWS_WITH_AS(load_sessions(dir.file("trunc.jsonl")), doctest::Contains("trunc.jsonl:2:"),
                         ParseError);
    CHECK_THROWS_AS(load_sessions(dir.file("missing.jsonl")), ValidationError);
}

TEST_CASE("generate_dataset writes train/test/manifest and the manifest echoes the config") {
    TempDir dir("dataset");
    SyntheticConfig cfg = small_config(29);
    DatasetSplit split = generate_dataset(cfg, dir.path.string());
    CHECK(std::filesystem::exists(split.train_path));
    CHECK(std::filesystem::exists(split.test_path));
    const std::string manifest = slurp(split.manifest_path);
    CHECK(manifest.find("\"seed\"") != std::string::npos);
    CHECK(manifest.find("dcin-dataset/v1") != std::string::npos);
    CHECK(!load_sessions(split.train_path).empty());
}

TEST_CASE("batch loader covers the file once with a final partial batch") {
    TempDir dir("batches");
    SyntheticConfig cfg = small_config(31);
    cfg.num_users = 10;  // 8 contributing train users x 2 targets
    GeneratedData data = generate_sessions(cfg);
    write_sessions(dir.file("t.jsonl"), data.train);
    BatchLoader loader(dir.file("t.jsonl"), 7);
    std::size_t total = 0;
    std::vector<std::size_t> sizes;
    for (;;) {
        auto batch = loader.next();
        if (batch.empty()) break;
        sizes.push_back(batch.size());
        total += batch.size();
    }
    CHECK(total == 16);
    CHECK(sizes == std::vector<std::size_t>{7, 7, 2});
}

TEST_CASE("user holdout keeps train and test user populations disjoint") {
    SyntheticConfig cfg = small_config(37);
    GeneratedData data = generate_sessions(cfg);
    std::set<std::size_t> train_users, test_users;
    for (const Session& s : data.train) train_users.insert(s.user_id);
    for (const Session& s : data.test) test_users.insert(s.user_id);
    for (std::size_t uid : test_users) CHECK(train_users.count(uid) == 0);

    SyntheticConfig both = small_config(37);
    both.user_holdout = false;
    GeneratedData shared = generate_sessions(both);
    CHECK(shared.train.size() == both.num_users * both.train_targets_per_user);
    CHECK(shared.test.size() == both.num_users * both.test_targets_per_user);
}
