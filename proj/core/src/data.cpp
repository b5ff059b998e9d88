#include <numeric>
#include "dcin/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "dcin/embedding.hpp"
#include "dcin/errors.hpp"

namespace dcin {

using nlohmann::json;

void SyntheticConfig::validate() const {
    if (num_users < 1 || num_items < 1 || num_categories < 1)
        throw ValidationError("SyntheticConfig: all counts must be >= 1");
    if (n_clicks < 1 || m_displays < 1)
        throw ValidationError("SyntheticConfig: n_clicks and m_displays must be >= 1");
    if (page_size < m_displays)
        throw ValidationError("SyntheticConfig: page_size (" + std::to_string(page_size) +
                              ") must be >= m_displays (" + std::to_string(m_displays) + ")");
    if (beta < 0.0) throw ValidationError("SyntheticConfig: beta must be >= 0");
    if (label_noise < 0.0 || label_noise > 0.5)
        throw ValidationError("SyntheticConfig: label_noise must be in [0, 0.5]");
    if (target_ctr <= 0.0 || target_ctr >= 1.0)
        throw ValidationError("SyntheticConfig: target_ctr must be in (0, 1)");
    if (browse_ctr <= 0.0 || browse_ctr >= 1.0)
        throw ValidationError("SyntheticConfig: browse_ctr must be in (0, 1)");
    if (quality_sigma < 0.0)
        throw ValidationError("SyntheticConfig: quality_sigma must be >= 0");
    if (theme_prob < 0.0 || theme_prob > 1.0 || theme_purity < 0.0 || theme_purity > 1.0)
        throw ValidationError("SyntheticConfig: theme parameters must be in [0, 1]");
}

FeatureSchema SyntheticConfig::feature_schema() const {
    FeatureSchema s;
    s.item_vocab = num_items;
    s.category_vocab = num_categories;
    s.user_vocab = num_users;
    s.rel_range = std::max(m_displays, page_size);
    s.max_abs_position = std::max<std::size_t>(page_size, 1) - 1;
    return s;
}

GroundTruthModel::GroundTruthModel(const SyntheticConfig& cfg, ItemCatalog catalog,
                                   double logit_offset)
    : cfg_(cfg), catalog_(std::move(catalog)), offset_(logit_offset) {}

double GroundTruthModel::affinity(const UserProfile& u, std::size_t item) const {
    return u.affinity[catalog_.category[item]] + catalog_.quality[item];
}

double GroundTruthModel::logit(const UserProfile& u, std::size_t item,
                               std::span<const std::size_t> page_items, std::size_t position,
                               bool with_context) const {
    double l = cfg_.affinity_scale * affinity(u, item);
    const double rank = static_cast<double>(position % cfg_.page_size);
    l -= cfg_.beta * (rank / static_cast<double>(cfg_.page_size));
    // Impulse clicks: the first slots get clicked largely on placement, so a
    // click there says much less about the user's interests.
    l += cfg_.top_impulse * std::exp(-rank / 1.5);
    if (with_context && page_items.size() > 1) {
        // Competition is local: items displayed close to the slot draw more
        // of the user's attention than items further down the page.
        double sum = 0.0, norm = 0.0;
        for (std::size_t j = 0; j < page_items.size(); ++j) {
            if (j == position) continue;
            const double dist = std::abs(static_cast<double>(j) - static_cast<double>(position));
            const double w = std::exp(-dist / 2.0);
            sum += w * affinity(u, page_items[j]);
            norm += w;
        }
        l -= cfg_.gamma * (sum / norm);
    }
    return l + offset_;
}

double GroundTruthModel::ground_truth_ctr(const UserProfile& u, std::size_t item,
                                          std::span<const std::size_t> page_items,
                                          std::size_t position, double noise) const {
    const double l = logit(u, item, page_items, position, true) + noise;
    return 1.0 / (1.0 + std::exp(-l));
}

std::vector<PositionedItem> select_display_window(std::span<const PositionedItem> page,
                                                  std::size_t click_index, std::size_t m) {
    if (page.size() < m)
        throw ValidationError("select_display_window: page of " + std::to_string(page.size()) +
                              " items is shorter than window " + std::to_string(m));
    if (click_index >= page.size())
        throw ValidationError("select_display_window: click_index out of page");
    const std::size_t center = (m - 1) / 2;
    std::size_t start = click_index > center ? click_index - center : 0;
    start = std::min(start, page.size() - m);
    return {page.begin() + start, page.begin() + start + m};
}

ItemCatalog build_catalog(const SyntheticConfig& cfg) {
    ItemCatalog cat;
    cat.category.resize(cfg.num_items);
    cat.quality.resize(cfg.num_items);
    std::mt19937_64 rng(mix_seed(cfg.seed, 2));
    std::normal_distribution<double> q(0.0, cfg.quality_sigma);
    for (std::size_t i = 0; i < cfg.num_items; ++i) {
        cat.category[i] = i % cfg.num_categories;  // even per-category coverage
        cat.quality[i] = q(rng);
    }
    return cat;
}

UserProfile build_profile(const SyntheticConfig& cfg, std::size_t user_id) {
    UserProfile u;
    u.user_id = user_id;
    u.affinity.resize(cfg.num_categories);
    std::mt19937_64 rng(mix_seed(cfg.seed, 1000 + user_id));
    // Three-tier interest profile: a few liked categories, a few actively
    // disliked ones, and a neutral middle. Unit norm keeps affinity_scale
    // comparable across configs.
    const std::size_t liked = std::min(cfg.liked_categories, cfg.num_categories);
    const std::size_t disliked = std::min(cfg.disliked_categories, cfg.num_categories - liked);
    std::vector<std::size_t> cats(cfg.num_categories);
    std::iota(cats.begin(), cats.end(), 0);
    std::shuffle(cats.begin(), cats.end(), rng);
    for (std::size_t i = 0; i < cfg.num_categories; ++i) {
        if (i < liked)
            u.affinity[cats[i]] = 1.0;
        else if (i < liked + disliked)
            u.affinity[cats[i]] = -1.0;
        else
            u.affinity[cats[i]] = -0.05;
    }
    double norm = 0.0;
    for (double a : u.affinity) norm += a * a;
    norm = std::sqrt(norm);
    for (double& a : u.affinity) a /= norm;
    return u;
}

namespace {

// Per-category item index for themed page sampling.
std::vector<std::vector<std::size_t>> category_items(const SyntheticConfig& cfg,
                                                     const ItemCatalog& cat) {
    std::vector<std::vector<std::size_t>> by_cat(cfg.num_categories);
    for (std::size_t i = 0; i < cfg.num_items; ++i) by_cat[cat.category[i]].push_back(i);
    return by_cat;
}

struct PageDraw {
    std::vector<std::size_t> items;
    std::vector<PositionedItem> positioned;
};

PageDraw draw_page(const SyntheticConfig& cfg, const ItemCatalog& cat,
                   const std::vector<std::vector<std::size_t>>& by_cat, std::mt19937_64& rng,
                   bool allow_theme = true) {
    PageDraw page;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> any_item(0, cfg.num_items - 1);
    bool themed = allow_theme && unit(rng) < cfg.theme_prob;
    std::size_t theme = 0;
    if (themed) {
        std::uniform_int_distribution<std::size_t> any_cat(0, cfg.num_categories - 1);
        theme = any_cat(rng);
        if (by_cat[theme].empty()) themed = false;
    }
    page.items.reserve(cfg.page_size);
    for (std::size_t s = 0; s < cfg.page_size; ++s) {
        std::size_t item;
        if (themed && unit(rng) < cfg.theme_purity) {
            std::uniform_int_distribution<std::size_t> pick(0, by_cat[theme].size() - 1);
            item = by_cat[theme][pick(rng)];
        } else {
            item = any_item(rng);
        }
        page.items.push_back(item);
        page.positioned.push_back({{item, cat.category[item]}, s});
    }
    return page;
}

std::vector<ClickContextBlock> snapshot_history(const std::vector<ClickContextBlock>& history,
                                                std::size_t n, std::size_t& padded_blocks) {
    std::vector<ClickContextBlock> out;
    out.reserve(n);
    if (history.size() >= n) {
        out.assign(history.end() - n, history.end());
        return out;
    }
    // short history: repeat the earliest block at the front
    for (std::size_t i = history.size(); i < n; ++i) {
        out.push_back(history.front());
        ++padded_blocks;
    }
    out.insert(out.end(), history.begin(), history.end());
    return out;
}

// Samples a target item with the retrieval bias: liked and disliked
// categories are over-represented relative to a uniform catalog draw, which
// keeps both ends of the preference spectrum present in the label stream.
std::size_t draw_target_item(const SyntheticConfig& cfg, const UserProfile& prof,
                             const std::vector<std::vector<std::size_t>>& by_cat,
                             std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> any_item(0, cfg.num_items - 1);
    const double roll = unit(rng);
    // Tier membership is read off the normalized affinities: liked sits well
    // above zero, disliked well below, neutral close to zero.
    double want_lo = 0.0, want_hi = 0.0;
    if (roll < cfg.target_liked_prob) {
        want_lo = 0.1;
        want_hi = 1e9;
    } else if (roll < cfg.target_liked_prob + cfg.target_disliked_prob) {
        want_lo = -1e9;
        want_hi = -0.1;
    } else {
        return any_item(rng);
    }
    std::vector<std::size_t> pool_cats;
    for (std::size_t c = 0; c < cfg.num_categories; ++c)
        if (prof.affinity[c] > want_lo && prof.affinity[c] < want_hi && !by_cat[c].empty())
            pool_cats.push_back(c);
    if (pool_cats.empty()) return any_item(rng);
    std::uniform_int_distribution<std::size_t> pick_cat(0, pool_cats.size() - 1);
    const auto& pool = by_cat[pool_cats[pick_cat(rng)]];
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    return pool[pick(rng)];
}

double solve_offset(const std::vector<double>& logits, double target) {
    double lo = -12.0, hi = 12.0;
    for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        double mean = 0.0;
        for (double l : logits) mean += 1.0 / (1.0 + std::exp(-(l + mid)));
        mean /= static_cast<double>(logits.size());
        (mean < target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

double calibrate_offset(const SyntheticConfig& cfg, const ItemCatalog& catalog) {
    GroundTruthModel gt(cfg, catalog, 0.0);
    auto by_cat = category_items(cfg, catalog);
    std::mt19937_64 rng(mix_seed(cfg.seed, 7));
    std::vector<double> logits;
    const std::size_t pilot_users = std::min<std::size_t>(cfg.num_users, 200);
    for (std::size_t u = 0; u < pilot_users; ++u) {
        UserProfile prof = build_profile(cfg, u);
        // Calibrated at the standardized target impression: fixed middle
        // rank on an unthemed page, with candidates drawn through the same
        // retrieval bias that emits labels.
        const std::size_t r0 = cfg.page_size / 2;
        for (int p = 0; p < 6; ++p) {
            PageDraw page = draw_page(cfg, catalog, by_cat, rng, /*allow_theme=*/false);
            page.items[r0] = draw_target_item(cfg, prof, by_cat, rng);
            logits.push_back(gt.logit(prof, page.items[r0], page.items, r0, true));
        }
    }
    return solve_offset(logits, cfg.target_ctr);
}

double calibrate_browse_offset(const SyntheticConfig& cfg, const ItemCatalog& catalog) {
    GroundTruthModel gt(cfg, catalog, 0.0);
    auto by_cat = category_items(cfg, catalog);
    std::mt19937_64 rng(mix_seed(cfg.seed, 11));
    std::vector<double> logits;
    const std::size_t pilot_users = std::min<std::size_t>(cfg.num_users, 200);
    for (std::size_t u = 0; u < pilot_users; ++u) {
        UserProfile prof = build_profile(cfg, u);
        // Calibrated over organic feed impressions: themed/unthemed mix as
        // browsed, every rank counted.
        for (int p = 0; p < 2; ++p) {
            PageDraw page = draw_page(cfg, catalog, by_cat, rng);
            for (std::size_t s = 0; s < cfg.page_size; ++s)
                logits.push_back(gt.logit(prof, page.items[s], page.items, s, true));
        }
    }
    return solve_offset(logits, cfg.browse_ctr);
}

GeneratedData generate_sessions(const SyntheticConfig& cfg) {
    cfg.validate();
    ItemCatalog catalog = build_catalog(cfg);
    const double offset = calibrate_offset(cfg, catalog);
    const double browse_offset = calibrate_browse_offset(cfg, catalog);
    GroundTruthModel gt(cfg, catalog, offset);
    GroundTruthModel gt_browse(cfg, catalog, browse_offset);
    auto by_cat = category_items(cfg, catalog);

    GeneratedData out;
    out.stats.logit_offset = offset;
    out.stats.browse_offset = browse_offset;

    for (std::size_t uid = 0; uid < cfg.num_users; ++uid) {
        UserProfile prof = build_profile(cfg, uid);
        std::mt19937_64 rng(mix_seed(cfg.seed, 0x5e5510 + uid));  // per-user stream
        std::uniform_real_distribution<double> unit(0.0, 1.0);

        std::vector<ClickContextBlock> history;
        // With user_holdout, every fourth user contributes test sessions
        // only, so evaluation measures generalization to unseen users and
        // the models cannot lean on memorized user embeddings.
        const bool holdout = cfg.user_holdout && uid % 4 == 3;
        std::size_t train_left = holdout ? 0 : cfg.train_targets_per_user;
        std::size_t test_left = holdout ? cfg.test_targets_per_user : 0;
        if (!cfg.user_holdout) test_left = cfg.test_targets_per_user;
        std::size_t pages = 0;
        bool user_padded = false;

        while ((train_left > 0 || test_left > 0)) {
            ++pages;
            const bool warm = history.size() >= cfg.n_clicks || pages > cfg.max_warmup_pages;
            PageDraw page = draw_page(cfg, catalog, by_cat, rng);
            for (std::size_t s = 0; s < cfg.page_size; ++s) {
                const std::size_t item = page.items[s];
                const double p = gt_browse.ground_truth_ctr(prof, item, page.items, s);
                if (unit(rng) < p) {
                    history.push_back(ClickContextBlock::make(
                        page.positioned[s],
                        select_display_window(page.positioned, s, cfg.m_displays)));
                }
            }
            // Target events are standardized impressions: a fixed middle rank
            // on a fresh unthemed page, so labels carry affinity signal
            // instead of unobservable page-layout noise. They never enter the
            // click history.
            if (warm && !history.empty() && (train_left > 0 || test_left > 0)) {
                const std::size_t r0 = cfg.page_size / 2;
                PageDraw std_page = draw_page(cfg, catalog, by_cat, rng, /*allow_theme=*/false);
                // Candidate targets mimic a retrieval stage: biased toward
                // the ends of the user's preference spectrum.
                const std::size_t item = draw_target_item(cfg, prof, by_cat, rng);
                std_page.items[r0] = item;
                Session sess;
                sess.user_id = uid;
                std::size_t pad_before = out.stats.padded_blocks;
                sess.blocks = snapshot_history(history, cfg.n_clicks, out.stats.padded_blocks);
                if (out.stats.padded_blocks != pad_before) user_padded = true;
                sess.target = {item, catalog.category[item]};
                bool label = unit(rng) < gt.ground_truth_ctr(prof, item, std_page.items, r0);
                if (unit(rng) < cfg.label_noise) label = !label;
                sess.label = label ? 1 : 0;
                if (train_left > 0) {
                    --train_left;
                    out.train.push_back(std::move(sess));
                } else {
                    --test_left;
                    TargetTruth truth;
                    truth.full_logit = gt.logit(prof, item, std_page.items, r0, true);
                    truth.no_ctx_logit = gt.logit(prof, item, std_page.items, r0, false);
                    out.test_truth.push_back(truth);
                    out.test.push_back(std::move(sess));
                }
            }
            if (pages > cfg.max_warmup_pages * 4) break;  // safety for pathological configs
        }
        if (user_padded) ++out.stats.padded_sessions;
    }

    auto base_rate = [](const std::vector<Session>& v) {
        if (v.empty()) return 0.0;
        double s = 0.0;
        for (const Session& x : v) s += x.label;
        return s / static_cast<double>(v.size());
    };
    out.stats.train_sessions = out.train.size();
    out.stats.test_sessions = out.test.size();
    out.stats.train_base_rate = base_rate(out.train);
    out.stats.test_base_rate = base_rate(out.test);
    return out;
}

namespace {

void append_item(std::string& s, const PositionedItem& pi, bool with_pos) {
    s += "{\"item_id\":";
    s += std::to_string(pi.item.item_id);
    s += ",\"category\":";
    s += std::to_string(pi.item.category);
    if (with_pos) {
        s += ",\"pos\":";
        s += std::to_string(pi.abs_position);
    }
    s += "}";
}

}  // namespace

void write_sessions(const std::string& path, std::span<const Session> sessions) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ValidationError("write_sessions: cannot open " + path);
    f << kDatasetSchema << "\n";
    std::string line;
    for (const Session& s : sessions) {
        line.clear();
        line += "{\"user_id\":";
        line += std::to_string(s.user_id);
        line += ",\"blocks\":[";
        for (std::size_t i = 0; i < s.blocks.size(); ++i) {
            if (i) line += ",";
            line += "{\"click\":";
            append_item(line, s.blocks[i].click, true);
            line += ",\"displays\":[";
            for (std::size_t j = 0; j < s.blocks[i].displays.size(); ++j) {
                if (j) line += ",";
                append_item(line, s.blocks[i].displays[j], true);
            }
            line += "]}";
        }
        line += "],\"target\":";
        append_item(line, {s.target, 0}, false);
        line += ",\"label\":";
        line += std::to_string(s.label);
        line += "}\n";
        f << line;
    }
}

std::vector<Session> load_sessions(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ValidationError("load_sessions: cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) return {};  // empty file: zero sessions
    if (line != kDatasetSchema)
        throw ParseError(path + ":1: expected schema line \"" + std::string(kDatasetSchema) +
                         "\", got \"" + line + "\"");
    std::vector<Session> out;
    std::size_t lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const std::exception& e) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        try {
            Session s;
            s.user_id = j.at("user_id").get<std::size_t>();
            for (const json& jb : j.at("blocks")) {
                const json& jc = jb.at("click");
                PositionedItem click{{jc.at("item_id").get<std::size_t>(),
                                      jc.at("category").get<std::size_t>()},
                                     jc.at("pos").get<std::size_t>()};
                std::vector<PositionedItem> displays;
                for (const json& jd : jb.at("displays"))
                    displays.push_back({{jd.at("item_id").get<std::size_t>(),
                                         jd.at("category").get<std::size_t>()},
                                        jd.at("pos").get<std::size_t>()});
                s.blocks.push_back(ClickContextBlock::make(click, std::move(displays)));
            }
            s.target = {j.at("target").at("item_id").get<std::size_t>(),
                        j.at("target").at("category").get<std::size_t>()};
            s.label = j.at("label").get<int>();
            if (s.label != 0 && s.label != 1)
                throw ValidationError("label must be 0 or 1");
            if (s.blocks.empty()) throw ValidationError("session has no blocks");
            out.push_back(std::move(s));
        } catch (const json::exception& e) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
        } catch (const ValidationError& e) {
            throw ValidationError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

DatasetSplit generate_dataset(const SyntheticConfig& cfg, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    GeneratedData data = generate_sessions(cfg);
    DatasetSplit split;
    split.train_path = out_dir + "/train.jsonl";
    split.test_path = out_dir + "/test.jsonl";
    split.manifest_path = out_dir + "/manifest.json";
    write_sessions(split.train_path, data.train);
    write_sessions(split.test_path, data.test);

    json manifest;
    manifest["schema"] = kDatasetSchema;
    manifest["config"] = {{"num_users", cfg.num_users},
                          {"num_items", cfg.num_items},
                          {"num_categories", cfg.num_categories},
                          {"n_clicks", cfg.n_clicks},
                          {"m_displays", cfg.m_displays},
                          {"page_size", cfg.page_size},
                          {"affinity_scale", cfg.affinity_scale},
                          {"beta", cfg.beta},
                          {"gamma", cfg.gamma},
                          {"label_noise", cfg.label_noise},
                          {"target_ctr", cfg.target_ctr},
                          {"browse_ctr", cfg.browse_ctr},
                          {"quality_sigma", cfg.quality_sigma},
                          {"theme_prob", cfg.theme_prob},
                          {"theme_purity", cfg.theme_purity},
                          {"train_targets_per_user", cfg.train_targets_per_user},
                          {"test_targets_per_user", cfg.test_targets_per_user},
                          {"user_holdout", cfg.user_holdout},
                          {"liked_categories", cfg.liked_categories},
                          {"target_liked_prob", cfg.target_liked_prob},
                          {"target_disliked_prob", cfg.target_disliked_prob},
                          {"disliked_categories", cfg.disliked_categories},
                          {"seed", cfg.seed}};
    manifest["counts"] = {{"train_sessions", data.stats.train_sessions},
                          {"test_sessions", data.stats.test_sessions},
                          {"padded_sessions", data.stats.padded_sessions},
                          {"padded_blocks", data.stats.padded_blocks}};
    manifest["calibration"] = {{"logit_offset", data.stats.logit_offset},
                               {"browse_offset", data.stats.browse_offset},
                               {"train_base_rate", data.stats.train_base_rate},
                               {"test_base_rate", data.stats.test_base_rate}};
    std::ofstream mf(split.manifest_path);
    mf << manifest.dump(2) << "\n";
    return split;
}

BatchLoader::BatchLoader(const std::string& path, std::size_t batch_size)
    : sessions_(load_sessions(path)), batch_size_(batch_size) {
    if (batch_size_ == 0) throw ValidationError("BatchLoader: batch_size must be >= 1");
}

std::vector<Session> BatchLoader::next() {
    if (pos_ >= sessions_.size()) return {};
    const std::size_t end = std::min(pos_ + batch_size_, sessions_.size());
    std::vector<Session> batch(sessions_.begin() + pos_, sessions_.begin() + end);
    pos_ = end;
    return batch;
}

}  // namespace dcin
