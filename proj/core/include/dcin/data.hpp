#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dcin/schema.hpp"

namespace dcin {

inline constexpr const char* kDatasetSchema = "dcin-dataset/v1";

struct SyntheticConfig {
    std::size_t num_users = 16000;
    std::size_t num_items = 600;
    std::size_t num_categories = 30;
    std::size_t n_clicks = 12;     // behavior length kept per user
    std::size_t m_displays = 10;   // display window per click
    std::size_t page_size = 20;
    double affinity_scale = 14.0;   // a: interest-match strength
    double beta = 2.0;             // position-bias strength
    double top_impulse = 6.0;      // extra click logit at the first ranks
    double gamma = 3.0;            // context-competition strength
    double label_noise = 0.02;     // label flip rate
    double target_ctr = 0.25;      // label base rate at standardized impressions
    double browse_ctr = 0.2;      // organic CTR while browsing feed pages
    double quality_sigma = 0.05;   // item-quality spread (population-level CTR signal)
    double theme_prob = 0.5;       // chance a page is single-category themed
    std::size_t liked_categories = 4;     // interests per user profile
    std::size_t disliked_categories = 8;  // actively avoided categories
    double target_liked_prob = 0.4;       // retrieval bias toward liked categories
    double target_disliked_prob = 0.25;   // retrieval share from disliked categories
    double theme_purity = 0.85;    // themed-page fraction drawn from the theme
    std::size_t train_targets_per_user = 3;
    std::size_t test_targets_per_user = 4;
    // Hold out every fourth user for the test split (cold-start users).
    bool user_holdout = true;
    std::size_t max_warmup_pages = 120;
    std::uint64_t seed = 1;

    void validate() const;
    FeatureSchema feature_schema() const;
};

struct UserProfile {
    std::size_t user_id = 0;
    std::vector<double> affinity;  // unit-norm, one entry per category
};

struct ItemCatalog {
    std::vector<std::size_t> category;  // per item
    std::vector<double> quality;        // per item, small zero-mean
};

struct DatasetSplit {
    std::string train_path;
    std::string test_path;
    std::string manifest_path;
};

struct GenerationStats {
    std::size_t train_sessions = 0;
    std::size_t test_sessions = 0;
    std::size_t padded_sessions = 0;
    std::size_t padded_blocks = 0;
    double train_base_rate = 0.0;
    double test_base_rate = 0.0;
    double logit_offset = 0.0;
    double browse_offset = 0.0;
};

// Ground-truth scores retained per generated target so tests can compare a
// context-aware oracle against one denied the window. Never written to the
// dataset files.
struct TargetTruth {
    double full_logit = 0.0;    // affinity + position + context terms
    double no_ctx_logit = 0.0;  // context term removed
};

struct GeneratedData {
    std::vector<Session> train;
    std::vector<Session> test;
    std::vector<TargetTruth> test_truth;  // parallel to `test`
    GenerationStats stats;
};

// The ground-truth click model: interest match minus position bias minus
// context competition.
class GroundTruthModel {
public:
    GroundTruthModel(const SyntheticConfig& cfg, ItemCatalog catalog, double logit_offset);

    double affinity(const UserProfile& u, std::size_t item) const;
    // logit = a*affinity(item) - beta*rank - gamma*mean_affinity(other page
    // items) + offset + noise; probability = sigmoid(logit).
    double ground_truth_ctr(const UserProfile& u, std::size_t item,
                            std::span<const std::size_t> page_items, std::size_t position,
                            double noise = 0.0) const;
    double logit(const UserProfile& u, std::size_t item, std::span<const std::size_t> page_items,
                 std::size_t position, bool with_context) const;

    const ItemCatalog& catalog() const { return catalog_; }
    double offset() const { return offset_; }

private:
    SyntheticConfig cfg_;
    ItemCatalog catalog_;
    double offset_;
};

// Contiguous window of M page slots with the click kept at index (M-1)/2
// where page boundaries allow, clipped and shifted otherwise.
std::vector<PositionedItem> select_display_window(std::span<const PositionedItem> page,
                                                  std::size_t click_index, std::size_t m);

ItemCatalog build_catalog(const SyntheticConfig& cfg);
UserProfile build_profile(const SyntheticConfig& cfg, std::size_t user_id);
// Calibrates the logit offset so the label base rate at standardized target
// impressions hits target_ctr (pilot draws use the same retrieval bias).
double calibrate_offset(const SyntheticConfig& cfg, const ItemCatalog& catalog);
// Calibrates a separate offset so the organic browsing CTR hits browse_ctr.
double calibrate_browse_offset(const SyntheticConfig& cfg, const ItemCatalog& catalog);

// Pure function of the config. Per-user streams are derived from the seed, so
// generation is deterministic and shardable by user.
GeneratedData generate_sessions(const SyntheticConfig& cfg);
// generate_sessions + file output (train/test JSONL plus manifest).
DatasetSplit generate_dataset(const SyntheticConfig& cfg, const std::string& out_dir);

void write_sessions(const std::string& path, std::span<const Session> sessions);
std::vector<Session> load_sessions(const std::string& path);

// Streaming loader yielding fixed-size batches in file order (final partial
// batch included).
class BatchLoader {
public:
    BatchLoader(const std::string& path, std::size_t batch_size);
    // Empty result means end of file.
    std::vector<Session> next();

private:
    std::vector<Session> sessions_;
    std::size_t pos_ = 0;
    std::size_t batch_size_;
};

}  // namespace dcin
