#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dcin/model.hpp"

namespace dcin {

struct TrainConfig {
    double lr = 1e-2;
    double lr_decay = 1.0;         // per-epoch multiplier on lr (1.0 = constant)
    double ema = 0.99;             // Polyak weight averaging decay (0 = off); the
                                   // averaged weights are what gets evaluated/returned
    std::size_t batch_size = 256;
    std::size_t epochs = 5;
    // The default dataset holds out every fourth user, so a trained user-id
    // table can only memorize training labels; it stays at its zero init
    // unless explicitly enabled.
    bool train_user_embedding = false;
    std::uint64_t seed = 1;
    ModelKind kind = ModelKind::dcin;
    AblationFlags flags;
    ModelDims dims;

    void validate() const;
    std::string to_json() const;
};

struct EpochLog {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double test_auc = 0.0;  // NaN when no test set was supplied
};

struct TrainResult {
    std::unique_ptr<Model> model;
    std::vector<EpochLog> log;
};

// Mean-NLL minimization with Adam; deterministic given config.seed (fixed
// init, fixed shuffle order). NaN loss aborts with epoch/batch diagnostics.
TrainResult train(const TrainConfig& config, const FeatureSchema& schema,
                  std::span<const Session> train_sessions,
                  std::span<const Session> test_sessions,
                  bool verbose = false);

struct EvalResult {
    double auc = 0.0;
    double logloss = 0.0;
};

// Scores every session against the frozen model. Parallel across sessions,
// capped by DCIN_THREADS; reduction order is fixed.
std::vector<double> score_sessions(const Model& model, std::span<const Session> sessions);
EvalResult evaluate(const Model& model, std::span<const Session> sessions);

struct SuiteRow {
    std::string variant;
    std::uint64_t seed = 0;
    double auc = 0.0;
    double logloss = 0.0;
};

struct SuiteSummary {
    std::string variant;
    double mean_auc = 0.0;
    double std_auc = 0.0;
    double mean_logloss = 0.0;
    double rela_impr_vs_base = 0.0;
    std::vector<double> per_seed_auc;
};

struct SuiteResult {
    std::vector<SuiteRow> rows;
    std::vector<SuiteSummary> summary;  // order: base, din, dcin, dcin-no-position, dcin-no-fcfm
};

// Trains base, DIN, DCIN and both DCIN ablations per seed and aggregates.
// Asserts nothing; the acceptance tests judge the numbers.
SuiteResult run_experiment_suite(const FeatureSchema& schema,
                                 std::span<const Session> train_sessions,
                                 std::span<const Session> test_sessions,
                                 std::span<const std::uint64_t> seeds, const TrainConfig& base_cfg,
                                 bool verbose = false);

std::string suite_csv(const SuiteResult& r);

// Per-(session, click) export of interest vectors, PCAM weights and the IMM
// weight for the session target. DCIN checkpoints only.
void dump_interests(const Model& model, std::span<const Session> sessions,
                    const std::string& out_path);

}  // namespace dcin
