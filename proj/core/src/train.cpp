#include "dcin/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "dcin/errors.hpp"
#include "dcin/metrics.hpp"

namespace dcin {

void TrainConfig::validate() const {
    if (lr < 0.0) throw ValidationError("TrainConfig: lr must be >= 0");
    if (epochs < 1) throw ValidationError("TrainConfig: epochs must be >= 1");
    if (batch_size < 1) throw ValidationError("TrainConfig: batch_size must be >= 1");
    if (lr_decay <= 0.0 || lr_decay > 1.0)
        throw ValidationError("TrainConfig: lr_decay must be in (0, 1]");
    if (ema < 0.0 || ema >= 1.0) throw ValidationError("TrainConfig: ema must be in [0, 1)");
}

std::string TrainConfig::to_json() const {
    nlohmann::json j;
    j["lr"] = lr;
    j["lr_decay"] = lr_decay;
    j["ema"] = ema;
    j["train_user_embedding"] = train_user_embedding;
    j["batch_size"] = batch_size;
    j["epochs"] = epochs;
    j["seed"] = seed;
    j["model"] = kind_name(kind);
    j["use_position"] = flags.use_position;
    j["use_fcfm"] = flags.use_fcfm;
    return j.dump();
}

TrainResult train(const TrainConfig& config, const FeatureSchema& schema,
                  std::span<const Session> train_sessions, std::span<const Session> test_sessions,
                  bool verbose) {
    config.validate();
    if (train_sessions.empty()) throw ValidationError("train: empty training set");
    TrainResult result;
    result.model = make_model(config.kind, schema, config.dims, config.flags, config.seed);
    Model& model = *result.model;

    std::vector<std::size_t> order(train_sessions.size());
    std::iota(order.begin(), order.end(), 0);

    std::vector<Tensor> ema;  // shadow weights, same order as the store
    if (config.ema > 0.0)
        for (const auto& p : model.store().all()) ema.push_back(p.value);
    // evaluate (and ultimately return) the averaged weights, not the last iterate
    auto swap_ema = [&] {
        auto& ps = model.store().all();
        for (std::size_t i = 0; i < ema.size(); ++i) std::swap(ps[i].value, ema[i]);
    };

    double lr = config.lr;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        if (epoch > 1) lr *= config.lr_decay;
        std::mt19937_64 shuffle_rng(mix_seed(config.seed, 0xe90c + epoch));
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double loss_sum = 0.0;
        std::size_t seen = 0, batch_index = 0;
        std::vector<Session> batch;
        batch.reserve(config.batch_size);
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(start + config.batch_size, order.size());
            batch.clear();
            for (std::size_t i = start; i < end; ++i) batch.push_back(train_sessions[order[i]]);
            GradTape tape;
            model.store().zero_grad();
            NodeId loss = model.build_loss_graph(tape, batch);
            const double loss_val = tape.value(loss).data[0];
            if (!std::isfinite(loss_val)) {
                std::ostringstream os;
                os << "train: non-finite loss at epoch " << epoch << ", batch " << batch_index
                   << ", max |grad| " << model.store().max_abs_grad();
                throw TrainAbort(os.str());
            }
            tape.backward(loss);
            const double mg = model.store().max_abs_grad();
            if (!std::isfinite(mg)) {
                std::ostringstream os;
                os << "train: non-finite gradient at epoch " << epoch << ", batch " << batch_index
                   << ", loss " << loss_val;
                throw TrainAbort(os.str());
            }
            if (!config.train_user_embedding)
                for (auto& p : model.store().all())
                    if (p.name.size() >= 5 && p.name.substr(p.name.size() - 5) == ".user")
                        std::fill(p.grad.data.begin(), p.grad.data.end(), 0.0);
            model.store().apply_adam(lr);
            if (config.ema > 0.0) {
                const auto& ps = model.store().all();
                for (std::size_t i = 0; i < ema.size(); ++i)
                    for (std::size_t k = 0; k < ema[i].data.size(); ++k)
                        ema[i].data[k] =
                            config.ema * ema[i].data[k] + (1.0 - config.ema) * ps[i].value.data[k];
            }
            loss_sum += loss_val * static_cast<double>(batch.size());
            seen += batch.size();
            ++batch_index;
        }
        EpochLog log;
        log.epoch = epoch;
        log.train_loss = loss_sum / static_cast<double>(seen);
        log.test_auc = std::numeric_limits<double>::quiet_NaN();
        if (!test_sessions.empty()) {
            if (config.ema > 0.0) swap_ema();
            log.test_auc = evaluate(model, test_sessions).auc;
            if (config.ema > 0.0) swap_ema();
        }
        if (verbose)
            std::fprintf(stderr, "epoch %zu  train_loss %.5f  test_auc %.5f\n", log.epoch,
                         log.train_loss, log.test_auc);
        result.log.push_back(log);
    }
    if (config.ema > 0.0) swap_ema();  // returned model carries the averaged weights
    return result;
}

static std::size_t eval_threads() {
    if (const char* env = std::getenv("DCIN_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<std::size_t>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : std::min(hw, 8u);
}

std::vector<double> score_sessions(const Model& model, std::span<const Session> sessions) {
    std::vector<double> scores(sessions.size());
    const std::size_t nthreads = std::min(eval_threads(), std::max<std::size_t>(sessions.size(), 1));
    if (nthreads <= 1 || sessions.size() < 32) {
        for (std::size_t i = 0; i < sessions.size(); ++i) scores[i] = model.predict(sessions[i]);
        return scores;
    }
    std::vector<std::thread> workers;
    std::vector<std::string> errors(nthreads);
    for (std::size_t t = 0; t < nthreads; ++t) {
        workers.emplace_back([&, t] {
            try {
                for (std::size_t i = t; i < sessions.size(); i += nthreads)
                    scores[i] = model.predict(sessions[i]);
            } catch (const std::exception& e) {
                errors[t] = e.what();
            }
        });
    }
    for (auto& w : workers) w.join();
    for (const std::string& e : errors)
        if (!e.empty()) throw ValidationError("score_sessions: " + e);
    return scores;
}

EvalResult evaluate(const Model& model, std::span<const Session> sessions) {
    std::vector<double> scores = score_sessions(model, sessions);
    std::vector<int> labels(sessions.size());
    for (std::size_t i = 0; i < sessions.size(); ++i) labels[i] = sessions[i].label;
    EvalResult r;
    r.auc = auc(scores, labels);
    r.logloss = logloss(scores, labels);
    return r;
}

namespace {

struct Variant {
    std::string label;
    ModelKind kind;
    AblationFlags flags;
};

const std::vector<Variant>& suite_variants() {
    static const std::vector<Variant> v = {
        {"base", ModelKind::base, {}},
        {"din", ModelKind::din, {}},
        {"dcin", ModelKind::dcin, {}},
        {"dcin-no-position", ModelKind::dcin, {.use_position = false, .use_fcfm = true}},
        {"dcin-no-fcfm", ModelKind::dcin, {.use_position = true, .use_fcfm = false}},
    };
    return v;
}

}  // namespace

SuiteResult run_experiment_suite(const FeatureSchema& schema,
                                 std::span<const Session> train_sessions,
                                 std::span<const Session> test_sessions,
                                 std::span<const std::uint64_t> seeds, const TrainConfig& base_cfg,
                                 bool verbose) {
    if (seeds.size() < 2) throw ValidationError("run_experiment_suite: need at least 2 seeds");
    SuiteResult result;
    for (const Variant& var : suite_variants()) {
        SuiteSummary summary;
        summary.variant = var.label;
        for (std::uint64_t seed : seeds) {
            TrainConfig cfg = base_cfg;
            cfg.kind = var.kind;
            cfg.flags = var.flags;
            cfg.seed = seed;
            if (verbose) std::fprintf(stderr, "[suite] %s seed %llu\n", var.label.c_str(),
                                      static_cast<unsigned long long>(seed));
            TrainResult tr = train(cfg, schema, train_sessions, test_sessions, verbose);
            EvalResult ev = evaluate(*tr.model, test_sessions);
            result.rows.push_back({var.label, seed, ev.auc, ev.logloss});
            summary.per_seed_auc.push_back(ev.auc);
            summary.mean_auc += ev.auc;
            summary.mean_logloss += ev.logloss;
        }
        const double n = static_cast<double>(seeds.size());
        summary.mean_auc /= n;
        summary.mean_logloss /= n;
        double var_sum = 0.0;
        for (double a : summary.per_seed_auc) var_sum += (a - summary.mean_auc) * (a - summary.mean_auc);
        summary.std_auc = std::sqrt(var_sum / n);
        result.summary.push_back(std::move(summary));
    }
    const double base_auc = result.summary.front().mean_auc;
    for (SuiteSummary& s : result.summary)
        s.rela_impr_vs_base = rela_impr(s.mean_auc, base_auc);
    return result;
}

std::string suite_csv(const SuiteResult& r) {
    std::ostringstream os;
    os << "variant,seed,auc,logloss\n";
    for (const SuiteRow& row : r.rows) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%s,%llu,%.6f,%.6f\n", row.variant.c_str(),
                      static_cast<unsigned long long>(row.seed), row.auc, row.logloss);
        os << buf;
    }
    os << "\nvariant,mean_auc,std_auc,mean_logloss,rela_impr_vs_base_pct\n";
    for (const SuiteSummary& s : r.summary) {
        char buf[200];
        std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%.2f\n", s.variant.c_str(), s.mean_auc,
                      s.std_auc, s.mean_logloss, s.rela_impr_vs_base);
        os << buf;
    }
    return os.str();
}

void dump_interests(const Model& model, std::span<const Session> sessions,
                    const std::string& out_path) {
    const auto* dcin_model = dynamic_cast<const DcinModel*>(&model);
    if (!dcin_model)
        throw ValidationError("dump_interests: checkpoint kind \"" + kind_name(model.kind()) +
                              "\" is not dcin");
    std::ofstream f(out_path);
    if (!f) throw ValidationError("dump_interests: cannot open " + out_path);
    f << "dcin-interests/v1\n";
    for (std::size_t si = 0; si < sessions.size(); ++si) {
        const Session& s = sessions[si];
        Tensor pcam_w;
        Tensor interests = dcin_model->compute_interests(s.blocks, &pcam_w);
        Tensor et = dcin_model->target_embedding(s.target);
        Tensor imm_w;
        DcinModel::imm_match(interests, et, &imm_w);
        for (std::size_t ci = 0; ci < s.blocks.size(); ++ci) {
            nlohmann::json j;
            j["session"] = si;
            j["click_index"] = ci;
            j["click_item"] = s.blocks[ci].click.item.item_id;
            std::vector<double> iv(interests.data.begin() + ci * interests.cols(),
                                   interests.data.begin() + (ci + 1) * interests.cols());
            j["interest"] = iv;
            std::vector<double> pw(pcam_w.data.begin() + ci * pcam_w.cols(),
                                   pcam_w.data.begin() + (ci + 1) * pcam_w.cols());
            j["pcam_weights"] = pw;
            j["imm_weight"] = imm_w.data[ci];
            f << j.dump() << "\n";
        }
    }
}

}  // namespace dcin
