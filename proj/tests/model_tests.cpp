#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "dcin/errors.hpp"
#include "dcin/model.hpp"
#include "helpers.hpp"

using namespace dcin;
using namespace dcin::testing;

namespace {

std::unique_ptr<DcinModel> tiny_dcin(std::uint64_t seed, AblationFlags flags = {}) {
    return std::make_unique<DcinModel>(tiny_schema(), ModelDims::tiny(), flags, seed);
}

// Scalar dot product via explicit loop.
double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

std::vector<double> mat_vec_t(const Tensor& w, const Tensor& x) {
    // x (row vector, 1 x in) * w (in x out), explicit loops
    std::vector<double> out(w.cols(), 0.0);
    for (std::size_t j = 0; j < w.cols(); ++j)
        for (std::size_t k = 0; k < w.rows(); ++k) out[j] += x.data[k] * w.at(k, j);
    return out;
}

}  // namespace

TEST_CASE("attention logits match a hand-rolled query/key/rel-bias computation") {
    auto model = tiny_dcin(101);
    std::mt19937_64 rng(5);
    Session s = rand_session(model->schema(), 3, 4, rng);
    const ClickContextBlock& block = s.blocks[1];

    Tensor alpha = model->pcam_scores(block);
    const Tensor& wq = model->store().named("pcam.W_Q").value;
    const Tensor& wk = model->store().named("pcam.W_K").value;
    const auto& tables = model->tables();

    Tensor xc = tables.build_x(block.click);
    std::vector<double> q = mat_vec_t(wq, xc);
    for (std::size_t j = 0; j < block.displays.size(); ++j) {
        Tensor xd = tables.build_x(block.displays[j]);
        std::vector<double> k = mat_vec_t(wk, xd);
        const double expected = dot(q, k) + tables.embed_rel_position(block.rel_positions[j]);
        CHECK(alpha.data[j] == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("attention weights are a softmax: positive, sum to 1 within 1e-12") {
    auto model = tiny_dcin(103);
    std::mt19937_64 rng(9);
    for (int rep = 0; rep < 50; ++rep) {
        Session s = rand_session(model->schema(), 2, 5, rng);
        Tensor mu;
        model->pcam_aggregate(s.blocks[0], &mu);
        double sum = 0.0;
        for (double w : mu.data) {
            CHECK(w > 0.0);
            sum += w;
        }
        CHECK(std::abs(sum - 1.0) < 1e-12);
        Tensor alpha = model->pcam_scores(s.blocks[0]);
        Tensor ref = softmax(alpha);
        for (std::size_t j = 0; j < mu.size(); ++j)
            CHECK(mu.data[j] == doctest::Approx(ref.data[j]).epsilon(1e-14));
    }
}

TEST_CASE("shifting every attention logit by a constant leaves the weights unchanged") {
    auto model = tiny_dcin(105);
    std::mt19937_64 rng(11);
    Session s = rand_session(model->schema(), 2, 6, rng);
    Tensor mu_before;
    model->pcam_aggregate(s.blocks[0], &mu_before);
    // A constant added to the whole rel-position table shifts every logit in
    // the window by the same amount.
    Tensor& rel = model->tables().rel_pos_table().value;
    for (double& v : rel.data) v += 7.5;
    Tensor mu_after;
    model->pcam_aggregate(s.blocks[0], &mu_after);
    for (std::size_t j = 0; j < mu_before.size(); ++j)
        CHECK(mu_after.data[j] == doctest::Approx(mu_before.data[j]).epsilon(1e-12));
}

TEST_CASE("context aggregation matches the explicit weighted sum of projected displays") {
    auto model = tiny_dcin(107);
    std::mt19937_64 rng(13);
    Session s = rand_session(model->schema(), 2, 4, rng);
    const ClickContextBlock& block = s.blocks[0];
    Tensor mu;
    Tensor v = model->pcam_aggregate(block, &mu);
    const Tensor& wv = model->store().named("pcam.W_V").value;
    std::vector<double> expected(wv.cols(), 0.0);
    for (std::size_t j = 0; j < block.displays.size(); ++j) {
        Tensor xd = model->tables().build_x(block.displays[j]);
        std::vector<double> proj = mat_vec_t(wv, xd);
        for (std::size_t c = 0; c < proj.size(); ++c) expected[c] += mu.data[j] * proj[c];
    }
    REQUIRE(v.size() == expected.size());
    for (std::size_t c = 0; c < expected.size(); ++c)
        CHECK(v.data[c] == doctest::Approx(expected[c]).epsilon(1e-12));
}

TEST_CASE("interest fusion matches a hand-rolled two-layer MLP over the fused features") {
    auto model = tiny_dcin(109);
    const std::size_t xd = model->x_dim();
    Tensor xc = uniform_init(1, xd, 50, 0.5);
    Tensor v = uniform_init(1, xd, 51, 0.5);
    Tensor got = model->fcfm_fuse(xc, v);

    std::vector<double> f0;
    for (std::size_t i = 0; i < xd; ++i) f0.push_back(xc.data[i]);
    for (std::size_t i = 0; i < xd; ++i) f0.push_back(v.data[i]);
    for (std::size_t i = 0; i < xd; ++i) f0.push_back(xc.data[i] - v.data[i]);
    for (std::size_t i = 0; i < xd; ++i) f0.push_back(xc.data[i] * v.data[i]);
    const Tensor& w0 = model->store().named("fcfm.W0").value;
    const Tensor& b0 = model->store().named("fcfm.b0").value;
    const Tensor& w1 = model->store().named("fcfm.W1").value;
    const Tensor& b1 = model->store().named("fcfm.b1").value;
    REQUIRE(w0.rows() == 4 * xd);
    std::vector<double> h(w0.cols(), 0.0);
    for (std::size_t j = 0; j < w0.cols(); ++j) {
        for (std::size_t k = 0; k < w0.rows(); ++k) h[j] += f0[k] * w0.at(k, j);
        h[j] = std::max(0.0, h[j] + b0.data[j]);
    }
    std::vector<double> out(w1.cols(), 0.0);
    for (std::size_t j = 0; j < w1.cols(); ++j) {
        for (std::size_t k = 0; k < w1.rows(); ++k) out[j] += h[k] * w1.at(k, j);
        out[j] = std::max(0.0, out[j] + b1.data[j]);
    }
    REQUIRE(got.size() == out.size());
    for (std::size_t j = 0; j < out.size(); ++j)
        CHECK(got.data[j] == doctest::Approx(out[j]).epsilon(1e-12));
}

TEST_CASE("interest matching matches a hand-rolled target-softmax aggregation") {
    const std::size_t n = 5, d = 4;
    Tensor interests = uniform_init(n, d, 60, 1.0);
    Tensor target = uniform_init(1, d, 61, 1.0);
    Tensor w;
    Tensor u = DcinModel::imm_match(interests, target, &w);

    std::vector<double> logits(n);
    for (std::size_t i = 0; i < n; ++i) {
        logits[i] = 0.0;
        for (std::size_t j = 0; j < d; ++j) logits[i] += target.data[j] * interests.at(i, j);
    }
    Tensor sm = softmax(Tensor::vec(logits));
    std::vector<double> expected(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) expected[j] += sm.data[i] * interests.at(i, j);
    for (std::size_t i = 0; i < n; ++i)
        CHECK(w.data[i] == doctest::Approx(sm.data[i]).epsilon(1e-14));
    for (std::size_t j = 0; j < d; ++j)
        CHECK(u.data[j] == doctest::Approx(expected[j]).epsilon(1e-12));
}

TEST_CASE("nll: p=0.5 gives ln 2, extreme p stays finite via clamping") {
    CHECK(nll_loss(0.5, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(nll_loss(0.5, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(std::isfinite(nll_loss(0.0, 1)));
    CHECK(std::isfinite(nll_loss(1.0, 0)));
    CHECK(nll_loss(0.9, 1) < nll_loss(0.1, 1));
}

TEST_CASE("training-graph loss equals the mean per-session inference NLL") {
    for (ModelKind kind : {ModelKind::dcin, ModelKind::din, ModelKind::base}) {
        for (AblationFlags flags :
             {AblationFlags{}, AblationFlags{false, true}, AblationFlags{true, false}}) {
            if (kind != ModelKind::dcin && !(flags.use_position && flags.use_fcfm)) continue;
            auto model = make_model(kind, tiny_schema(), ModelDims::tiny(), flags, 777);
            std::mt19937_64 rng(21);
            std::vector<Session> batch;
            for (int i = 0; i < 6; ++i) batch.push_back(rand_session(model->schema(), 3, 4, rng));
            GradTape tape;
            const double graph_loss = tape.value(model->build_loss_graph(tape, batch)).data[0];
            double manual = 0.0;
            for (const Session& s : batch) manual += nll_loss(model->predict(s), s.label);
            manual /= static_cast<double>(batch.size());
            CHECK(graph_loss == doctest::Approx(manual).epsilon(1e-10));
        }
    }
}

TEST_CASE("cached-path identity: interests + matching reproduce predict exactly") {
    auto model = tiny_dcin(113);
    std::mt19937_64 rng(31);
    for (int rep = 0; rep < 20; ++rep) {
        Session s = rand_session(model->schema(), 4, 5, rng);
        Tensor interests = model->compute_interests(s.blocks);
        auto scores = model->score_from_interests(interests, s.user_id, {&s.target, 1});
        CHECK(scores[0] == doctest::Approx(model->predict(s)).epsilon(1e-14));
    }
}

TEST_CASE("interests are target-independent, scores are not") {
    auto model = tiny_dcin(115);
    std::mt19937_64 rng(33);
    Session s = rand_session(model->schema(), 3, 4, rng);
    Tensor i1 = model->compute_interests(s.blocks);
    Session s2 = s;
    s2.target = {(s.target.item_id + 1) % model->schema().item_vocab, s.target.category};
    Tensor i2 = model->compute_interests(s2.blocks);
    CHECK(i1.data == i2.data);
    CHECK(model->predict(s) != model->predict(s2));
}

TEST_CASE("gradient check: tape gradients match finite differences on random instances") {
    for (int inst = 0; inst < 6; ++inst) {
        std::mt19937_64 rng(1000 + inst);
        auto model = tiny_dcin(200 + inst);
        std::vector<Session> batch;
        for (int i = 0; i < 2; ++i) batch.push_back(rand_session(model->schema(), 2, 3, rng));
        CHECK(max_grad_rel_error(*model, batch) < 1e-4);
    }
}

TEST_CASE("gradient check holds for both ablated variants") {
    std::mt19937_64 rng(43);
    for (AblationFlags flags : {AblationFlags{false, true}, AblationFlags{true, false}}) {
        auto model = tiny_dcin(300, flags);
        std::vector<Session> batch;
        for (int i = 0; i < 2; ++i) batch.push_back(rand_session(model->schema(), 2, 3, rng));
        CHECK(max_grad_rel_error(*model, batch) < 1e-4);
    }
}

TEST_CASE("position ablation: no position parameters, narrower item representation") {
    auto full = tiny_dcin(117);
    auto nopos = tiny_dcin(117, AblationFlags{false, true});
    CHECK(nopos->x_dim() == 2 * nopos->schema().embed_dim);
    CHECK(full->x_dim() == 3 * full->schema().embed_dim);
    // The rel-position table must not influence the ablated model's scores.
    std::mt19937_64 rng(51);
    Session s = rand_session(nopos->schema(), 3, 4, rng);
    const double before = nopos->predict(s);
    nopos->tables().rel_pos_table().value.fill(123.0);
    nopos->tables().abs_pos_table().value.fill(-9.0);
    CHECK(nopos->predict(s) == before);
    // The full model does react to those tables.
    const double full_before = full->predict(s);
    full->tables().rel_pos_table().value.fill(123.0);
    CHECK(full->predict(s) != full_before);
}

TEST_CASE("fusion ablation: interests become a learned projection of the aggregate") {
    auto nofcfm = tiny_dcin(119, AblationFlags{true, false});
    std::mt19937_64 rng(53);
    Session s = rand_session(nofcfm->schema(), 2, 4, rng);
    Tensor v = nofcfm->pcam_aggregate(s.blocks[0]);
    const Tensor& proj = nofcfm->store().named("fcfm.v_proj").value;
    std::vector<double> expected = mat_vec_t(proj, v);
    Tensor interests = nofcfm->compute_interests(s.blocks);
    for (std::size_t j = 0; j < expected.size(); ++j)
        CHECK(interests.at(0, j) == doctest::Approx(expected[j]).epsilon(1e-12));
    CHECK_THROWS(nofcfm->store().named("fcfm.W0"));
}

TEST_CASE("identical seeds give identical parameters; different seeds differ") {
    auto a = tiny_dcin(900), b = tiny_dcin(900), c = tiny_dcin(901);
    REQUIRE(a->store().all().size() == b->store().all().size());
    bool any_diff = false;
    for (std::size_t i = 0; i < a->store().all().size(); ++i) {
        CHECK(a->store().at(i).value.data == b->store().at(i).value.data);
        any_diff = any_diff || a->store().at(i).value.data != c->store().at(i).value.data;
    }
    CHECK(any_diff);
}

TEST_CASE("session validation rejects malformed blocks") {
    FeatureSchema schema = tiny_schema();
    std::mt19937_64 rng(61);
    Session good = rand_session(schema, 3, 4, rng);
    CHECK_NOTHROW(validate_session(good, schema, 3, 4));

    Session wrong_n = good;
    wrong_n.blocks.pop_back();
    CHECK_THROWS_AS(validate_session(wrong_n, schema, 3, 4), ValidationError);

    Session bad_click = good;
    bad_click.blocks[0].click.abs_position = schema.max_abs_position + 50;
    CHECK_THROWS_AS(validate_session(bad_click, schema, 3, 4), ValidationError);

    Session bad_vocab = good;
    bad_vocab.blocks[1].displays[0].item.item_id = schema.item_vocab + 5;
    CHECK_THROWS_AS(validate_session(bad_vocab, schema, 3, 4), ValidationError);

    Session bad_label = good;
    bad_label.label = 3;
    CHECK_THROWS_AS(validate_session(bad_label, schema, 3, 4), ValidationError);
}

TEST_CASE("relative offsets are click position minus display position") {
    std::vector<PositionedItem> displays = {{{1, 0}, 10}, {{2, 1}, 11}, {{3, 2}, 12}};
    ClickContextBlock block = ClickContextBlock::make({{2, 1}, 11}, std::move(displays));
    CHECK(block.rel_positions == std::vector<long>{1, 0, -1});
}
