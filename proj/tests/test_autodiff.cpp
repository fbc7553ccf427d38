#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ul/gradcheck.hpp"
#include "ul/rng.hpp"
#include "ul/tape.hpp"

using namespace ul;

namespace {

template <class S>
ArrayT<S> random_array(std::vector<int> shape, Rng& rng, double scale = 1.0) {
    ArrayT<S> a(std::move(shape));
    for (auto& x : a.v) x = static_cast<S>(rng.gauss(0.0, scale));
    return a;
}

}  // namespace

TEST_CASE("log_softmax rows") {
    Tape t;
    auto x = t.leaf(Array({2, 2}, {0.0f, 0.0f, 1000.0f, 1000.0f}));
    auto y = ops::log_softmax(t, x);
    const auto& out = t.val(y);
    const float ln2 = std::log(2.0f);
    for (float v : out.v) CHECK(v == doctest::Approx(-ln2).epsilon(1e-6));

    // random rows re-normalize
    Rng rng(3);
    Tape t2;
    auto r = t2.leaf(random_array<float>({4, 7}, rng, 3.0));
    auto ly = ops::log_softmax(t2, r);
    const auto& lv = t2.val(ly);
    for (int row = 0; row < 4; ++row) {
        double sum = 0.0;  // direct summation oracle
        for (int j = 0; j < 7; ++j) sum += std::exp(static_cast<double>(lv.v[row * 7 + j]));
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
    }
}

TEST_CASE("log_softmax rejects non-finite input") {
    Tape t;
    auto x = t.leaf(Array({2}, {1.0f, std::numeric_limits<float>::infinity()}));
    CHECK_THROWS_WITH_AS(ops::log_softmax(t, x), "non-finite logits", std::runtime_error);
}

TEST_CASE("backward identities") {
    // loss = sum(w) -> unit gradients
    {
        Tape t;
        auto w = t.leaf(Array({3}, {1.0f, -2.0f, 5.0f}), true);
        auto loss = ops::sum(t, w);
        t.backward(loss);
        for (float g : t.grad(w).v) CHECK(g == 1.0f);
    }
    // loss = 0.5 * ||w||^2 -> gradient w
    {
        Tape t;
        auto w = t.leaf(Array({4}, {0.5f, -1.5f, 2.0f, 0.0f}), true);
        auto loss = ops::scale(t, ops::sum(t, ops::mul(t, w, w)), 0.5f);
        t.backward(loss);
        const auto& wv = t.val(w);
        for (size_t i = 0; i < wv.numel(); ++i) CHECK(t.grad(w).v[i] == doctest::Approx(wv.v[i]));
    }
}

TEST_CASE("backward error contracts") {
    {
        Tape t;
        auto w = t.leaf(Array({3}, {1.0f, 2.0f, 3.0f}), true);
        CHECK_THROWS_AS(t.backward(w), std::runtime_error);  // non-scalar root
    }
    {
        Tape t;
        auto w = t.leaf(Array({3}, {1.0f, 2.0f, 3.0f}), true);
        auto loss = ops::sum(t, w);
        t.backward(loss);
        CHECK_THROWS_AS(t.backward(loss), std::runtime_error);  // repeated call without clear
        t.clear();
    }
    {
        // a poisoned node writing NaN into a parent gradient is reported by id
        Tape t;
        auto a = t.leaf(Array({2}, {1.0f, 1.0f}), true);
        auto bad = t.push(Array::scalar(1.0f), true, "poison",
                          [a](Tape& tt) { tt.grad(a).v[0] += std::nanf(""); });
        try {
            t.backward(bad);
            FAIL("expected non-finite gradient error");
        } catch (const std::runtime_error& e) {
            CHECK(std::string(e.what()).find("node 0") != std::string::npos);
        }
    }
}

TEST_CASE("forward determinism") {
    Rng rng(11);
    auto x_init = random_array<float>({3, 5}, rng);
    auto w_init = random_array<float>({5, 4}, rng);
    std::vector<float> first;
    for (int run = 0; run < 2; ++run) {
        Tape t;
        auto x = t.leaf(x_init);
        auto w = t.leaf(w_init);
        auto y = ops::log_softmax(t, ops::linear(t, x, w));
        if (run == 0) {
            first = t.val(y).v;
        } else {
            CHECK(t.val(y).v == first);  // bit-identical
        }
    }
}

TEST_CASE("finite differences on scalar square") {
    // f(w) = w^2 at w = 3: analytic 6
    LossBuilder<float> build = [](Tape& t, const std::vector<Tape::Id>& ids) {
        return ops::sum(t, ops::mul(t, ids[0], ids[0]));
    };
    const double err = finite_difference_check<float>(build, {Array::scalar(3.0f)});
    CHECK(err < 1e-4);
}

TEST_CASE("finite differences across every op") {
    // exercise embedding, positions, layer norm, attention, linear, bias,
    // relu, add, scale, log_softmax, both loss picks
    Rng rng(42);
    const int vocab = 9, d = 6, seq = 5, heads = 2;
    std::vector<int32_t> ids = {1, 7, 3, 8, 5};

    std::vector<ArrayT<double>> params;
    params.push_back(random_array<double>({vocab, d}, rng, 0.3));   // embedding table
    params.push_back(random_array<double>({seq + 2, d}, rng, 0.3)); // positions
    params.push_back(ArrayT<double>::full({d}, 1.0));               // ln gain
    params.push_back(random_array<double>({d}, rng, 0.1));          // ln bias
    params.push_back(random_array<double>({d, d}, rng, 0.4));       // wq
    params.push_back(random_array<double>({d, d}, rng, 0.4));       // wk
    params.push_back(random_array<double>({d, d}, rng, 0.4));       // wv
    params.push_back(random_array<double>({d, d}, rng, 0.4));       // ffn w
    params.push_back(random_array<double>({d}, rng, 0.2));          // bias
    params.push_back(random_array<double>({d, vocab}, rng, 0.4));   // head

    LossBuilder<double> build = [&](TapeT<double>& t, const std::vector<TapeT<double>::Id>& p) {
        auto x = ops::embedding(t, p[0], ids, 1, seq);
        x = ops::add_position(t, x, p[1]);
        auto h = ops::layer_norm(t, x, p[2], p[3]);
        auto q = ops::linear(t, h, p[4]);
        auto k = ops::linear(t, h, p[5]);
        auto v = ops::linear(t, h, p[6]);
        auto attn = ops::causal_attention(t, q, k, v, heads);
        x = ops::add(t, x, attn);
        auto f = ops::relu(t, ops::add_bias(t, ops::linear(t, x, p[7]), p[8]));
        x = ops::add(t, x, f);
        auto logits = ops::linear(t, x, p[9]);
        auto logp = ops::log_softmax(t, logits);
        auto nll = ops::pick_nll(t, logp, {{0, 0, 3}, {0, 2, 7}, {0, 4, 1}});
        auto ul = ops::pick_ul(t, logp, {{0, 1, 2, 0.5}, {0, 3, 8, 1.5}});
        return ops::add(t, ops::scale(t, nll, 0.7), ul);
    };

    // error scales as h^2 (truncation), so a smaller step isolates real bugs
    GradCheckOptions opts;
    opts.step = 1e-4;
    const double err = finite_difference_check<double>(build, params, opts);
    CHECK(err < 1e-5);
}

TEST_CASE("clamped unlikelihood stays finite") {
    // a saturated candidate: logits force p ~ 1, so 1 - p clamps at 1e-6
    Tape t;
    Array logits({1, 1, 3}, {40.0f, 0.0f, 0.0f});
    auto lp = ops::log_softmax(t, t.leaf(logits, true));
    auto ul = ops::pick_ul(t, lp, {{0, 0, 0, 1.0}});
    CHECK(t.val(ul).v[0] == doctest::Approx(-std::log(1e-6)).epsilon(1e-4));
    t.backward(ul);
    CHECK(t.grad(lp).all_finite());

    // and the double-precision gradient matches finite differences
    LossBuilder<double> build = [](TapeT<double>& tt, const std::vector<TapeT<double>::Id>& p) {
        auto lsm = ops::log_softmax(tt, p[0]);
        return ops::pick_ul(tt, lsm, {{0, 0, 0, 1.0}});
    };
    const double err = finite_difference_check<double>(
        build, {ArrayT<double>({1, 1, 3}, {40.0, 0.0, 0.0})});
    CHECK(err < 1e-6);
}

TEST_CASE("pick_ul rejects negative beta") {
    Tape t;
    auto lp = ops::log_softmax(t, t.leaf(Array({1, 1, 2}, {0.0f, 0.0f})));
    CHECK_THROWS_AS(ops::pick_ul(t, lp, {{0, 0, 0, -1.0}}), std::runtime_error);
}

TEST_CASE("dropout determinism and identity at zero") {
    Rng rng(5);
    auto x_init = random_array<float>({4, 4}, rng);
    Tape t;
    auto x = t.leaf(x_init, true);
    CHECK(ops::dropout(t, x, 0.0, rng) == x);  // rate 0 is a no-op

    Rng r1(9), r2(9);
    Tape t1, t2;
    auto a1 = ops::dropout(t1, t1.leaf(x_init), 0.5, r1);
    auto a2 = ops::dropout(t2, t2.leaf(x_init), 0.5, r2);
    CHECK(t1.val(a1).v == t2.val(a2).v);
}
