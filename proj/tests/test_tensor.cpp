#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "crys/gradcheck.hpp"
#include "crys/optim.hpp"
#include "crys/rng.hpp"
#include "crys/tensor.hpp"

using namespace crys;

namespace {

Tensor random_tensor(Rng& rng, int r, int c, double lo = -1.0, double hi = 1.0) {
    Tensor t(r, c);
    for (double& v : t.values) v = rng.uniform(lo, hi);
    return t;
}

} // namespace

TEST_CASE("affine hand cases") {
    Tape tape;
    Tensor x = Tensor::from({{1, 2}});
    Tensor w = Tensor::from({{3}, {4}});
    Tensor b = Tensor::from({{5}});
    Var vx = tape.param(x), vw = tape.param(w), vb = tape.param(b);
    Var out = tape.affine(vx, vw, vb);
    CHECK(out.scalar() == doctest::Approx(16.0).epsilon(1e-15));

    // zero weights: every row equals the bias
    Tensor x2 = Tensor::from({{1, 2}, {-3, 0.5}});
    Tensor w0 = Tensor::zeros(2, 3);
    Tensor b0 = Tensor::from({{7, -1, 2}});
    Var o2 = tape.affine(tape.param(x2), tape.param(w0), tape.param(b0));
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 3; ++j) CHECK(tape.value_of(o2).at(i, j) == b0.at(0, j));

    // identity weights, zero bias: output equals input
    Tensor wi = Tensor::zeros(2, 2);
    wi.at(0, 0) = wi.at(1, 1) = 1.0;
    Tensor bz = Tensor::zeros(1, 2);
    Var o3 = tape.affine(tape.param(x2), tape.param(wi), tape.param(bz));
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) CHECK(tape.value_of(o3).at(i, j) == x2.at(i, j));
}

TEST_CASE("affine shape mismatch names both shapes") {
    Tape tape;
    Tensor x = Tensor::zeros(1, 2), w = Tensor::zeros(3, 1), b = Tensor::zeros(1, 1);
    Var vx = tape.param(x), vw = tape.param(w), vb = tape.param(b);
    try {
        tape.affine(vx, vw, vb);
        FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
        std::string msg = e.what();
        CHECK(msg.find("[1x2]") != std::string::npos);
        CHECK(msg.find("[3x1]") != std::string::npos);
    }
}

TEST_CASE("affine is exactly linear") {
    Rng rng(3);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor x = random_tensor(rng, 4, 3), y = random_tensor(rng, 4, 3);
        Tensor w = random_tensor(rng, 3, 2);
        Tensor bz = Tensor::zeros(1, 2);
        const double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);

        Tensor mix(4, 3);
        for (long i = 0; i < mix.size(); ++i) mix.values[i] = a * x.values[i] + b * y.values[i];

        Tape tape;
        Var vzb = tape.param(bz), vw = tape.param(w);
        const Tensor& lhs = tape.value_of(tape.affine(tape.param(mix), vw, vzb));
        const Tensor& fx = tape.value_of(tape.affine(tape.param(x), vw, vzb));
        const Tensor& fy = tape.value_of(tape.affine(tape.param(y), vw, vzb));
        for (long i = 0; i < lhs.size(); ++i)
            CHECK(lhs.values[i] == doctest::Approx(a * fx.values[i] + b * fy.values[i]).epsilon(1e-12));
    }
}

TEST_CASE("activation anchors through the tape") {
    Tape tape;
    Tensor x = Tensor::from({{0.0, 20.0, -3.0}});
    Var v = tape.param(x);
    const Tensor& sg = tape.value_of(tape.activation(v, Activation::Sigmoid));
    CHECK(sg.at(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
    const Tensor& sp = tape.value_of(tape.activation(v, Activation::Softplus));
    CHECK(sp.at(0, 0) == doctest::Approx(0.6931471805599453).epsilon(1e-15));
    CHECK(sp.at(0, 1) - 20.0 < 1e-8);
    const Tensor& rl = tape.value_of(tape.activation(v, Activation::Relu));
    CHECK(rl.at(0, 2) == 0.0);
}

TEST_CASE("relu backward is an indicator away from the kink") {
    Tensor x = Tensor::from({{-2.0, -0.5, 0.5, 3.0}});
    Tape tape;
    Var v = tape.param(x);
    tape.backward(tape.sum_all(tape.activation(v, Activation::Relu)));
    CHECK(x.grad == std::vector<double>{0, 0, 1, 1});
}

TEST_CASE("adam zero gradient is a fixed point") {
    ParamStore store;
    store.add("p", Tensor::from({{1.5, -2.0}}));
    AdamHyper hyper;
    adam_step(store, hyper);
    CHECK(store.step() == 1);
    CHECK(store.at("p").values == std::vector<double>{1.5, -2.0});
}

TEST_CASE("adam matches an independent scalar trace") {
    ParamStore store;
    store.add("p", Tensor::zeros(1, 1));
    AdamHyper hyper;
    hyper.learning_rate = 1e-3;

    store.at("p").grad[0] = 1.0;
    adam_step(store, hyper);
    CHECK(std::abs(store.at("p").values[0] - -0.0009999999900000003) < 1e-12);
    CHECK(store.at("p").grad[0] == 0.0);

    store.at("p").grad[0] = 1.0;
    adam_step(store, hyper);
    CHECK(std::abs(store.at("p").values[0] - -0.001999999979999993) < 1e-12);
    CHECK(store.step() == 2);
}

TEST_CASE("adam is bit-deterministic") {
    Rng rng(19);
    ParamStore a, b;
    for (const char* name : {"w", "v"}) {
        Tensor t = random_tensor(rng, 3, 4);
        Tensor g = random_tensor(rng, 3, 4);
        t.grad = g.values;
        Tensor t2 = t;
        a.add(name, std::move(t));
        b.add(name, std::move(t2));
    }
    AdamHyper hyper;
    adam_step(a, hyper);
    adam_step(b, hyper);
    for (const char* name : {"w", "v"})
        CHECK(std::memcmp(a.at(name).values.data(), b.at(name).values.data(),
                          a.at(name).values.size() * sizeof(double)) == 0);
}

TEST_CASE("adam rejects a missing gradient buffer") {
    ParamStore store;
    store.add("p", Tensor::zeros(2, 2));
    store.at("p").grad.clear();
    AdamHyper hyper;
    CHECK_THROWS_AS(adam_step(store, hyper), StateError);
}

TEST_CASE("AdamHyper validation names the field") {
    AdamHyper h;
    h.beta1 = 1.0;
    try {
        h.validate();
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("beta1") != std::string::npos);
    }
    AdamHyper h2;
    h2.learning_rate = 0.0;
    CHECK_THROWS_AS(h2.validate(), ConfigError);
}

TEST_CASE("ParamStore rejects duplicates and unknown names") {
    ParamStore store;
    store.add("a", Tensor::zeros(1, 1));
    CHECK_THROWS_AS(store.add("a", Tensor::zeros(1, 1)), StateError);
    CHECK_THROWS_AS(store.at("missing"), StateError);
    CHECK(store.contains("a"));
    CHECK_FALSE(store.contains("b"));
}

TEST_CASE("grad_check passes a quadratic exactly and flags a corrupted rule") {
    ParamStore store;
    store.add("w", Tensor::from({{3.0, -1.0}}));

    auto quad = [&store](bool with_grad) {
        const Tensor& w = store.at("w");
        double loss = 0.0;
        for (double v : w.values) loss += v * v;
        if (with_grad)
            for (std::size_t i = 0; i < w.values.size(); ++i)
                store.at("w").grad[i] += 2.0 * w.values[i];
        return loss;
    };
    Rng rng(1);
    auto report = grad_check(store, quad, 1e-5, 1e-4, 8, rng);
    CHECK(report.pass);
    CHECK(report.finite);
    CHECK(report.samples == 2);
    CHECK(report.worst_rel_error < 1e-9);
    CHECK(report.worst_by_param.size() == 1);

    // gradient doubled: |2g - g| / max(|2g|, |g|) = 1/2
    auto corrupted = [&store](bool with_grad) {
        const Tensor& w = store.at("w");
        double loss = 0.0;
        for (double v : w.values) loss += v * v;
        if (with_grad)
            for (std::size_t i = 0; i < w.values.size(); ++i)
                store.at("w").grad[i] += 4.0 * w.values[i];
        return loss;
    };
    auto bad = grad_check(store, corrupted, 1e-5, 1e-3, 8, rng);
    CHECK_FALSE(bad.pass);
    CHECK(bad.worst_rel_error == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("grad_check reports a non-finite loss") {
    ParamStore store;
    store.add("w", Tensor::from({{1.0}}));
    auto nan_loss = [](bool) { return std::nan(""); };
    Rng rng(2);
    auto report = grad_check(store, nan_loss, 1e-5, 1e-4, 1, rng);
    CHECK_FALSE(report.finite);
    CHECK_FALSE(report.pass);
}

TEST_CASE("softmax_xent oracles") {
    {
        Tape tape;
        Tensor logits = Tensor::from({{1.0, 2.0, 3.0}});
        Var loss = tape.softmax_xent(tape.param(logits), {2});
        CHECK(loss.scalar() == doctest::Approx(0.4076059644443804).epsilon(1e-14));
    }
    {
        // uniform logits: mean cross-entropy is ln(num_classes)
        Tape tape;
        Tensor logits = Tensor::zeros(4, 3);
        Var loss = tape.softmax_xent(tape.param(logits), {0, 1, 2, 0});
        CHECK(loss.scalar() == doctest::Approx(std::log(3.0)).epsilon(1e-14));
    }
    {
        Tape tape;
        Tensor logits = Tensor::zeros(1, 3);
        Var v = tape.param(logits);
        CHECK_THROWS_AS(tape.softmax_xent(v, {5}), DomainError);
    }
}

TEST_CASE("ntxent_from_sims hand oracle") {
    Tape tape;
    Tensor sims = Tensor::from({{1, 1, 0}, {1, 1, 0}, {0, 0, 1}});
    auto out = tape.ntxent_from_sims(tape.param(sims), {0, 0, 1}, 1.0);
    CHECK(out.has_positives);
    CHECK(out.loss.scalar() == doctest::Approx(0.3132616875182228).epsilon(1e-14));
}

TEST_CASE("ntxent with no positive pair is constant zero") {
    Tape tape;
    Tensor sims = Tensor::from({{1, 0.3}, {0.3, 1}});
    auto out = tape.ntxent_from_sims(tape.param(sims), {0, 1}, 0.5);
    CHECK_FALSE(out.has_positives);
    CHECK(out.loss.scalar() == 0.0);
    tape.backward(out.loss);
    for (double g : sims.grad) CHECK(g == 0.0);
}

TEST_CASE("mean_rows and row_normalize reject degenerate input") {
    Tape tape;
    Tensor z = Tensor::from({{0.0, 0.0}});
    Var v = tape.param(z);
    CHECK_THROWS_AS(tape.row_normalize(v), NumericalError);
}

TEST_CASE("forward spot checks for structural ops") {
    Tape tape;
    Tensor a = Tensor::from({{1, 2}, {3, 4}, {5, 6}});
    Var va = tape.param(a);

    const Tensor& g = tape.value_of(tape.row_gather(va, {2, 0}));
    CHECK(g.at(0, 0) == 5);
    CHECK(g.at(1, 1) == 2);

    const Tensor& s = tape.value_of(tape.row_scatter_sum(va, {1, 1, 0}, 2));
    CHECK(s.at(0, 0) == 5);
    CHECK(s.at(1, 0) == 4);
    CHECK(s.at(1, 1) == 6);

    std::vector<Var> parts{va, va};
    const Tensor& c = tape.value_of(tape.concat_cols(parts));
    CHECK(c.cols == 4);
    CHECK(c.at(1, 3) == 4);

    const Tensor& sr = tape.value_of(tape.scale_rows(va, {2.0, 0.0, -1.0}));
    CHECK(sr.at(0, 1) == 4);
    CHECK(sr.at(1, 0) == 0);
    CHECK(sr.at(2, 1) == -6);

    const Tensor& mr = tape.value_of(tape.mean_rows(va));
    CHECK(mr.at(0, 0) == doctest::Approx(3.0));
    CHECK(mr.at(0, 1) == doctest::Approx(4.0));

    const Tensor& seg = tape.value_of(tape.segment_mean_rows(va, {0, 1, 3}));
    CHECK(seg.at(0, 0) == 1);
    CHECK(seg.at(1, 0) == doctest::Approx(4.0));

    const Tensor& nm = tape.value_of(tape.row_normalize(va));
    for (int i = 0; i < 3; ++i) {
        double n2 = nm.at(i, 0) * nm.at(i, 0) + nm.at(i, 1) * nm.at(i, 1);
        CHECK(n2 == doctest::Approx(1.0).epsilon(1e-12));
    }

    CHECK(tape.value_of(tape.sum_all(va)).at(0, 0) == doctest::Approx(21.0));
}

namespace {

// Composite scalar function exercising every differentiable op on the tape.
double composite_loss(ParamStore& store, const Tensor& x, bool with_grad) {
    Tape tape;
    Var vx = tape.constant(x);
    Var w1 = tape.param(store.at("w1"));
    Var b1 = tape.param(store.at("b1"));
    Var w2 = tape.param(store.at("w2"));

    Var h = tape.affine(vx, w1, b1);                       // [6 x 5]
    Var s = tape.activation(h, Activation::Sigmoid);
    Var p = tape.activation(h, Activation::Softplus);
    Var g4 = tape.scale(tape.sub(tape.add(tape.mul(s, p), h), p), 0.7);

    Var gathered = tape.row_gather(g4, {0, 2, 4, 1});      // [4 x 5]
    Var scattered = tape.row_scatter_sum(g4, {0, 1, 0, 2, 1, 0}, 3);
    std::vector<Var> parts{gathered, tape.row_gather(g4, {1, 1, 2, 3})};
    Var cc = tape.concat_cols(parts);                      // [4 x 10]
    Var sr = tape.scale_rows(cc, {0.5, -1.0, 2.0, 1.0});
    Var mr = tape.mean_rows(sr);                           // [1 x 10]

    Var seg = tape.segment_mean_rows(g4, {0, 2, 4, 6});    // [3 x 5]
    Var nrm = tape.row_normalize(seg);
    Var sims = tape.matmul_nt(nrm, nrm);                   // [3 x 3]
    auto nt = tape.ntxent_from_sims(sims, {0, 0, 1}, 0.5);

    Var logits = tape.matmul(seg, w2);                     // [3 x 3]
    Var xent = tape.softmax_xent(logits, {0, 2, 1});

    Var total = tape.add(tape.add(nt.loss, xent),
                         tape.add(tape.sum_all(mr), tape.sum_all(scattered)));
    double value = total.scalar();
    if (with_grad) tape.backward(total);
    return value;
}

} // namespace

TEST_CASE("every tape op passes the finite-difference check across 20 seeds") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        ParamStore store;
        store.add("w1", random_tensor(rng, 4, 5));
        store.add("b1", random_tensor(rng, 1, 5));
        store.add("w2", random_tensor(rng, 5, 3));
        Tensor x = random_tensor(rng, 6, 4);

        auto fn = [&](bool with_grad) { return composite_loss(store, x, with_grad); };
        auto report = grad_check(store, fn, 1e-5, 1e-4, 6, rng);
        CAPTURE(seed);
        CAPTURE(report.worst_param);
        CAPTURE(report.worst_rel_error);
        CHECK(report.pass);
        CHECK(report.worst_by_param.size() == 3);
    }
}

TEST_CASE("relu passes the finite-difference check away from the kink") {
    Rng rng(77);
    ParamStore store;
    Tensor t = random_tensor(rng, 3, 4);
    for (double& v : t.values) v = (v < 0 ? -1.0 : 1.0) * (0.5 + std::abs(v));
    store.add("w", std::move(t));
    auto fn = [&](bool with_grad) {
        Tape tape;
        Var v = tape.param(store.at("w"));
        Var loss = tape.sum_all(tape.mul(tape.activation(v, Activation::Relu),
                                         tape.activation(v, Activation::Sigmoid)));
        double value = loss.scalar();
        if (with_grad) tape.backward(loss);
        return value;
    };
    auto report = grad_check(store, fn, 1e-5, 1e-4, 12, rng);
    CHECK(report.pass);
}

TEST_CASE("tape evaluation is bit-deterministic") {
    Rng rng(123);
    ParamStore store;
    store.add("w1", random_tensor(rng, 4, 5));
    store.add("b1", random_tensor(rng, 1, 5));
    store.add("w2", random_tensor(rng, 5, 3));
    Tensor x = random_tensor(rng, 6, 4);

    store.zero_grads();
    double l1 = composite_loss(store, x, true);
    std::vector<std::vector<double>> grads1;
    for (const auto& name : store.names()) grads1.push_back(store.at(name).grad);

    store.zero_grads();
    double l2 = composite_loss(store, x, true);
    CHECK(std::memcmp(&l1, &l2, sizeof(double)) == 0);
    std::size_t i = 0;
    for (const auto& name : store.names()) {
        const auto& g2 = store.at(name).grad;
        CHECK(std::memcmp(grads1[i].data(), g2.data(), g2.size() * sizeof(double)) == 0);
        ++i;
    }
}

TEST_CASE("gradients accumulate across shared uses") {
    // f(w) = sum(w) + sum(w) => df/dw = 2 everywhere
    Tensor w = Tensor::from({{1.0, 2.0}});
    Tape tape;
    Var v = tape.param(w);
    Var loss = tape.add(tape.sum_all(v), tape.sum_all(v));
    tape.backward(loss);
    CHECK(w.grad == std::vector<double>{2.0, 2.0});
}
