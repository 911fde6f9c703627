#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "liclab/autograd.hpp"
#include "liclab/kernels.hpp"
#include "liclab/optim.hpp"
#include "liclab/rng.hpp"
#include "oracles.hpp"

using namespace liclab;

namespace {

Tensor random_tensor(std::vector<int> dims, Rng& rng, float scale = 1.0f) {
    Tensor t(std::move(dims));
    for (auto& v : t.data) v = rng.normal(0.0f, scale);
    return t;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
    return a.dims == b.dims && std::memcmp(a.data.data(), b.data.data(), a.data.size() * 4) == 0;
}

}  // namespace

TEST_CASE("conv2d spec examples") {
    auto x = make_const(Tensor({1, 1, 1, 1}, 2.0f));
    auto w = make_const(Tensor({1, 1, 1, 1}, 1.0f));
    auto b = make_const(Tensor({1}));
    CHECK(ops::conv2d(x, w, b, 1, 0)->value.data[0] == 2.0f);

    auto x1 = make_const(Tensor({1, 1, 3, 3}, 1.0f));
    auto w1 = make_const(Tensor({1, 1, 3, 3}, 1.0f));
    auto y = ops::conv2d(x1, w1, b, 1, 1);
    CHECK(y->value.at(0, 0, 1, 1) == 9.0f);
    CHECK(y->value.at(0, 0, 0, 0) == 4.0f);
    CHECK(y->value.at(0, 0, 0, 1) == 6.0f);
}

TEST_CASE("conv2d matches the nested-loop oracle") {
    Rng rng(42);
    Tensor x = random_tensor({2, 3, 8, 8}, rng);
    Tensor w = random_tensor({4, 3, 3, 3}, rng);
    Tensor b = random_tensor({4}, rng);
    auto y = ops::conv2d(make_const(x), make_const(w), make_const(b), 2, 1);
    Tensor ref = oracles::conv2d(x, w, b, 2, 1);
    CHECK(y->value.dims == ref.dims);
    CHECK(oracles::max_rel_err(y->value, ref) <= 1e-5);
}

TEST_CASE("conv2d rejects mismatched shapes naming the axis") {
    Rng rng(1);
    Tensor x = random_tensor({1, 2, 4, 4}, rng);
    Tensor w = random_tensor({4, 3, 3, 3}, rng);
    CHECK_THROWS_WITH_AS(ops::conv2d(make_const(x), make_const(w), nullptr, 1, 1),
                         doctest::Contains("channel axis"), DimensionError);
}

TEST_CASE("tconv2d spec examples") {
    auto x = make_const(Tensor({1, 1, 1, 1}, 1.0f));
    auto w = make_const(Tensor({1, 1, 1, 1}, 1.0f));
    auto b = make_const(Tensor({1}));
    auto y = ops::tconv2d(x, w, b, 2, 0);
    CHECK(y->value.dims == std::vector<int>{1, 1, 1, 1});
    CHECK(y->value.data[0] == 1.0f);

    auto x2 = make_const(Tensor({1, 1, 2, 2}, 1.0f));
    auto w2 = make_const(Tensor({1, 1, 2, 2}, 1.0f));
    auto y2 = ops::tconv2d(x2, w2, b, 2, 0);
    CHECK(y2->value.dims == std::vector<int>{1, 1, 4, 4});
    for (float v : y2->value.data) CHECK(v == 1.0f);
}

TEST_CASE("tconv2d matches the zero-insertion + flipped-kernel oracle") {
    Rng rng(43);
    Tensor x = random_tensor({2, 3, 5, 4}, rng);
    Tensor w = random_tensor({3, 2, 4, 4}, rng);
    Tensor b = random_tensor({2}, rng);
    auto y = ops::tconv2d(make_const(x), make_const(w), make_const(b), 2, 1);
    Tensor ref = oracles::tconv2d(x, w, b, 2, 1);
    CHECK(y->value.dims == ref.dims);
    CHECK(oracles::max_rel_err(y->value, ref) <= 1e-5);
}

TEST_CASE("gdn forward matches the scalar oracle; identity cases") {
    Rng rng(44);
    Tensor x = random_tensor({2, 4, 5, 5}, rng);
    std::vector<double> beta(4), gamma(16);
    Tensor bt({4}), gt({4, 4});
    for (int i = 0; i < 4; ++i) beta[i] = bt.data[i] = 0.5f + rng.uniform();
    for (int i = 0; i < 16; ++i) gamma[i] = gt.data[i] = rng.uniform() * 0.3f;

    auto y = ops::gdn(make_const(x), make_const(bt), make_const(gt), false);
    CHECK(oracles::max_rel_err(y->value, oracles::gdn(x, beta, gamma, false)) <= 1e-5);
    auto yi = ops::gdn(make_const(x), make_const(bt), make_const(gt), true);
    CHECK(oracles::max_rel_err(yi->value, oracles::gdn(x, beta, gamma, true)) <= 1e-5);

    // beta = 1, gamma = 0 leaves the input untouched, bit for bit.
    auto id = ops::gdn(make_const(x), make_const(Tensor({4}, 1.0f)), make_const(Tensor({4, 4})), false);
    CHECK(bit_equal(id->value, x));

    // single channel: 3 / sqrt(eps + 9) -> 1 as eps -> 0
    Tensor x1({1, 1, 1, 1}, 3.0f);
    Tensor b1({1}, 1e-12f);
    Tensor g1({1, 1}, 1.0f);
    auto y1 = ops::gdn(make_const(x1), make_const(b1), make_const(g1), false);
    CHECK(y1->value.data[0] == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("gdn rejects non-positive beta") {
    Tensor x({1, 2, 2, 2}, 1.0f);
    Tensor bt({2}, 0.0f);
    Tensor gt({2, 2}, 0.1f);
    CHECK_THROWS_AS(ops::gdn(make_const(x), make_const(bt), make_const(gt), false), ParameterDomainError);
}

TEST_CASE("parallel kernels are bit-identical to the serial reference") {
    Rng rng(45);
    const auto s = kernels::make_conv_shape(2, 5, 9, 11, 7, 3, 2, 1);
    Tensor x = random_tensor({s.batch, s.c_in, s.h_in, s.w_in}, rng);
    Tensor w = random_tensor({s.c_out, s.c_in, s.k, s.k}, rng);
    Tensor b = random_tensor({s.c_out}, rng);
    Tensor gy = random_tensor({s.batch, s.c_out, s.h_out, s.w_out}, rng);

    Tensor y1({s.batch, s.c_out, s.h_out, s.w_out}), y2 = Tensor::zeros_like(y1);
    kernels::conv2d_forward(x.data.data(), w.data.data(), b.data.data(), y1.data.data(), s);
    kernels::serial::conv2d_forward(x.data.data(), w.data.data(), b.data.data(), y2.data.data(), s);
    CHECK(bit_equal(y1, y2));

    Tensor gx1 = Tensor::zeros_like(x), gx2 = Tensor::zeros_like(x);
    kernels::conv2d_backward_input(gy.data.data(), w.data.data(), gx1.data.data(), s);
    kernels::serial::conv2d_backward_input(gy.data.data(), w.data.data(), gx2.data.data(), s);
    CHECK(bit_equal(gx1, gx2));

    Tensor gw1 = Tensor::zeros_like(w), gw2 = Tensor::zeros_like(w);
    kernels::conv2d_backward_weight(gy.data.data(), x.data.data(), gw1.data.data(), s);
    kernels::serial::conv2d_backward_weight(gy.data.data(), x.data.data(), gw2.data.data(), s);
    CHECK(bit_equal(gw1, gw2));

    const int ch = 6, spatial = 7 * 5, batch = 2;
    Tensor xa = random_tensor({batch, ch, 7, 5}, rng);
    Tensor beta({ch});
    for (auto& v : beta.data) v = 0.5f + rng.uniform();
    Tensor gamma({ch, ch});
    for (auto& v : gamma.data) v = 0.2f * rng.uniform();
    Tensor ga = random_tensor({batch, ch, 7, 5}, rng);

    Tensor f1 = Tensor::zeros_like(xa), f2 = Tensor::zeros_like(xa);
    kernels::gdn_forward(xa.data.data(), beta.data.data(), gamma.data.data(), f1.data.data(), false, batch, ch, spatial);
    kernels::serial::gdn_forward(xa.data.data(), beta.data.data(), gamma.data.data(), f2.data.data(), false, batch, ch, spatial);
    CHECK(bit_equal(f1, f2));

    Tensor gx_a = Tensor::zeros_like(xa), gb_a({ch}), gg_a({ch, ch});
    Tensor gx_b = Tensor::zeros_like(xa), gb_b({ch}), gg_b({ch, ch});
    kernels::gdn_backward(xa.data.data(), beta.data.data(), gamma.data.data(), ga.data.data(),
                          gx_a.data.data(), gb_a.data.data(), gg_a.data.data(), false, batch, ch, spatial);
    kernels::serial::gdn_backward(xa.data.data(), beta.data.data(), gamma.data.data(), ga.data.data(),
                                  gx_b.data.data(), gb_b.data.data(), gg_b.data.data(), false, batch, ch, spatial);
    CHECK(bit_equal(gx_a, gx_b));
    CHECK(bit_equal(gb_a, gb_b));
    CHECK(bit_equal(gg_a, gg_b));
}

TEST_CASE("op gradients match central differences") {
    Rng rng(46);

    SUBCASE("conv2d w.r.t. input, weight, bias") {
        auto x = make_leaf(random_tensor({1, 2, 5, 5}, rng), true);
        auto w = make_leaf(random_tensor({3, 2, 3, 3}, rng), true);
        auto b = make_leaf(random_tensor({3}, rng), true);
        std::vector<Param> params{{"x", x, true}, {"w", w, true}, {"b", b, true}};
        auto loss64 = [&]() { return oracles::conv2d_sum64(x->value, w->value, b->value, 2, 1); };
        auto grads = [&]() {
            for (auto& p : params) {
                p.node->ensure_grad();
                p.node->grad.fill(0.0f);
            }
            backward(ops::sum(ops::conv2d(x, w, b, 2, 1)));
        };
        CHECK(grad_check(loss64, grads, params) <= 1e-3);
    }

    SUBCASE("tconv2d") {
        auto x = make_leaf(random_tensor({1, 3, 4, 4}, rng), true);
        auto w = make_leaf(random_tensor({3, 2, 4, 4}, rng), true);
        auto b = make_leaf(random_tensor({2}, rng), true);
        std::vector<Param> params{{"x", x, true}, {"w", w, true}, {"b", b, true}};
        auto loss64 = [&]() { return oracles::tconv2d_sum64(x->value, w->value, b->value, 2, 1); };
        auto grads = [&]() {
            for (auto& p : params) {
                p.node->ensure_grad();
                p.node->grad.fill(0.0f);
            }
            backward(ops::sum(ops::tconv2d(x, w, b, 2, 1)));
        };
        CHECK(grad_check(loss64, grads, params) <= 1e-3);
    }

    SUBCASE("gdn w.r.t. input, beta, gamma (both directions)") {
        for (bool inverse : {false, true}) {
            auto x = make_leaf(random_tensor({1, 3, 4, 4}, rng), true);
            Tensor bt({3}), gt({3, 3});
            for (auto& v : bt.data) v = 0.6f + rng.uniform();
            for (auto& v : gt.data) v = 0.05f + 0.2f * rng.uniform();
            auto beta = make_leaf(bt, true);
            auto gamma = make_leaf(gt, true);
            std::vector<Param> params{{"x", x, true}, {"beta", beta, true}, {"gamma", gamma, true}};
            auto loss64 = [&]() {
                std::vector<double> bv(beta->value.data.begin(), beta->value.data.end());
                std::vector<double> gv(gamma->value.data.begin(), gamma->value.data.end());
                return oracles::gdn_sum64(x->value, bv, gv, inverse);
            };
            auto grads = [&]() {
                for (auto& p : params) {
                    p.node->ensure_grad();
                    p.node->grad.fill(0.0f);
                }
                backward(ops::sum(ops::gdn(x, beta, gamma, inverse)));
            };
            CHECK(grad_check(loss64, grads, params) <= 1e-3);
        }
    }
}

TEST_CASE("grad_check spec examples") {
    Rng rng(47);
    auto x = make_leaf(random_tensor({8}, rng), true);
    std::vector<Param> params{{"x", x, true}};

    SUBCASE("loss = sum(x): gradient of ones") {
        auto loss64 = [&]() {
            double s = 0.0;
            for (float v : x->value.data) s += v;
            return s;
        };
        auto grads = [&]() {
            x->ensure_grad();
            x->grad.fill(0.0f);
            backward(ops::sum(x));
        };
        CHECK(grad_check(loss64, grads, params) <= 1e-6);
        for (float g : x->grad.data) CHECK(g == 1.0f);
    }

    SUBCASE("loss = 0.5 * ||x||^2: gradient x") {
        Tensor v({2});
        v.data = {3.0f, -2.0f};
        auto xv = make_leaf(v, true);
        std::vector<Param> p2{{"x", xv, true}};
        auto loss64 = [&]() {
            double s = 0.0;
            for (float u : xv->value.data) s += 0.5 * double(u) * double(u);
            return s;
        };
        auto grads = [&]() {
            xv->ensure_grad();
            xv->grad.fill(0.0f);
            auto zeros = make_const(Tensor({2}));
            backward(ops::scale(ops::mse(xv, zeros), 1.0));  // mse = ||x||^2 / 2 here (n = 2)
        };
        CHECK(grad_check(loss64, grads, p2) <= 1e-6);
        CHECK(xv->grad.data[0] == doctest::Approx(3.0f));
        CHECK(xv->grad.data[1] == doctest::Approx(-2.0f));
    }

    SUBCASE("non-deterministic loss is rejected") {
        int calls = 0;
        auto loss64 = [&]() { return static_cast<double>(++calls); };
        CHECK_THROWS_AS(grad_check(loss64, [] {}, params), HarnessError);
    }
}

TEST_CASE("nonneg reparameterization hits exact identity points") {
    Tensor v({3});
    v.data = {1.0f, 0x1p-18f, 0.5f};
    auto out = ops::nonneg(make_leaf(v, true), 0.0f);
    CHECK(out->value.data[0] == 1.0f);   // exactly one
    CHECK(out->value.data[1] == 0.0f);   // exactly zero
    CHECK(out->value.data[2] == doctest::Approx(0.25).epsilon(1e-6));
}

TEST_CASE("adam spec examples") {
    SUBCASE("first step moves by about lr") {
        auto w = make_leaf(Tensor::scalar(1.0f), true);
        std::vector<Param> ps{{"w", w, true}};
        Adam opt(ps, 0.1f);
        opt.zero_grad();
        w->grad.data[0] = 1.0f;
        opt.step();
        CHECK(w->value.data[0] == doctest::Approx(0.9f).epsilon(1e-6));
    }

    SUBCASE("zero gradient leaves params bit-identical") {
        Rng rng(48);
        auto w = make_leaf(random_tensor({5}, rng), true);
        Tensor before = w->value;
        std::vector<Param> ps{{"w", w, true}};
        Adam opt(ps, 0.1f);
        opt.zero_grad();
        opt.step();
        CHECK(bit_equal(w->value, before));
    }

    SUBCASE("10 steps on f(w) = w^2 strictly decreases the loss") {
        auto w = make_leaf(Tensor::scalar(1.0f), true);
        std::vector<Param> ps{{"w", w, true}};
        Adam opt(ps, 0.1f);
        double prev = 1.0;
        for (int i = 0; i < 10; ++i) {
            opt.zero_grad();
            w->grad.data[0] = 2.0f * w->value.data[0];
            opt.step();
            const double loss = double(w->value.data[0]) * w->value.data[0];
            CHECK(loss < prev);
            prev = loss;
        }
    }

    SUBCASE("missing gradient on a trainable param is an error") {
        auto w = make_leaf(Tensor::scalar(1.0f), true);
        std::vector<Param> ps{{"w", w, true}};
        Adam opt(ps, 0.1f);
        CHECK_THROWS_AS(opt.step(), TrainingError);
    }

    SUBCASE("non-trainable params are never touched") {
        auto w = make_leaf(Tensor::scalar(2.0f), false);
        std::vector<Param> ps{{"w", w, false}};
        Adam opt(ps, 0.1f);
        opt.zero_grad();
        opt.step();
        CHECK(w->value.data[0] == 2.0f);
    }
}

TEST_CASE("rng is deterministic and splits independent streams") {
    Rng a(123), b(123);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng c(123);
    Rng c1 = c.fork("one"), c2 = c.fork("two");
    CHECK(c1.next_u64() != c2.next_u64());
    // uniform stays in [0, 1)
    Rng d(7);
    for (int i = 0; i < 1000; ++i) {
        const float u = d.uniform();
        CHECK(u >= 0.0f);
        CHECK(u < 1.0f);
    }
}

TEST_CASE("depthwise conv gradients and identity") {
    Rng rng(49);
    Tensor x = random_tensor({1, 3, 5, 5}, rng);

    Tensor wid({3, 1, 3, 3});
    for (int c = 0; c < 3; ++c) wid.data[(std::size_t)c * 9 + 4] = 1.0f;
    auto y = ops::depthwise_conv2d(make_const(x), make_const(wid), make_const(Tensor({3})), 1);
    CHECK(bit_equal(y->value, x));

    auto xn = make_leaf(x, true);
    auto wn = make_leaf(random_tensor({3, 1, 3, 3}, rng), true);
    auto bn = make_leaf(random_tensor({3}, rng), true);
    std::vector<Param> params{{"x", xn, true}, {"w", wn, true}, {"b", bn, true}};
    auto loss64 = [&]() {
        // depthwise = full conv with a block-diagonal kernel
        Tensor wfull({3, 3, 3, 3});
        for (int c = 0; c < 3; ++c)
            for (int k = 0; k < 9; ++k)
                wfull.data[((std::size_t)c * 3 + c) * 9 + k] = wn->value.data[(std::size_t)c * 9 + k];
        return oracles::conv2d_sum64(xn->value, wfull, bn->value, 1, 1);
    };
    auto grads = [&]() {
        for (auto& p : params) {
            p.node->ensure_grad();
            p.node->grad.fill(0.0f);
        }
        backward(ops::sum(ops::depthwise_conv2d(xn, wn, bn, 1)));
    };
    CHECK(grad_check(loss64, grads, params) <= 1e-3);
}
