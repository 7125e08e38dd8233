#include <doctest.h>

#include <cmath>
#include <vector>

#include <synthval/rng.hpp>
#include <synthval/tensor.hpp>

#include "oracle/fd.hpp"
#include "oracle/refd.hpp"

using namespace synthval;
using oracle::Params;

namespace {

Tensor random_param(Shape shape, Rng& rng, float lo = -1.0f, float hi = 1.0f) {
    Tensor t = Tensor::zeros(shape, true);
    rng.fill_uniform(t.raw(), lo, hi);
    return t;
}

constexpr double kTol = 1e-3;
constexpr double kH = 1e-5;

}  // namespace

TEST_CASE("gradients accumulate across backward calls") {
    Tensor a = Tensor::scalar(3.0f, true);
    Tensor loss = mul(a, a);
    loss.backward();
    CHECK(a.grad()[0] == doctest::Approx(6.0f));
    loss.backward();
    CHECK(a.grad()[0] == doctest::Approx(12.0f));
    a.zero_grad();
    CHECK(a.grad()[0] == 0.0f);
}

TEST_CASE("backward validates its root") {
    Rng rng(1);
    Tensor a = random_param({2, 2}, rng);
    Tensor out = add(a, a);
    CHECK_THROWS_AS(out.backward(), std::invalid_argument);  // non-scalar
    Tensor b = Tensor::scalar(1.0f);                         // no grad required
    CHECK_THROWS_AS(b.backward(), std::logic_error);
}

TEST_CASE("no gradient is computed for frozen inputs") {
    Rng rng(2);
    Tensor in = random_param({2, 4}, rng);
    Tensor w = Tensor::zeros({4, 3});  // requires_grad = false
    Rng wr(3);
    wr.fill_uniform(w.raw(), -1.0f, 1.0f);
    Tensor loss = mean(square(linear(in, w, Tensor())));
    loss.backward();
    CHECK(in.grad().size() == 8);
    double total = 0.0;
    for (float g : in.grad()) total += std::fabs(g);
    CHECK(total > 0.0);
}

TEST_CASE("elementwise gradients match finite differences") {
    Rng rng(31);
    Tensor a = random_param({3, 4}, rng, 0.2f, 1.5f);
    Tensor b = random_param({3, 4}, rng, 0.5f, 2.0f);

    Tensor loss = mean(square(add(mul(a, b), div_ew(sigmoid(a), b))));
    loss.backward();

    auto loss_d = [](const Params& p) {
        const auto num = refd::sigmoid(p.at("a"));
        refd::vecd term(num.size());
        for (size_t i = 0; i < num.size(); ++i) {
            term[i] = p.at("a")[i] * p.at("b")[i] + num[i] / p.at("b")[i];
        }
        return refd::mean(refd::square(term));
    };
    Rng probe(1);
    auto rep = oracle::compare_gradients({{"a", a}, {"b", b}}, loss_d, 12, kH, probe);
    CHECK(rep.max_rel_err < kTol);
}

TEST_CASE("silu, abs and affine gradients match finite differences") {
    Rng rng(32);
    Tensor x = random_param({5, 3}, rng, -2.0f, 2.0f);
    Tensor loss = mean(square(silu(affine(abs_ew(x), 1.5f, -0.25f))));
    loss.backward();
    auto loss_d = [](const Params& p) {
        return refd::mean(refd::square(refd::silu(refd::affine(refd::abs(p.at("x")), 1.5, -0.25))));
    };
    Rng probe(2);
    auto rep = oracle::compare_gradients({{"x", x}}, loss_d, 15, kH, probe);
    CHECK(rep.max_rel_err < kTol);
}

TEST_CASE("conv2d gradients match finite differences") {
    Rng rng(33);
    const int N = 2, H = 5, W = 4, Ci = 3, K = 3, Co = 2;
    Tensor in = random_param({N, H, W, Ci}, rng);
    Tensor w = random_param({K, K, Ci, Co}, rng, -0.5f, 0.5f);
    Tensor b = random_param({Co}, rng);

    for (int pad : {0, 1}) {
        CAPTURE(pad);
        in.zero_grad();
        w.zero_grad();
        b.zero_grad();
        Tensor loss = mean(square(conv2d(in, w, b, pad)));
        loss.backward();
        auto loss_d = [=](const Params& p) {
            return refd::mean(refd::square(
                refd::conv2d(p.at("in"), N, H, W, Ci, p.at("w"), K, K, Co, p.at("b"), pad)));
        };
        Rng probe(3 + pad);
        auto rep =
            oracle::compare_gradients({{"in", in}, {"w", w}, {"b", b}}, loss_d, 12, kH, probe);
        CHECK(rep.max_rel_err < kTol);
    }
}

TEST_CASE("group_norm gradients match finite differences") {
    Rng rng(34);
    const int N = 2, H = 3, W = 3, C = 8, G = 4;
    Tensor in = random_param({N, H, W, C}, rng, -2.0f, 2.0f);
    Tensor gamma = random_param({C}, rng, 0.5f, 1.5f);
    Tensor beta = random_param({C}, rng);
    Tensor loss = mean(square(group_norm(in, gamma, beta, G)));
    loss.backward();
    auto loss_d = [=](const Params& p) {
        return refd::mean(refd::square(
            refd::group_norm(p.at("in"), N, H, W, C, p.at("gamma"), p.at("beta"), G, 1e-5)));
    };
    Rng probe(4);
    auto rep = oracle::compare_gradients({{"in", in}, {"gamma", gamma}, {"beta", beta}}, loss_d,
                                         12, kH, probe);
    CHECK(rep.max_rel_err < kTol);
}

TEST_CASE("linear gradients match finite differences") {
    Rng rng(35);
    const int N = 3, K = 5, M = 4;
    Tensor in = random_param({N, K}, rng);
    Tensor w = random_param({K, M}, rng);
    Tensor b = random_param({M}, rng);
    Tensor loss = mean(square(linear(in, w, b)));
    loss.backward();
    auto loss_d = [=](const Params& p) {
        return refd::mean(refd::square(refd::linear(p.at("in"), N, K, p.at("w"), M, p.at("b"))));
    };
    Rng probe(5);
    auto rep = oracle::compare_gradients({{"in", in}, {"w", w}, {"b", b}}, loss_d, 15, kH, probe);
    CHECK(rep.max_rel_err < kTol);
}

TEST_CASE("embedding gradients match finite differences") {
    Rng rng(36);
    Tensor table = random_param({6, 4}, rng);
    const std::vector<int> ids = {2, 2, 5, 0};
    Tensor loss = mean(square(embedding(table, ids)));
    loss.backward();
    auto loss_d = [=](const Params& p) {
        const auto& t = p.at("table");
        refd::vecd rows;
        for (int id : ids)
            for (int e = 0; e < 4; ++e) rows.push_back(t[(size_t)id * 4 + e]);
        return refd::mean(refd::square(rows));
    };
    Rng probe(6);
    auto rep = oracle::compare_gradients({{"table", table}}, loss_d, 24, kH, probe);
    CHECK(rep.max_rel_err < kTol);
}

TEST_CASE("bag_embedding gradients match finite differences") {
    Rng rng(37);
    Tensor table = random_param({6, 4}, rng);
    const std::vector<std::vector<int>> bags = {{1, 3, 3}, {0}, {5, 2}};
    Tensor loss = mean(square(bag_embedding(table, bags)));
    loss.backward();
    auto loss_d = [=](const Params& p) {
        const auto& t = p.at("table");
        refd::vecd rows;
        for (const auto& bag : bags)
            for (int e = 0; e < 4; ++e) {
                double acc = 0.0;
                for (int id : bag) acc += t[(size_t)id * 4 + e];
                rows.push_back(acc);
            }
        return refd::mean(refd::square(rows));
    };
    Rng probe(7);
    auto rep = oracle::compare_gradients({{"table", table}}, loss_d, 24, kH, probe);
    CHECK(rep.max_rel_err < kTol);
}

TEST_CASE("resampling and concat gradients match finite differences") {
    Rng rng(38);
    const int N = 1, H = 4, W = 4, C = 3;
    Tensor a = random_param({N, H, W, C}, rng);
    Tensor v = random_param({N, C}, rng);
    Tensor loss =
        mean(square(concat_channels(upsample2x(downsample2x(broadcast_add_channels(a, v))), a)));
    loss.backward();
    auto loss_d = [=](const Params& p) {
        auto x = refd::broadcast_add_channels(p.at("a"), p.at("v"), N, (int64_t)H * W, C);
        x = refd::downsample2x(x, N, H, W, C);
        x = refd::upsample2x(x, N, H / 2, W / 2, C);
        auto cat = refd::concat_channels(x, p.at("a"), (int64_t)N * H * W, C, C);
        return refd::mean(refd::square(cat));
    };
    Rng probe(8);
    auto rep = oracle::compare_gradients({{"a", a}, {"v", v}}, loss_d, 20, kH, probe);
    CHECK(rep.max_rel_err < kTol);
}

TEST_CASE("stack_rows gradients match finite differences") {
    Rng rng(39);
    Tensor r0 = random_param({2, 3}, rng);
    Tensor r1 = random_param({2, 3}, rng);
    Tensor loss = mean(square(stack_rows({r0, r1})));
    loss.backward();
    auto loss_d = [](const Params& p) {
        refd::vecd all = p.at("r0");
        const auto& b = p.at("r1");
        all.insert(all.end(), b.begin(), b.end());
        return refd::mean(refd::square(all));
    };
    Rng probe(9);
    auto rep = oracle::compare_gradients({{"r0", r0}, {"r1", r1}}, loss_d, 12, kH, probe);
    CHECK(rep.max_rel_err < kTol);
}

TEST_CASE("a small conv network end to end matches finite differences") {
    Rng rng(40);
    const int N = 1, H = 4, W = 4, Ci = 2, Cm = 4;
    Tensor in = random_param({N, H, W, Ci}, rng);
    Tensor w1 = random_param({3, 3, Ci, Cm}, rng, -0.5f, 0.5f);
    Tensor b1 = random_param({Cm}, rng, -0.1f, 0.1f);
    Tensor gamma = random_param({Cm}, rng, 0.8f, 1.2f);
    Tensor beta = random_param({Cm}, rng, -0.1f, 0.1f);
    Tensor w2 = random_param({1, 1, Cm, 1}, rng, -0.5f, 0.5f);
    Tensor b2 = random_param({1}, rng, -0.1f, 0.1f);

    Tensor h1 = silu(group_norm(conv2d(in, w1, b1, 1), gamma, beta, 2));
    Tensor out = conv2d(upsample2x(downsample2x(h1)), w2, b2, 0);
    Tensor loss = mean(square(out));
    loss.backward();

    auto loss_d = [=](const Params& p) {
        auto h = refd::conv2d(p.at("in"), N, H, W, Ci, p.at("w1"), 3, 3, Cm, p.at("b1"), 1);
        h = refd::silu(refd::group_norm(h, N, H, W, Cm, p.at("gamma"), p.at("beta"), 2, 1e-5));
        h = refd::downsample2x(h, N, H, W, Cm);
        h = refd::upsample2x(h, N, H / 2, W / 2, Cm);
        auto o = refd::conv2d(h, N, H, W, Cm, p.at("w2"), 1, 1, 1, p.at("b2"), 0);
        return refd::mean(refd::square(o));
    };
    Rng probe(10);
    auto rep = oracle::compare_gradients({{"in", in},
                                          {"w1", w1},
                                          {"b1", b1},
                                          {"gamma", gamma},
                                          {"beta", beta},
                                          {"w2", w2},
                                          {"b2", b2}},
                                         loss_d, 10, kH, probe);
    CHECK(rep.max_rel_err < kTol);
}
