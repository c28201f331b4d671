#include "doctest.h"

#include <cmath>
#include <cstring>
#include <random>

#include "oracles.hpp"
#include "strokegan/nn.hpp"

using namespace strokegan;

namespace {

double rel_err(double got, double want) {
    return std::fabs(got - want) / std::max({std::fabs(got), std::fabs(want), 1e-8});
}

std::vector<double> to_vec(const Tensor& t) {
    return std::vector<double>(t.data().begin(), t.data().end());
}

} // namespace

TEST_CASE("conv2d hand examples") {
    // 3x3 ones, 2x2 ones kernel, stride 1, pad 0 -> 2x2 of 4
    Tensor x = Tensor::full({1, 3, 3, 1}, 1.0);
    Tensor w = Tensor::full({2, 2, 1, 1}, 1.0);
    Tensor out = conv2d(x, w, 1, 0);
    CHECK(out.shape() == Shape{1, 2, 2, 1});
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out.at(i) == 4.0);

    // 1x1 identity kernel
    std::mt19937_64 rng(1);
    Tensor y = Tensor::randn({2, 4, 4, 1}, rng);
    Tensor id = Tensor::full({1, 1, 1, 1}, 1.0);
    Tensor out2 = conv2d(y, id, 1, 0);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(out2.at(i) == y.at(i));
}

TEST_CASE("conv2d matches the direct-sum oracle") {
    std::mt19937_64 rng(2);
    Tensor x = Tensor::randn({1, 8, 8, 2}, rng);
    Tensor w = Tensor::randn({3, 3, 2, 4}, rng);
    Tensor got = conv2d(x, w, 2, 1);
    int oh = 0, ow = 0;
    auto want = oracles::conv2d(to_vec(x), to_vec(w), 1, 8, 8, 2, 3, 3, 4, 2, 1, oh, ow);
    REQUIRE(got.shape() == Shape{1, oh, ow, 4});
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(rel_err(got.at(i), want[i]) < 1e-12);
}

TEST_CASE("conv2d errors") {
    Tensor x = Tensor::zeros({1, 4, 4, 2});
    Tensor w_badc = Tensor::zeros({3, 3, 3, 4});
    CHECK_THROWS_AS(conv2d(x, w_badc, 1, 1), ShapeError);
    Tensor w_big = Tensor::zeros({7, 7, 2, 1});
    CHECK_THROWS_AS(conv2d(x, w_big, 1, 0), ShapeError);
}

TEST_CASE("conv_transpose2d single-tap expansion") {
    Tensor x = Tensor::full({1, 1, 1, 1}, 2.5);
    std::mt19937_64 rng(3);
    Tensor w = Tensor::randn({3, 3, 1, 1}, rng);
    Tensor out = conv_transpose2d(x, w, 2, 0);
    REQUIRE(out.shape() == Shape{1, 3, 3, 1});
    for (std::size_t i = 0; i < 9; ++i) CHECK(rel_err(out.at(i), 2.5 * w.at(i)) < 1e-14);
}

TEST_CASE("conv/conv_transpose adjoint identity") {
    std::mt19937_64 rng(4);
    struct Combo { int h, w, ci, co, k, stride, pad, out_pad; };
    // The stride/padding combinations the architecture templates use.
    std::vector<Combo> combos = {
        {8, 8, 2, 3, 3, 2, 1, 1}, {8, 8, 1, 2, 3, 1, 1, 0}, {9, 7, 2, 2, 4, 2, 1, 1},
        {8, 8, 3, 2, 7, 1, 3, 0}, {6, 6, 2, 2, 4, 1, 1, 0}, {10, 10, 1, 1, 3, 2, 1, 0},
    };
    for (const auto& c : combos) {
        CAPTURE(c.k);
        CAPTURE(c.stride);
        CAPTURE(c.pad);
        Tensor w = Tensor::randn({c.k, c.k, c.ci, c.co}, rng);
        // a lives on the conv input side; pick its size so the round trip is consistent.
        int oh = (c.h + 2 * c.pad - c.k) / c.stride + 1;
        int ow = (c.w + 2 * c.pad - c.k) / c.stride + 1;
        if ((oh - 1) * c.stride - 2 * c.pad + c.k + c.out_pad != c.h) continue; // keep aligned combos
        Tensor a = Tensor::randn({2, c.h, c.w, c.ci}, rng);
        Tensor b = Tensor::randn({2, oh, ow, c.co}, rng);
        double lhs = oracles::dot(to_vec(conv2d(a, w, c.stride, c.pad)), to_vec(b));
        double rhs = oracles::dot(to_vec(a), to_vec(conv_transpose2d(b, w, c.stride, c.pad, c.out_pad)));
        CHECK(rel_err(lhs, rhs) < 1e-10);
    }
}

TEST_CASE("generator down/up sampling restores the spatial size") {
    std::mt19937_64 rng(5);
    int h = 16, w = 16;
    Tensor x = Tensor::randn({1, h, w, 2}, rng);
    Tensor w1 = Tensor::randn({3, 3, 2, 2}, rng);
    Tensor w2 = Tensor::randn({3, 3, 2, 2}, rng);
    Tensor down1 = conv2d(x, w1, 2, 1);
    CHECK(down1.shape()[1] == h / 2);
    Tensor down2 = conv2d(down1, w2, 2, 1);
    CHECK(down2.shape()[1] == h / 4);
    Tensor up1 = conv_transpose2d(down2, w2, 2, 1, 1);
    CHECK(up1.shape()[1] == h / 2);
    Tensor up2 = conv_transpose2d(up1, w1, 2, 1, 1);
    CHECK(up2.shape()[1] == h);
    CHECK(up2.shape()[2] == w);
}

TEST_CASE("batch_norm train mode statistics") {
    std::mt19937_64 rng(6);
    Tensor x = Tensor::randn({8, 4, 4, 3}, rng);
    Tensor gamma = Tensor::full({3}, 1.0);
    Tensor beta = Tensor::zeros({3});
    Tensor rm = Tensor::zeros({3});
    Tensor rv = Tensor::full({3}, 1.0);
    Tensor out = batch_norm(x, gamma, beta, rm, rv, Mode::train);

    const int C = 3;
    std::size_t m = out.size() / C;
    for (int c = 0; c < C; ++c) {
        double mean = 0.0, var = 0.0;
        for (std::size_t i = c; i < out.size(); i += C) mean += out.at(i);
        mean /= static_cast<double>(m);
        for (std::size_t i = c; i < out.size(); i += C) {
            double d = out.at(i) - mean;
            var += d * d;
        }
        var /= static_cast<double>(m);
        CHECK(std::fabs(mean) < 1e-10);
        CHECK(std::fabs(var - 1.0) < 1e-3); // eps-induced shrinkage only
    }
}

TEST_CASE("batch_norm near-identity on already normalized input") {
    // Construct a channel with exact zero mean and unit variance.
    std::vector<double> vals;
    for (int i = 0; i < 8; ++i) vals.push_back(i % 2 == 0 ? 1.0 : -1.0);
    Tensor x = Tensor::from_data({8, 1, 1, 1}, std::move(vals));
    Tensor gamma = Tensor::full({1}, 1.0);
    Tensor beta = Tensor::zeros({1});
    Tensor rm = Tensor::zeros({1});
    Tensor rv = Tensor::full({1}, 1.0);
    Tensor out = batch_norm(x, gamma, beta, rm, rv, Mode::train);
    for (std::size_t i = 0; i < out.size(); ++i) {
        CHECK(std::fabs(out.at(i) - x.at(i)) < 1e-5);
    }
}

TEST_CASE("batch_norm gamma=0 collapses to beta") {
    std::mt19937_64 rng(7);
    Tensor x = Tensor::randn({4, 2, 2, 2}, rng);
    Tensor gamma = Tensor::zeros({2});
    Tensor beta = Tensor::full({2}, 0.25);
    Tensor rm = Tensor::zeros({2});
    Tensor rv = Tensor::full({2}, 1.0);
    Tensor out = batch_norm(x, gamma, beta, rm, rv, Mode::train);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out.at(i) == 0.25);
}

TEST_CASE("batch_norm rejects batch of 1 in train mode") {
    Tensor x = Tensor::zeros({1, 2, 2, 2});
    Tensor gamma = Tensor::full({2}, 1.0);
    Tensor beta = Tensor::zeros({2});
    Tensor rm = Tensor::zeros({2});
    Tensor rv = Tensor::full({2}, 1.0);
    CHECK_THROWS_AS(batch_norm(x, gamma, beta, rm, rv, Mode::train), ContractError);
    // eval mode is fine with a single sample
    CHECK_NOTHROW(batch_norm(x, gamma, beta, rm, rv, Mode::eval));
}

TEST_CASE("batch_norm running statistics feed eval mode") {
    std::mt19937_64 rng(8);
    Tensor gamma = Tensor::full({2}, 1.0);
    Tensor beta = Tensor::zeros({2});
    Tensor rm = Tensor::zeros({2});
    Tensor rv = Tensor::full({2}, 1.0);
    for (int step = 0; step < 50; ++step) {
        Tensor x = Tensor::randn({16, 2, 2, 2}, rng);
        batch_norm(x, gamma, beta, rm, rv, Mode::train);
    }
    // Running mean should have pulled toward 0 statistics; eval output of a
    // zero tensor stays near zero.
    Tensor zeros = Tensor::zeros({1, 2, 2, 2});
    Tensor out = batch_norm(zeros, gamma, beta, rm, rv, Mode::eval);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(std::fabs(out.at(i)) < 0.5);
}

TEST_CASE("activations") {
    Tensor x = Tensor::from_data({2}, {-1.0, 2.0});
    Tensor lr = activation(Activation::leaky_relu, x, 0.2);
    CHECK(lr.at(0) == doctest::Approx(-0.2));
    CHECK(lr.at(1) == 2.0);
    CHECK(activation(Activation::tanh, Tensor::scalar(0.0)).item() == 0.0);
    Tensor pos = Tensor::from_data({3}, {0.0, 1.0, 5.0});
    Tensor r = activation(Activation::relu, neg(pos));
    for (std::size_t i = 0; i < 3; ++i) CHECK(r.at(i) == 0.0);
}

TEST_CASE("layer op gradients match finite differences") {
    std::mt19937_64 rng(9);

    SUBCASE("conv2d w.r.t. input") {
        Tensor w = Tensor::randn({3, 3, 2, 3}, rng);
        Tensor x = Tensor::randn({2, 5, 5, 2}, rng);
        auto f = [&w](const Tensor& t) { return mean(square(conv2d(t, w, 2, 1))); };
        CHECK(grad_check(f, x, 1e-5).max_rel_err < 1e-6);
    }
    SUBCASE("conv2d w.r.t. weight") {
        Tensor x = Tensor::randn({2, 5, 5, 2}, rng);
        Tensor w = Tensor::randn({3, 3, 2, 3}, rng);
        auto f = [&x](const Tensor& t) { return mean(square(conv2d(x, t, 1, 1))); };
        CHECK(grad_check(f, w, 1e-5).max_rel_err < 1e-6);
    }
    SUBCASE("conv_transpose2d w.r.t. input and weight") {
        Tensor w = Tensor::randn({3, 3, 2, 2}, rng);
        Tensor x = Tensor::randn({1, 4, 4, 2}, rng);
        auto f = [&w](const Tensor& t) { return mean(square(conv_transpose2d(t, w, 2, 1, 1))); };
        CHECK(grad_check(f, x, 1e-5).max_rel_err < 1e-6);
        auto g = [&x](const Tensor& t) { return mean(square(conv_transpose2d(x, t, 2, 1, 1))); };
        CHECK(grad_check(g, w, 1e-5).max_rel_err < 1e-6);
    }
    SUBCASE("batch_norm train mode w.r.t. input, gamma, beta") {
        Tensor x = Tensor::randn({4, 3, 3, 2}, rng);
        Tensor gamma = Tensor::rand_uniform({2}, rng, 0.5, 1.5);
        Tensor beta = Tensor::randn({2}, rng, 0.1);
        // Weighted sum probe: mean-of-square of a normalized output is nearly
        // constant in x, which starves finite differences of signal.
        Tensor probe_w = Tensor::randn({4, 3, 3, 2}, rng);
        auto bn = [&](const Tensor& xin, const Tensor& g, const Tensor& b) {
            Tensor rm = Tensor::zeros({2});
            Tensor rv = Tensor::full({2}, 1.0);
            return sum(mul(batch_norm(xin, g, b, rm, rv, Mode::train), probe_w));
        };
        CHECK(grad_check([&](const Tensor& t) { return bn(t, gamma, beta); }, x, 1e-5).max_rel_err < 1e-5);
        CHECK(grad_check([&](const Tensor& t) { return bn(x, t, beta); }, gamma, 1e-5).max_rel_err < 1e-5);
        CHECK(grad_check([&](const Tensor& t) { return bn(x, gamma, t); }, beta, 1e-5).max_rel_err < 1e-5);
    }
    SUBCASE("leaky_relu away from the kink") {
        Tensor x = Tensor::rand_uniform({12}, rng, 0.2, 1.0);
        Tensor sign = Tensor::from_data({12}, {1, -1, 1, -1, 1, -1, 1, -1, 1, -1, 1, -1});
        Tensor probe = mul(x, sign);
        auto f = [](const Tensor& t) { return sum(leaky_relu(t, 0.2)); };
        CHECK(grad_check(f, probe, 1e-6).max_rel_err < 1e-6);
    }
}

TEST_CASE("paper-scale specs reproduce the appendix shape rows symbolically") {
    NetworkSpec g = generator_spec(128, 128, 1, 9);
    auto chain = shape_chain(g);
    CHECK(chain.front() == std::array<int, 3>{128, 128, 3});
    CHECK(chain.back() == std::array<int, 3>{128, 128, 3});

    NetworkSpec d = discriminator_spec(128, 128, 1, 6);
    auto dchain = shape_chain(d);
    // trunk: 64,128,...,2048 halving spatial size each time
    CHECK(dchain[3] == std::array<int, 3>{64, 64, 64});
    CHECK(dchain[dchain.size() - 3] == std::array<int, 3>{2, 2, 2048});
    CHECK(dchain.back() == std::array<int, 3>{1, 1, 32});
}

TEST_CASE("desk-scale generator forward is shape preserving and bounded by tanh") {
    NetworkSpec spec = generator_spec(32, 32, 8, 3);
    Generator gen(spec, 11);
    std::mt19937_64 rng(10);
    Tensor x = Tensor::rand_uniform({2, 32, 32, 3}, rng, -1.0, 1.0);
    Tensor y = gen.forward(x, Mode::train);
    CHECK(y.shape() == x.shape());
    for (std::size_t i = 0; i < y.size(); ++i) {
        CHECK(y.at(i) >= -1.0);
        CHECK(y.at(i) <= 1.0);
    }
}

TEST_CASE("generator shape preservation over random valid specs") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        int h = 4 * (1 + static_cast<int>(rng() % 16)); // 4..64, multiple of 4
        int w = 4 * (1 + static_cast<int>(rng() % 16));
        int sf_pick[] = {8, 16, 32, 64};
        int sf = sf_pick[rng() % 4];
        int blocks = 1 + static_cast<int>(rng() % 4);
        NetworkSpec spec = generator_spec(h, w, sf, blocks);
        auto chain = shape_chain(spec);
        CHECK(chain.front() == chain.back());
    }
    CHECK_THROWS_AS(generator_spec(30, 30, 8, 3), ContractError);
}

TEST_CASE("desk-scale discriminator emits a patch map and a 32-vector") {
    NetworkSpec spec = discriminator_spec(32, 32, 8, 4);
    Discriminator disc(spec, 21);
    std::mt19937_64 rng(13);
    Tensor x = Tensor::rand_uniform({3, 32, 32, 3}, rng, -1.0, 1.0);
    auto out = disc.forward(x, Mode::train);
    CHECK(out.src_map.shape() == Shape{3, 1, 1, 1});
    CHECK(out.stroke_pred.shape() == Shape{3, 32});

    CHECK_THROWS_AS(discriminator_spec(16, 16, 8, 4), ShapeError);
}

TEST_CASE("discriminator heads share the hidden trunk") {
    NetworkSpec spec = discriminator_spec(32, 32, 8, 4);
    Discriminator disc(spec, 22);
    std::mt19937_64 rng(14);
    Tensor x = Tensor::rand_uniform({2, 32, 32, 3}, rng, -1.0, 1.0);
    auto before = disc.forward(x, Mode::eval);

    // Perturb one hidden-layer weight; both heads must move.
    disc.params().at("l00.weight").mutable_data()[0] += 0.5;
    auto after = disc.forward(x, Mode::eval);
    bool src_changed = false, st_changed = false;
    for (std::size_t i = 0; i < before.src_map.size(); ++i) {
        if (before.src_map.at(i) != after.src_map.at(i)) src_changed = true;
    }
    for (std::size_t i = 0; i < before.stroke_pred.size(); ++i) {
        if (before.stroke_pred.at(i) != after.stroke_pred.at(i)) st_changed = true;
    }
    CHECK(src_changed);
    CHECK(st_changed);
}

TEST_CASE("residual block with a zeroed second conv is an exact identity") {
    NetworkSpec spec = generator_spec(8, 8, 32, 1);
    Generator gen(spec, 33);
    // Find the residual block layer index.
    std::size_t res_index = 0;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        if (spec.layers[i].kind == LayerKind::residual_block) res_index = i;
    }
    std::string prefix = res_index < 10 ? "l0" + std::to_string(res_index) : "l" + std::to_string(res_index);
    for (auto& item : gen.params().items()) {
        if (item.name.rfind(prefix + ".conv2", 0) == 0) {
            std::fill(item.value.mutable_data().begin(), item.value.mutable_data().end(), 0.0);
        }
    }

    // Feed a probe directly through the residual block's sub-layers.
    std::mt19937_64 rng(15);
    Tensor t = Tensor::randn({2, 2, 2, 8}, rng);
    Parameters& p = gen.params();
    Tensor y = conv2d(t, p.at(prefix + ".conv1.weight"), 1, 1);
    y = add_channel_bias(y, p.at(prefix + ".conv1.bias"));
    y = batch_norm(y, p.at(prefix + ".bn1.gamma"), p.at(prefix + ".bn1.beta"),
                   p.at(prefix + ".bn1.running_mean"), p.at(prefix + ".bn1.running_var"), Mode::train);
    y = relu(y);
    y = conv2d(y, p.at(prefix + ".conv2.weight"), 1, 1);
    y = add_channel_bias(y, p.at(prefix + ".conv2.bias"));
    y = batch_norm(y, p.at(prefix + ".bn2.gamma"), p.at(prefix + ".bn2.beta"),
                   p.at(prefix + ".bn2.running_mean"), p.at(prefix + ".bn2.running_var"), Mode::train);
    Tensor out = add(t, y);
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(out.at(i) == t.at(i));
}

TEST_CASE("initialization determinism") {
    NetworkSpec spec = generator_spec(16, 16, 16, 2);
    Generator a(spec, 77);
    Generator b(spec, 77);
    CHECK(a.params().bitwise_equal(b.params()));
    Generator c(spec, 78);
    CHECK_FALSE(a.params().bitwise_equal(c.params()));
}

TEST_CASE("end-to-end gradient check on a tiny generator") {
    NetworkSpec spec = generator_spec(8, 8, 32, 1);
    Generator gen(spec, 55);
    std::mt19937_64 rng(16);
    Tensor x = Tensor::rand_uniform({2, 8, 8, 3}, rng, -0.9, 0.9);
    auto f = [&gen](const Tensor& t) { return mean(square(gen.forward(t, Mode::train))); };
    auto result = grad_check(f, x, 1e-5);
    CHECK(result.max_rel_err < 1e-4);
}
