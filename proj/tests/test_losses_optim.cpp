#include "doctest.h"

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "strokegan/config.hpp"
#include "strokegan/losses.hpp"
#include "strokegan/optim.hpp"

using namespace strokegan;

TEST_CASE("adversarial loss at uniform half probabilities") {
    Tensor p = Tensor::full({4}, 0.5);
    double loss = adversarial_loss(p, p).item();
    CHECK(loss == doctest::Approx(-1.3862943611).epsilon(1e-9));
}

TEST_CASE("adversarial loss approaches the discriminator optimum") {
    Tensor real = Tensor::full({4}, 1.0 - 1e-6);
    Tensor fake = Tensor::full({4}, 1e-6);
    double loss = adversarial_loss(real, fake).item();
    CHECK(loss < 0.0);
    CHECK(loss > -1e-4);
}

TEST_CASE("adversarial loss matches the formula oracle on random probabilities") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor real = Tensor::rand_uniform({8}, rng, 0.05, 0.95);
        Tensor fake = Tensor::rand_uniform({8}, rng, 0.05, 0.95);
        double want = oracles::adversarial_loss(
            std::vector<double>(real.data().begin(), real.data().end()),
            std::vector<double>(fake.data().begin(), fake.data().end()));
        double got = adversarial_loss(real, fake).item();
        CHECK(std::fabs(got - want) <= 1e-12 * std::max(1.0, std::fabs(want)));
    }
}

TEST_CASE("adversarial loss rejects probabilities outside (0,1)") {
    Tensor ok = Tensor::full({2}, 0.5);
    CHECK_THROWS_AS(adversarial_loss(Tensor::full({2}, 1.0), ok), DomainError);
    CHECK_THROWS_AS(adversarial_loss(ok, Tensor::full({2}, 0.0)), DomainError);
}

TEST_CASE("d_src_probability collapses patch maps and clamps") {
    std::mt19937_64 rng(32);
    Tensor scores = Tensor::randn({3, 2, 2, 1}, rng, 30.0); // saturating scores
    Tensor p = d_src_probability(scores);
    CHECK(p.shape() == Shape{3});
    for (double v : p.data()) {
        CHECK(v >= 1e-7);
        CHECK(v <= 1.0 - 1e-7);
    }
}

TEST_CASE("cycle loss") {
    std::mt19937_64 rng(33);
    Tensor x = Tensor::randn({3, 4, 4, 2}, rng);
    CHECK(cycle_loss(x, x).item() == 0.0);

    // 0-tensor vs all-ones: the per-sample L1 equals the element count.
    Tensor zeros = Tensor::zeros({2, 3, 3, 1});
    Tensor ones = Tensor::full({2, 3, 3, 1}, 1.0);
    CHECK(cycle_loss(zeros, ones).item() == 9.0);

    Tensor rec = Tensor::randn({3, 4, 4, 2}, rng);
    double want = oracles::cycle_loss(std::vector<double>(x.data().begin(), x.data().end()),
                                      std::vector<double>(rec.data().begin(), rec.data().end()), 3,
                                      32);
    CHECK(std::fabs(cycle_loss(x, rec).item() - want) < 1e-12 * std::max(1.0, want));

    CHECK_THROWS_AS(cycle_loss(zeros, x), ShapeError);
}

TEST_CASE("stroke loss") {
    std::mt19937_64 rng(34);
    Tensor codes = Tensor::zeros({2, 32});
    CHECK(stroke_loss(codes, codes).item() == 0.0);

    // all-0.5 prediction vs any binary code: per-sample norm sqrt(32 * 0.25)
    Tensor half = Tensor::full({2, 32}, 0.5);
    std::vector<double> bits(64, 0.0);
    for (int i = 0; i < 64; i += 3) bits[i] = 1.0;
    Tensor binary = Tensor::from_data({2, 32}, std::move(bits));
    CHECK(stroke_loss(half, binary).item() == doctest::Approx(2.8284271247).epsilon(1e-10));

    Tensor pred = Tensor::randn({4, 32}, rng);
    Tensor target = Tensor::rand_uniform({4, 32}, rng, 0.0, 1.0);
    double want = oracles::stroke_loss(std::vector<double>(pred.data().begin(), pred.data().end()),
                                       std::vector<double>(target.data().begin(), target.data().end()),
                                       4, 32);
    CHECK(std::fabs(stroke_loss(pred, target).item() - want) < 1e-12 * std::max(1.0, want));

    CHECK_THROWS_AS(stroke_loss(Tensor::zeros({2, 16}), Tensor::zeros({2, 16})), ShapeError);
}

TEST_CASE("total loss weights components with the config lambdas") {
    TrainConfig cfg;
    CHECK(cfg.lambda_cyc == 10.0);
    CHECK(cfg.lambda_st == doctest::Approx(0.18));

    Tensor adv = Tensor::scalar(-1.0);
    Tensor cyc = Tensor::scalar(0.2);
    Tensor st = Tensor::scalar(0.5);
    CHECK(total_loss(adv, cyc, st, cfg).item() == doctest::Approx(1.09).epsilon(1e-12));

    TrainConfig ablation = cfg;
    ablation.lambda_st = 0.0;
    CHECK(total_loss(adv, cyc, st, ablation).item() == doctest::Approx(1.0).epsilon(1e-12));

    Tensor zero = Tensor::scalar(0.0);
    CHECK(total_loss(zero, zero, zero, cfg).item() == 0.0);
}

TEST_CASE("total loss equals the component-weighted oracle") {
    std::mt19937_64 rng(35);
    TrainConfig cfg;
    for (int trial = 0; trial < 20; ++trial) {
        double a = Tensor::randn({1}, rng).item();
        double c = std::fabs(Tensor::randn({1}, rng).item());
        double s = std::fabs(Tensor::randn({1}, rng).item());
        double want = a + cfg.lambda_cyc * c + cfg.lambda_st * s;
        double got = total_loss(Tensor::scalar(a), Tensor::scalar(c), Tensor::scalar(s), cfg).item();
        CHECK(std::fabs(got - want) <= 1e-12 * std::max(1.0, std::fabs(want)));
    }
}

TEST_CASE("adam first step moves by about minus lr") {
    Tensor theta = Tensor::scalar(0.0);
    AdamSlot slot;
    AdamHyper hyper{1e-3, 0.5, 0.999, 1e-8};
    std::vector<double> grad{1.0};
    adam_step(theta, grad, slot, hyper, 1, "theta");
    CHECK(theta.item() == doctest::Approx(-1e-3).epsilon(1e-6));
}

TEST_CASE("adam with zero gradient and zero state leaves parameters unchanged") {
    Tensor theta = Tensor::from_data({3}, {1.0, -2.0, 0.5});
    AdamSlot slot;
    AdamHyper hyper{1e-2, 0.9, 0.999, 1e-8};
    std::vector<double> grad{0.0, 0.0, 0.0};
    adam_step(theta, grad, slot, hyper, 1, "theta");
    CHECK(theta.at(0) == 1.0);
    CHECK(theta.at(1) == -2.0);
    CHECK(theta.at(2) == 0.5);
}

TEST_CASE("adam descends a quadratic") {
    Tensor theta = Tensor::scalar(1.0);
    AdamSlot slot;
    AdamHyper hyper{0.05, 0.5, 0.999, 1e-8};
    double prev = 1.0;
    for (std::uint64_t t = 1; t <= 5; ++t) {
        std::vector<double> grad{2.0 * theta.item()};
        adam_step(theta, grad, slot, hyper, t, "theta");
        double f = theta.item() * theta.item();
        CHECK(f < prev);
        prev = f;
    }
}

TEST_CASE("adam rejects non-finite gradients with diagnostics") {
    Tensor theta = Tensor::scalar(0.0);
    AdamSlot slot;
    AdamHyper hyper{1e-3, 0.5, 0.999, 1e-8};
    std::vector<double> grad{std::nan("")};
    try {
        adam_step(theta, grad, slot, hyper, 7, "g.l00.weight");
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        std::string msg = e.what();
        CHECK(msg.find("g.l00.weight") != std::string::npos);
        CHECK(msg.find("7") != std::string::npos);
    }
}

TEST_CASE("optimizer updates only trainable parameters") {
    Parameters params;
    params.add("w", Tensor::full({2}, 1.0));
    params.add("buffer", Tensor::full({2}, 5.0), false);
    AdamOptimizer opt(AdamHyper{0.1, 0.5, 0.999, 1e-8}, params);

    params.at("w").accumulate_grad(std::vector<double>{1.0, 1.0});
    opt.step(params);
    CHECK(params.at("w").at(0) < 1.0);
    CHECK(params.at("buffer").at(0) == 5.0);
    CHECK(opt.step_count() == 1);
}

TEST_CASE("config defaults carry the published hyperparameters") {
    TrainConfig cfg = parse_config("");
    CHECK(cfg.lambda_cyc == 10.0);
    CHECK(cfg.lambda_st == doctest::Approx(0.18));
    CHECK(cfg.beta1 == 0.5);
    CHECK(cfg.beta2 == 0.999);
    CHECK(cfg.batch_size == 16);
    CHECK(cfg.epochs == 200);
    CHECK(cfg.generator_mode == GeneratorMode::single);
}

TEST_CASE("config parsing") {
    TrainConfig cfg = parse_config(
        "# comment line\n"
        "lambda_st = 0   # ablation\n"
        "epochs=12\n"
        "generator_mode = dual\n"
        "seeds = 4, 5, 6\n"
        "nonsaturating_g = false\n");
    CHECK(cfg.lambda_st == 0.0);
    CHECK(cfg.epochs == 12);
    CHECK(cfg.generator_mode == GeneratorMode::dual);
    CHECK(cfg.seeds == std::vector<std::uint64_t>{4, 5, 6});
    CHECK_FALSE(cfg.nonsaturating_g);
}

TEST_CASE("config rejects unknown keys with the line number") {
    try {
        parse_config("epochs = 5\nlambda_typo = 3\n", "test.cfg");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        std::string msg = e.what();
        CHECK(msg.find("test.cfg:2") != std::string::npos);
        CHECK(msg.find("lambda_typo") != std::string::npos);
    }
}

TEST_CASE("config validation and serialization round trip") {
    CHECK_THROWS_AS(parse_config("batch_size = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("beta1 = 1.5\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("resolution = 48\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("epochs = oops\n"), ConfigError);

    TrainConfig cfg = parse_config("epochs = 3\nlambda_st = 0.25\nseed = 42\ndata_dir = /tmp/x\n");
    TrainConfig reparsed = parse_config(serialize_config(cfg));
    CHECK(serialize_config(cfg) == serialize_config(reparsed));
}
