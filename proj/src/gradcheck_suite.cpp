#include "strokegan/gradcheck_suite.hpp"

#include <cmath>
#include <functional>
#include <random>

#include "strokegan/evaluation.hpp"
#include "strokegan/nn.hpp"
#include "strokegan/tensor.hpp"

namespace strokegan {

namespace {

struct Probe {
    std::string name;
    std::function<Tensor(const Tensor&)> f;
    std::function<Tensor(std::mt19937_64&)> sample;
    int points = 10;
};

Tensor random_signed(std::mt19937_64& rng) { return Tensor::randn({8}, rng); }
Tensor random_positive(std::mt19937_64& rng) { return Tensor::rand_uniform({8}, rng, 0.5, 2.0); }

} // namespace

GradCheckSummary run_gradcheck_suite() {
    std::mt19937_64 rng(20240901);
    GradCheckSummary summary;

    std::vector<Probe> probes;
    auto put = [&probes](std::string name, std::function<Tensor(const Tensor&)> f,
                         std::function<Tensor(std::mt19937_64&)> sample, int points = 10) {
        probes.push_back(Probe{std::move(name), std::move(f), std::move(sample), points});
    };

    // Elementwise ops.
    put("add", [](const Tensor& t) { return sum(add(t, Tensor::full(t.shape(), 0.3))); },
        random_signed);
    put("sub", [](const Tensor& t) { return sum(sub(Tensor::full(t.shape(), 0.7), t)); },
        random_signed);
    put("mul", [](const Tensor& t) { return sum(mul(t, t)); }, random_signed);
    put("neg", [](const Tensor& t) { return sum(neg(t)); }, random_signed);
    put("square", [](const Tensor& t) { return sum(square(t)); }, random_signed);
    put("scale", [](const Tensor& t) { return sum(scale(t, -1.7)); }, random_signed);
    put("log", [](const Tensor& t) { return sum(log(t)); }, random_positive);
    put("sqrt", [](const Tensor& t) { return sum(sqrt(t)); }, random_positive);
    put("exp", [](const Tensor& t) { return sum(exp(t)); }, random_signed);
    put("sigmoid", [](const Tensor& t) { return sum(sigmoid(t)); }, random_signed);
    put("tanh", [](const Tensor& t) { return sum(tanh(t)); }, random_signed);
    put("abs (away from 0)",
        [](const Tensor& t) { return sum(abs(add_scalar(square(t), 0.1))); }, random_signed);
    put("clamp (interior)", [](const Tensor& t) { return sum(clamp(t, -10.0, 10.0)); },
        random_signed);

    // Reductions.
    put("reduce sum", [](const Tensor& t) { return sum(square(t)); }, random_signed);
    put("reduce mean", [](const Tensor& t) { return mean(square(t)); }, random_signed);
    put("reduce l2_norm", [](const Tensor& t) { return l2_norm(t); }, random_signed);
    put("reduce l1_norm (away from 0)",
        [](const Tensor& t) { return l1_norm(add_scalar(square(t), 0.1)); }, random_signed);
    put("reduce over axis",
        [](const Tensor& t) { return sum(square(l2_norm(t.reshape({2, 4}), {1}))); },
        random_signed);

    // Linear algebra and layer ops.
    put("matmul",
        [](const Tensor& t) {
            Tensor w = Tensor::from_data({8, 3}, {0.3, -0.1, 0.2, 0.9, -0.4, 0.6, 0.5, -0.7,
                                                  0.1, 0.8, -0.2, 0.3, 0.4, -0.6, 0.7, 0.2,
                                                  -0.3, 0.5, 0.6, 0.1, -0.8, 0.2, 0.4, 0.9});
            return mean(square(matmul(t.reshape({1, 8}), w)));
        },
        random_signed);
    put("add_rowvec",
        [](const Tensor& t) {
            Tensor m = Tensor::full({3, 8}, 0.25);
            return sum(square(add_rowvec(m, t)));
        },
        random_signed);

    {
        std::mt19937_64 wrng(7);
        Tensor cw = Tensor::randn({3, 3, 2, 3}, wrng, 0.3);
        put("conv2d w.r.t. input",
            [cw](const Tensor& t) {
                return mean(square(conv2d(t.reshape({1, 4, 4, 2}), cw, 2, 1)));
            },
            [](std::mt19937_64& r) { return Tensor::randn({32}, r); }, 5);
        Tensor cx = Tensor::randn({2, 5, 5, 2}, wrng);
        put("conv2d w.r.t. weight",
            [cx](const Tensor& t) {
                return mean(square(conv2d(cx, t.reshape({3, 3, 2, 1}), 1, 1)));
            },
            [](std::mt19937_64& r) { return Tensor::randn({18}, r, 0.3); }, 5);
        Tensor dw = Tensor::randn({3, 3, 2, 2}, wrng, 0.3);
        put("conv_transpose2d w.r.t. input",
            [dw](const Tensor& t) {
                return mean(square(conv_transpose2d(t.reshape({1, 3, 3, 2}), dw, 2, 1, 1)));
            },
            [](std::mt19937_64& r) { return Tensor::randn({18}, r); }, 5);
        Tensor dx = Tensor::randn({1, 3, 3, 2}, wrng);
        put("conv_transpose2d w.r.t. weight",
            [dx](const Tensor& t) {
                return mean(square(conv_transpose2d(dx, t.reshape({3, 3, 2, 2}), 2, 1, 1)));
            },
            [](std::mt19937_64& r) { return Tensor::randn({36}, r, 0.3); }, 5);
    }

    {
        std::mt19937_64 wrng(8);
        Tensor probe_w = Tensor::randn({4, 2, 2, 2}, wrng);
        put("batch_norm (train) w.r.t. input",
            [probe_w](const Tensor& t) {
                Tensor gamma = Tensor::full({2}, 1.2);
                Tensor beta = Tensor::full({2}, -0.1);
                Tensor rm = Tensor::zeros({2});
                Tensor rv = Tensor::full({2}, 1.0);
                Tensor y = batch_norm(t.reshape({4, 2, 2, 2}), gamma, beta, rm, rv, Mode::train);
                return sum(mul(y, probe_w.reshape({4, 2, 2, 2})));
            },
            [](std::mt19937_64& r) { return Tensor::randn({32}, r); }, 5);
    }

    {
        std::mt19937_64 wrng(9);
        Tensor bx = Tensor::randn({4, 2, 2, 2}, wrng);
        Tensor probe_w = Tensor::randn({4, 2, 2, 2}, wrng);
        put("batch_norm (train) w.r.t. gamma",
            [bx, probe_w](const Tensor& t) {
                Tensor beta = Tensor::zeros({2});
                Tensor rm = Tensor::zeros({2});
                Tensor rv = Tensor::full({2}, 1.0);
                Tensor y = batch_norm(bx, t, beta, rm, rv, Mode::train);
                return sum(mul(y, probe_w));
            },
            [](std::mt19937_64& r) { return Tensor::rand_uniform({2}, r, 0.5, 1.5); }, 5);
        put("batch_norm (eval) w.r.t. input",
            [probe_w](const Tensor& t) {
                Tensor gamma = Tensor::full({2}, 1.1);
                Tensor beta = Tensor::zeros({2});
                Tensor rm = Tensor::full({2}, 0.2);
                Tensor rv = Tensor::full({2}, 1.3);
                Tensor y = batch_norm(t.reshape({4, 2, 2, 2}), gamma, beta, rm, rv, Mode::eval);
                return sum(mul(y, probe_w.reshape({4, 2, 2, 2})));
            },
            [](std::mt19937_64& r) { return Tensor::randn({32}, r); }, 5);
    }

    put("leaky_relu (away from 0)",
        [](const Tensor& t) { return sum(leaky_relu(add_scalar(square(t), 0.05), 0.2)); },
        random_signed);
    put("relu (away from 0)",
        [](const Tensor& t) { return sum(relu(add_scalar(square(t), 0.05))); }, random_signed);
    put("cross_entropy",
        [](const Tensor& t) {
            return cross_entropy_with_logits(t.reshape({2, 4}), {1, 3});
        },
        random_signed, 5);

    // Tiny end-to-end generator loss.
    {
        auto gen = std::make_shared<Generator>(generator_spec(8, 8, 32, 1), 55);
        put("generator end-to-end (8x8)",
            [gen](const Tensor& t) {
                return mean(square(gen->forward(t.reshape({2, 8, 8, 3}), Mode::train)));
            },
            [](std::mt19937_64& r) { return Tensor::rand_uniform({2 * 8 * 8 * 3}, r, -0.9, 0.9); },
            1);
    }

    summary.all_passed = true;
    for (const auto& probe : probes) {
        GradCheckCaseResult result;
        result.name = probe.name;
        for (int p = 0; p < probe.points; ++p) {
            Tensor x = probe.sample(rng);
            GradCheckResult r = grad_check(probe.f, x, 1e-5);
            result.max_rel_err = std::max(result.max_rel_err, r.max_rel_err);
            result.checked += r.checked;
        }
        result.passed = result.max_rel_err < 1e-4 && result.checked > 0;
        summary.worst_rel_err = std::max(summary.worst_rel_err, result.max_rel_err);
        if (!result.passed) summary.all_passed = false;
        summary.cases.push_back(std::move(result));
    }

    // Harness sanity: a deliberately corrupted backward must be flagged.
    {
        GradCheckCaseResult control;
        control.name = "corrupted backward (control)";
        control.expected_failure = true;
        auto broken = [](const Tensor& t) {
            // Forward computes sum(x^2) but the recorded backward uses 3x
            // instead of 2x.
            std::vector<double> out(1, 0.0);
            for (double v : t.data()) out[0] += v * v;
            Tensor tv = t;
            return make_op_output({1}, std::move(out), {&t}, "broken_square_sum",
                [tv](std::span<const double> up, const std::vector<std::span<double>>& pg) {
                    if (pg[0].empty()) return;
                    auto d = tv.data();
                    for (std::size_t i = 0; i < d.size(); ++i) pg[0][i] += up[0] * 3.0 * d[i];
                });
        };
        Tensor x = random_signed(rng);
        GradCheckResult r = grad_check(broken, x, 1e-5);
        control.max_rel_err = r.max_rel_err;
        control.checked = r.checked;
        control.passed = r.max_rel_err >= 1e-4; // the control must fail its check
        if (!control.passed) summary.all_passed = false;
        summary.cases.push_back(std::move(control));
    }

    return summary;
}

} // namespace strokegan
