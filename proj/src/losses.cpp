#include "strokegan/losses.hpp"

#include "strokegan/nn.hpp"

namespace strokegan {

Tensor d_src_probability(const Tensor& src_map) {
    if (src_map.ndim() != 4 || src_map.shape()[3] != 1) {
        throw ShapeError("d_src_probability expects (n,hp,wp,1) scores, got " +
                         shape_to_string(src_map.shape()));
    }
    Tensor probs = sigmoid(src_map);
    Tensor per_sample = mean(probs, {1, 2, 3});
    return clamp(per_sample, 1e-7, 1.0 - 1e-7);
}

Tensor adversarial_loss(const Tensor& d_real_prob, const Tensor& d_fake_prob) {
    auto check = [](const Tensor& p, const char* who) {
        if (p.ndim() != 1) {
            throw ShapeError(std::string("adversarial_loss: ") + who +
                             " must be a probability batch (n), got " + shape_to_string(p.shape()));
        }
        for (double v : p.data()) {
            if (v <= 0.0 || v >= 1.0) {
                throw DomainError(std::string("adversarial_loss: ") + who +
                                  " probability outside (0,1): " + std::to_string(v));
            }
        }
    };
    check(d_real_prob, "d_real");
    check(d_fake_prob, "d_fake");
    Tensor real_term = mean(log(d_real_prob));
    Tensor fake_term = mean(log(add_scalar(neg(d_fake_prob), 1.0)));
    return add(real_term, fake_term);
}

Tensor cycle_loss(const Tensor& x, const Tensor& x_reconstructed) {
    if (x.shape() != x_reconstructed.shape()) {
        throw ShapeError("cycle_loss shape mismatch: " + shape_to_string(x.shape()) + " vs " +
                         shape_to_string(x_reconstructed.shape()));
    }
    std::vector<int> sample_axes;
    for (int d = 1; d < x.ndim(); ++d) sample_axes.push_back(d);
    Tensor per_sample = l1_norm(sub(x, x_reconstructed), sample_axes);
    return mean(per_sample);
}

Tensor stroke_loss(const Tensor& d_st_fake, const Tensor& codes) {
    if (d_st_fake.ndim() != 2 || d_st_fake.shape()[1] != kStrokeCodeWidth) {
        throw ShapeError("stroke_loss expects predictions (n,32), got " +
                         shape_to_string(d_st_fake.shape()));
    }
    if (codes.shape() != d_st_fake.shape()) {
        throw ShapeError("stroke_loss code batch " + shape_to_string(codes.shape()) +
                         " does not match predictions " + shape_to_string(d_st_fake.shape()));
    }
    Tensor per_sample = l2_norm(sub(d_st_fake, codes), {1});
    return mean(per_sample);
}

Tensor total_loss(const Tensor& adv, const Tensor& cyc, const Tensor& st,
                  const TrainConfig& config) {
    if (adv.size() != 1 || cyc.size() != 1 || st.size() != 1) {
        throw ContractError("total_loss expects scalar components");
    }
    return add(adv, add(scale(cyc, config.lambda_cyc), scale(st, config.lambda_st)));
}

} // namespace strokegan
