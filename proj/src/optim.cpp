#include "strokegan/optim.hpp"

#include <cmath>

namespace strokegan {

void adam_step(Tensor& param, std::span<const double> grad, AdamSlot& slot,
               const AdamHyper& hyper, std::uint64_t t, const std::string& name) {
    if (t < 1) throw ContractError("adam_step: step counter must be >= 1");
    if (grad.size() != param.size()) {
        throw ShapeError("adam_step: gradient length " + std::to_string(grad.size()) +
                         " does not match parameter " + name);
    }
    if (slot.m.empty()) slot.m.assign(param.size(), 0.0);
    if (slot.v.empty()) slot.v.assign(param.size(), 0.0);

    for (std::size_t i = 0; i < grad.size(); ++i) {
        if (!std::isfinite(grad[i])) {
            throw NumericError("non-finite gradient in parameter '" + name + "' at step " +
                               std::to_string(t));
        }
    }

    const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(t));
    auto data = param.mutable_data();
    for (std::size_t i = 0; i < grad.size(); ++i) {
        double g = grad[i];
        slot.m[i] = hyper.beta1 * slot.m[i] + (1.0 - hyper.beta1) * g;
        slot.v[i] = hyper.beta2 * slot.v[i] + (1.0 - hyper.beta2) * g * g;
        double m_hat = slot.m[i] / bc1;
        double v_hat = slot.v[i] / bc2;
        data[i] -= hyper.lr * m_hat / (std::sqrt(v_hat) + hyper.eps);
    }
}

AdamOptimizer::AdamOptimizer(AdamHyper hyper, const Parameters& params) : hyper_(hyper) {
    for (const auto& item : params.items()) {
        if (!item.trainable) continue;
        slots_.emplace_back();
        names_.push_back(item.name);
    }
}

void AdamOptimizer::step(Parameters& params) {
    ++t_;
    std::size_t slot_index = 0;
    std::vector<double> zeros;
    for (auto& item : params.items()) {
        if (!item.trainable) continue;
        if (slot_index >= slots_.size()) {
            throw ContractError("optimizer state does not match the parameter set");
        }
        if (item.value.has_grad()) {
            adam_step(item.value, item.value.grad(), slots_[slot_index], hyper_, t_, item.name);
        } else {
            zeros.assign(item.value.size(), 0.0);
            adam_step(item.value, zeros, slots_[slot_index], hyper_, t_, item.name);
        }
        ++slot_index;
    }
    if (slot_index != slots_.size()) {
        throw ContractError("optimizer state does not match the parameter set");
    }
}

} // namespace strokegan
