#ifndef STROKEGAN_OPTIM_HPP
#define STROKEGAN_OPTIM_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "strokegan/nn.hpp"

namespace strokegan {

struct AdamHyper {
    double lr = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Per-tensor first/second moment buffers.
struct AdamSlot {
    std::vector<double> m, v;
};

// One bias-corrected Adam update for a single tensor. `t` is the 1-based step
// counter shared across the parameter set. Throws on non-finite gradients,
// naming the parameter and step.
void adam_step(Tensor& param, std::span<const double> grad, AdamSlot& slot,
               const AdamHyper& hyper, std::uint64_t t, const std::string& name);

// Adam over every trainable tensor of a Parameters set. Parameters without an
// accumulated gradient are treated as zero-gradient.
class AdamOptimizer {
public:
    AdamOptimizer() = default;
    AdamOptimizer(AdamHyper hyper, const Parameters& params);

    void step(Parameters& params);
    std::uint64_t step_count() const { return t_; }
    const AdamHyper& hyper() const { return hyper_; }

    // Checkpoint access.
    std::vector<AdamSlot>& slots() { return slots_; }
    const std::vector<AdamSlot>& slots() const { return slots_; }
    void set_step_count(std::uint64_t t) { t_ = t; }

private:
    AdamHyper hyper_;
    std::vector<AdamSlot> slots_; // index-aligned with the trainable items
    std::vector<std::string> names_;
    std::uint64_t t_ = 0;
};

} // namespace strokegan

#endif
