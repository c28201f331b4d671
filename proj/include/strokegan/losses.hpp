#ifndef STROKEGAN_LOSSES_HPP
#define STROKEGAN_LOSSES_HPP

#include "strokegan/config.hpp"
#include "strokegan/tensor.hpp"

namespace strokegan {

// Collapses a raw (n, hp, wp, 1) patch-score map to one probability per
// sample: sigmoid, mean over patches, clamp to [1e-7, 1 - 1e-7].
Tensor d_src_probability(const Tensor& src_map);

// E[log d_real] + E[log(1 - d_fake)] over probability batches of shape (n).
// The discriminator ascends this; the generator descends its second term.
Tensor adversarial_loss(const Tensor& d_real_prob, const Tensor& d_fake_prob);

// Batch mean of the per-sample L1 norm of (x - x_reconstructed).
Tensor cycle_loss(const Tensor& x, const Tensor& x_reconstructed);

// Batch mean of the per-sample Euclidean norm of (prediction - code); inputs
// are (n, 32).
Tensor stroke_loss(const Tensor& d_st_fake, const Tensor& codes);

// adv + lambda_cyc * cyc + lambda_st * st.
Tensor total_loss(const Tensor& adv, const Tensor& cyc, const Tensor& st,
                  const TrainConfig& config);

} // namespace strokegan

#endif
