#ifndef STROKEGAN_NN_HPP
#define STROKEGAN_NN_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "strokegan/tensor.hpp"

namespace strokegan {

enum class Mode { train, eval };

enum class LayerKind { conv, deconv, batchnorm, relu, leaky_relu, tanh, residual_block };

struct LayerSpec {
    LayerKind kind;
    int out_channels = 0;
    int kh = 0, kw = 0;
    int stride = 1;
    int padding = 0;
    int output_padding = 0; // deconv only
    double slope = 0.0;     // leaky_relu only
};

// Declarative layer stack. Generators use `layers` alone; discriminators use
// `layers` as the shared trunk plus the two output heads.
struct NetworkSpec {
    std::vector<LayerSpec> layers;
    std::optional<LayerSpec> src_head;
    std::optional<LayerSpec> st_head;
    int height = 0, width = 0, channels = 0;
    int scale_factor = 1;
};

// The appendix templates. scale_factor divides every channel width;
// scale_factor=1 with residual_blocks=9 / downsample_layers=6 reproduces the
// paper tables, the desk configuration is scale_factor=8 with 3 blocks and 4
// stride-2 discriminator layers.
NetworkSpec generator_spec(int h, int w, int scale_factor, int residual_blocks);
NetworkSpec discriminator_spec(int h, int w, int scale_factor, int downsample_layers);

void validate_generator_spec(const NetworkSpec& spec);
void validate_discriminator_spec(const NetworkSpec& spec);

// Symbolic (h, w, c) after each layer, starting with the input shape. Heads
// are appended at the end for discriminator specs. Never allocates tensors.
std::vector<std::array<int, 3>> shape_chain(const NetworkSpec& spec);

// ---- parameters -------------------------------------------------------------

struct NamedTensor {
    std::string name;
    Tensor value;
    bool trainable = true; // false for batch-norm running statistics
};

class Parameters {
public:
    Tensor& add(std::string name, Tensor value, bool trainable = true);
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool contains(const std::string& name) const;
    std::vector<NamedTensor>& items() { return items_; }
    const std::vector<NamedTensor>& items() const { return items_; }
    std::size_t count() const { return items_.size(); }
    std::size_t total_elements() const;
    void zero_grad();
    void set_requires_grad(bool value); // trainable entries only
    bool bitwise_equal(const Parameters& other) const;

private:
    std::vector<NamedTensor> items_;
};

// ---- layer operations ---------------------------------------------------------

// Cross-correlation, channels-last. x (n,h,w,ci), w (kh,kw,ci,co), zero
// padding, floor output arithmetic.
Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int padding);

// Adjoint of conv2d with the same weight layout read as (kh,kw,c_out,c_in):
// for matching stride/padding, <conv2d(a,w), b> == <a, conv_transpose2d(b,w)>.
// output_padding grows the output on the bottom/right (must be < stride).
Tensor conv_transpose2d(const Tensor& x, const Tensor& w, int stride, int padding,
                        int output_padding = 0);

// Per-channel affine batch normalization over the trailing axis. Train mode
// normalizes with batch statistics and updates the running buffers in place
// (exponential moving average with the given momentum); eval mode uses the
// running buffers. Train mode requires a batch of at least 2.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  Tensor& running_mean, Tensor& running_var, Mode mode,
                  double momentum = 0.1, double eps = 1e-5);

// While alive, train-mode batch norm still normalizes with batch statistics
// but leaves the running buffers untouched. Used for forwards through the
// opposing player's network, which must not mutate its state.
class BatchStatsFreeze {
public:
    BatchStatsFreeze();
    ~BatchStatsFreeze();
    BatchStatsFreeze(const BatchStatsFreeze&) = delete;
    BatchStatsFreeze& operator=(const BatchStatsFreeze&) = delete;
    static bool active();

private:
    bool prev_;
};

enum class Activation { relu, leaky_relu, tanh, sigmoid };
Tensor activation(Activation kind, const Tensor& x, double slope = 0.2);

// Adds bias[c] across every spatial/batch position of a channels-last tensor.
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);

// ---- networks ----------------------------------------------------------------

// CycleGAN-style encoder / residual / decoder generator with a tanh head.
// Shape preserving: (n,h,w,3) -> (n,h,w,3).
class Generator {
public:
    Generator(NetworkSpec spec, std::uint64_t seed);
    Tensor forward(const Tensor& x, Mode mode);
    Parameters& params() { return params_; }
    const Parameters& params() const { return params_; }
    const NetworkSpec& spec() const { return spec_; }

private:
    NetworkSpec spec_;
    Parameters params_;
};

// PatchGAN-style trunk with two heads sharing every hidden activation: a
// real/fake patch score map and a 32-dimensional stroke-code prediction.
class Discriminator {
public:
    struct Output {
        Tensor src_map;     // (n, hp, wp, 1) raw scores
        Tensor stroke_pred; // (n, 32)
    };

    Discriminator(NetworkSpec spec, std::uint64_t seed);
    Output forward(const Tensor& x, Mode mode);
    Parameters& params() { return params_; }
    const Parameters& params() const { return params_; }
    const NetworkSpec& spec() const { return spec_; }

private:
    NetworkSpec spec_;
    Parameters params_;
};

inline constexpr int kStrokeCodeWidth = 32;

} // namespace strokegan

#endif
