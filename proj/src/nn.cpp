#include "strokegan/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace strokegan {

// ---- Parameters --------------------------------------------------------------

Tensor& Parameters::add(std::string name, Tensor value, bool trainable) {
    if (contains(name)) throw ContractError("duplicate parameter name: " + name);
    items_.push_back(NamedTensor{std::move(name), std::move(value), trainable});
    return items_.back().value;
}

Tensor& Parameters::at(const std::string& name) {
    for (auto& item : items_) {
        if (item.name == name) return item.value;
    }
    throw ContractError("unknown parameter: " + name);
}

const Tensor& Parameters::at(const std::string& name) const {
    for (const auto& item : items_) {
        if (item.name == name) return item.value;
    }
    throw ContractError("unknown parameter: " + name);
}

bool Parameters::contains(const std::string& name) const {
    for (const auto& item : items_) {
        if (item.name == name) return true;
    }
    return false;
}

std::size_t Parameters::total_elements() const {
    std::size_t n = 0;
    for (const auto& item : items_) n += item.value.size();
    return n;
}

void Parameters::zero_grad() {
    for (auto& item : items_) item.value.zero_grad();
}

void Parameters::set_requires_grad(bool value) {
    for (auto& item : items_) {
        if (item.trainable) item.value.set_requires_grad(value);
    }
}

bool Parameters::bitwise_equal(const Parameters& other) const {
    if (items_.size() != other.items_.size()) return false;
    for (std::size_t i = 0; i < items_.size(); ++i) {
        const auto& a = items_[i];
        const auto& b = other.items_[i];
        if (a.name != b.name || a.value.shape() != b.value.shape()) return false;
        if (std::memcmp(a.value.data().data(), b.value.data().data(),
                        a.value.size() * sizeof(double)) != 0) {
            return false;
        }
    }
    return true;
}

// ---- conv2d --------------------------------------------------------------------

Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int padding) {
    if (x.ndim() != 4 || w.ndim() != 4) {
        throw ShapeError("conv2d expects x (n,h,w,c) and w (kh,kw,ci,co), got " +
                         shape_to_string(x.shape()) + " and " + shape_to_string(w.shape()));
    }
    if (stride < 1) throw ContractError("conv2d stride must be >= 1");
    if (padding < 0) throw ContractError("conv2d padding must be >= 0");
    const int N = x.shape()[0], H = x.shape()[1], W = x.shape()[2], CI = x.shape()[3];
    const int KH = w.shape()[0], KW = w.shape()[1], WCI = w.shape()[2], CO = w.shape()[3];
    if (CI != WCI) {
        throw ShapeError("conv2d channel mismatch: input " + shape_to_string(x.shape()) +
                         " vs kernel " + shape_to_string(w.shape()));
    }
    if (H + 2 * padding < KH || W + 2 * padding < KW) {
        throw ShapeError("conv2d kernel larger than padded input: input " + shape_to_string(x.shape()) +
                         " kernel " + shape_to_string(w.shape()) + " padding " + std::to_string(padding));
    }
    const int OH = (H + 2 * padding - KH) / stride + 1;
    const int OW = (W + 2 * padding - KW) / stride + 1;

    std::vector<double> out(static_cast<std::size_t>(N) * OH * OW * CO, 0.0);
    const double* xd = x.data().data();
    const double* wd = w.data().data();
    for (int b = 0; b < N; ++b) {
        for (int i = 0; i < OH; ++i) {
            for (int j = 0; j < OW; ++j) {
                double* orow = &out[((static_cast<std::size_t>(b) * OH + i) * OW + j) * CO];
                for (int u = 0; u < KH; ++u) {
                    int ii = i * stride + u - padding;
                    if (ii < 0 || ii >= H) continue;
                    for (int v = 0; v < KW; ++v) {
                        int jj = j * stride + v - padding;
                        if (jj < 0 || jj >= W) continue;
                        const double* xrow = &xd[((static_cast<std::size_t>(b) * H + ii) * W + jj) * CI];
                        const double* wblk = &wd[(static_cast<std::size_t>(u) * KW + v) * CI * CO];
                        for (int q = 0; q < CI; ++q) {
                            double a = xrow[q];
                            if (a == 0.0) continue;
                            const double* wr = &wblk[static_cast<std::size_t>(q) * CO];
                            for (int c = 0; c < CO; ++c) orow[c] += a * wr[c];
                        }
                    }
                }
            }
        }
    }

    Tensor xv = x, wv = w;
    return make_op_output({N, OH, OW, CO}, std::move(out), {&x, &w}, "conv2d",
        [xv, wv, stride, padding, N, H, W, CI, KH, KW, CO, OH, OW](
            std::span<const double> up, const std::vector<std::span<double>>& pg) {
            const double* xd2 = xv.data().data();
            const double* wd2 = wv.data().data();
            double* gx = pg[0].empty() ? nullptr : pg[0].data();
            double* gw = pg[1].empty() ? nullptr : pg[1].data();
            for (int b = 0; b < N; ++b) {
                for (int i = 0; i < OH; ++i) {
                    for (int j = 0; j < OW; ++j) {
                        const double* urow = &up[((static_cast<std::size_t>(b) * OH + i) * OW + j) * CO];
                        for (int u = 0; u < KH; ++u) {
                            int ii = i * stride + u - padding;
                            if (ii < 0 || ii >= H) continue;
                            for (int v = 0; v < KW; ++v) {
                                int jj = j * stride + v - padding;
                                if (jj < 0 || jj >= W) continue;
                                std::size_t xoff = ((static_cast<std::size_t>(b) * H + ii) * W + jj) * CI;
                                std::size_t woff = (static_cast<std::size_t>(u) * KW + v) * CI * CO;
                                if (gx) {
                                    for (int q = 0; q < CI; ++q) {
                                        const double* wr = &wd2[woff + static_cast<std::size_t>(q) * CO];
                                        double acc = 0.0;
                                        for (int c = 0; c < CO; ++c) acc += urow[c] * wr[c];
                                        gx[xoff + q] += acc;
                                    }
                                }
                                if (gw) {
                                    for (int q = 0; q < CI; ++q) {
                                        double a = xd2[xoff + q];
                                        if (a == 0.0) continue;
                                        double* gwr = &gw[woff + static_cast<std::size_t>(q) * CO];
                                        for (int c = 0; c < CO; ++c) gwr[c] += a * urow[c];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
}

// ---- conv_transpose2d -----------------------------------------------------------

Tensor conv_transpose2d(const Tensor& x, const Tensor& w, int stride, int padding,
                        int output_padding) {
    if (x.ndim() != 4 || w.ndim() != 4) {
        throw ShapeError("conv_transpose2d expects x (n,h,w,c) and w (kh,kw,co,ci), got " +
                         shape_to_string(x.shape()) + " and " + shape_to_string(w.shape()));
    }
    if (stride < 1) throw ContractError("conv_transpose2d stride must be >= 1");
    if (padding < 0) throw ContractError("conv_transpose2d padding must be >= 0");
    if (output_padding < 0 || output_padding >= stride) {
        throw ContractError("conv_transpose2d output_padding must be in [0, stride)");
    }
    const int N = x.shape()[0], H = x.shape()[1], W = x.shape()[2], CI = x.shape()[3];
    const int KH = w.shape()[0], KW = w.shape()[1], CO = w.shape()[2], WCI = w.shape()[3];
    if (CI != WCI) {
        throw ShapeError("conv_transpose2d channel mismatch: input " + shape_to_string(x.shape()) +
                         " vs kernel " + shape_to_string(w.shape()));
    }
    const int OH = (H - 1) * stride - 2 * padding + KH + output_padding;
    const int OW = (W - 1) * stride - 2 * padding + KW + output_padding;
    if (OH <= 0 || OW <= 0) {
        throw ShapeError("conv_transpose2d output collapses to zero size for input " +
                         shape_to_string(x.shape()));
    }

    std::vector<double> out(static_cast<std::size_t>(N) * OH * OW * CO, 0.0);
    const double* xd = x.data().data();
    const double* wd = w.data().data();
    for (int b = 0; b < N; ++b) {
        for (int i = 0; i < H; ++i) {
            for (int j = 0; j < W; ++j) {
                const double* xrow = &xd[((static_cast<std::size_t>(b) * H + i) * W + j) * CI];
                for (int u = 0; u < KH; ++u) {
                    int oi = i * stride + u - padding;
                    if (oi < 0 || oi >= OH) continue;
                    for (int v = 0; v < KW; ++v) {
                        int oj = j * stride + v - padding;
                        if (oj < 0 || oj >= OW) continue;
                        double* orow = &out[((static_cast<std::size_t>(b) * OH + oi) * OW + oj) * CO];
                        const double* wblk = &wd[(static_cast<std::size_t>(u) * KW + v) * CO * CI];
                        for (int c = 0; c < CO; ++c) {
                            const double* wr = &wblk[static_cast<std::size_t>(c) * CI];
                            double acc = 0.0;
                            for (int q = 0; q < CI; ++q) acc += xrow[q] * wr[q];
                            orow[c] += acc;
                        }
                    }
                }
            }
        }
    }

    Tensor xv = x, wv = w;
    return make_op_output({N, OH, OW, CO}, std::move(out), {&x, &w}, "conv_transpose2d",
        [xv, wv, stride, padding, N, H, W, CI, KH, KW, CO, OH, OW](
            std::span<const double> up, const std::vector<std::span<double>>& pg) {
            const double* xd2 = xv.data().data();
            const double* wd2 = wv.data().data();
            double* gx = pg[0].empty() ? nullptr : pg[0].data();
            double* gw = pg[1].empty() ? nullptr : pg[1].data();
            for (int b = 0; b < N; ++b) {
                for (int i = 0; i < H; ++i) {
                    for (int j = 0; j < W; ++j) {
                        std::size_t xoff = ((static_cast<std::size_t>(b) * H + i) * W + j) * CI;
                        for (int u = 0; u < KH; ++u) {
                            int oi = i * stride + u - padding;
                            if (oi < 0 || oi >= OH) continue;
                            for (int v = 0; v < KW; ++v) {
                                int oj = j * stride + v - padding;
                                if (oj < 0 || oj >= OW) continue;
                                const double* urow =
                                    &up[((static_cast<std::size_t>(b) * OH + oi) * OW + oj) * CO];
                                std::size_t woff = (static_cast<std::size_t>(u) * KW + v) * CO * CI;
                                if (gx) {
                                    for (int q = 0; q < CI; ++q) {
                                        double acc = 0.0;
                                        for (int c = 0; c < CO; ++c) {
                                            acc += urow[c] * wd2[woff + static_cast<std::size_t>(c) * CI + q];
                                        }
                                        gx[xoff + q] += acc;
                                    }
                                }
                                if (gw) {
                                    for (int c = 0; c < CO; ++c) {
                                        double u2 = urow[c];
                                        if (u2 == 0.0) continue;
                                        double* gwr = &gw[woff + static_cast<std::size_t>(c) * CI];
                                        for (int q = 0; q < CI; ++q) gwr[q] += u2 * xd2[xoff + q];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
}

// ---- batch norm -------------------------------------------------------------------

namespace {
thread_local bool g_freeze_batch_stats = false;
}

BatchStatsFreeze::BatchStatsFreeze() : prev_(g_freeze_batch_stats) { g_freeze_batch_stats = true; }
BatchStatsFreeze::~BatchStatsFreeze() { g_freeze_batch_stats = prev_; }
bool BatchStatsFreeze::active() { return g_freeze_batch_stats; }

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  Tensor& running_mean, Tensor& running_var, Mode mode,
                  double momentum, double eps) {
    if (x.ndim() < 2) throw ShapeError("batch_norm needs at least 2 dimensions");
    const int C = x.shape().back();
    auto check_param = [C](const Tensor& t, const char* what) {
        if (t.ndim() != 1 || t.shape()[0] != C) {
            throw ShapeError(std::string("batch_norm ") + what + " must have shape (" +
                             std::to_string(C) + "), got " + shape_to_string(t.shape()));
        }
    };
    check_param(gamma, "gamma");
    check_param(beta, "beta");
    check_param(running_mean, "running_mean");
    check_param(running_var, "running_var");
    for (double v : running_var.data()) {
        if (v <= 0.0) throw DomainError("batch_norm running variance must stay positive");
    }

    const std::size_t total = x.size();
    const std::size_t m = total / static_cast<std::size_t>(C);
    const double* xd = x.data().data();
    const double* gd = gamma.data().data();
    const double* bd = beta.data().data();

    if (mode == Mode::train) {
        if (x.shape()[0] < 2) {
            throw ContractError("batch_norm in train mode needs batch size >= 2, got " +
                                std::to_string(x.shape()[0]));
        }
        std::vector<double> mean_c(C, 0.0), var_c(C, 0.0);
        for (std::size_t i = 0; i < total; ++i) mean_c[i % C] += xd[i];
        for (int c = 0; c < C; ++c) mean_c[c] /= static_cast<double>(m);
        for (std::size_t i = 0; i < total; ++i) {
            double d = xd[i] - mean_c[i % C];
            var_c[i % C] += d * d;
        }
        for (int c = 0; c < C; ++c) var_c[c] /= static_cast<double>(m);

        std::vector<double> inv_std(C);
        for (int c = 0; c < C; ++c) inv_std[c] = 1.0 / std::sqrt(var_c[c] + eps);

        std::vector<double> xhat(total), out(total);
        for (std::size_t i = 0; i < total; ++i) {
            int c = static_cast<int>(i % C);
            xhat[i] = (xd[i] - mean_c[c]) * inv_std[c];
            out[i] = gd[c] * xhat[i] + bd[c];
        }

        // Running statistics are buffers, updated as a forward side effect.
        if (!g_freeze_batch_stats) {
            auto rm = running_mean.mutable_data();
            auto rv = running_var.mutable_data();
            for (int c = 0; c < C; ++c) {
                rm[c] = (1.0 - momentum) * rm[c] + momentum * mean_c[c];
                rv[c] = (1.0 - momentum) * rv[c] + momentum * var_c[c];
            }
        }

        Tensor gv = gamma;
        auto xhat_saved = std::make_shared<std::vector<double>>(std::move(xhat));
        auto inv_std_saved = std::make_shared<std::vector<double>>(std::move(inv_std));
        return make_op_output(x.shape(), std::move(out), {&x, &gamma, &beta}, "batch_norm",
            [gv, xhat_saved, inv_std_saved, C, m](std::span<const double> up,
                                                  const std::vector<std::span<double>>& pg) {
                const auto& xh = *xhat_saved;
                const auto& istd = *inv_std_saved;
                const double* g2 = gv.data().data();
                std::vector<double> sum_up(C, 0.0), sum_up_xhat(C, 0.0);
                for (std::size_t i = 0; i < up.size(); ++i) {
                    int c = static_cast<int>(i % C);
                    sum_up[c] += up[i];
                    sum_up_xhat[c] += up[i] * xh[i];
                }
                if (!pg[0].empty()) {
                    double inv_m = 1.0 / static_cast<double>(m);
                    for (std::size_t i = 0; i < up.size(); ++i) {
                        int c = static_cast<int>(i % C);
                        pg[0][i] += g2[c] * istd[c] *
                                    (up[i] - sum_up[c] * inv_m - xh[i] * sum_up_xhat[c] * inv_m);
                    }
                }
                if (!pg[1].empty()) {
                    for (int c = 0; c < C; ++c) pg[1][c] += sum_up_xhat[c];
                }
                if (!pg[2].empty()) {
                    for (int c = 0; c < C; ++c) pg[2][c] += sum_up[c];
                }
            });
    }

    // eval mode: per-channel affine transform with the running statistics
    const double* rm = running_mean.data().data();
    const double* rv = running_var.data().data();
    std::vector<double> inv_std(C), xhat(total), out(total);
    for (int c = 0; c < C; ++c) inv_std[c] = 1.0 / std::sqrt(rv[c] + eps);
    for (std::size_t i = 0; i < total; ++i) {
        int c = static_cast<int>(i % C);
        xhat[i] = (xd[i] - rm[c]) * inv_std[c];
        out[i] = gd[c] * xhat[i] + bd[c];
    }
    Tensor gv = gamma;
    auto xhat_saved = std::make_shared<std::vector<double>>(std::move(xhat));
    auto inv_std_saved = std::make_shared<std::vector<double>>(std::move(inv_std));
    return make_op_output(x.shape(), std::move(out), {&x, &gamma, &beta}, "batch_norm_eval",
        [gv, xhat_saved, inv_std_saved, C](std::span<const double> up,
                                           const std::vector<std::span<double>>& pg) {
            const auto& xh = *xhat_saved;
            const auto& istd = *inv_std_saved;
            const double* g2 = gv.data().data();
            if (!pg[0].empty()) {
                for (std::size_t i = 0; i < up.size(); ++i) {
                    int c = static_cast<int>(i % C);
                    pg[0][i] += up[i] * g2[c] * istd[c];
                }
            }
            if (!pg[1].empty()) {
                for (std::size_t i = 0; i < up.size(); ++i) pg[1][i % C] += up[i] * xh[i];
            }
            if (!pg[2].empty()) {
                for (std::size_t i = 0; i < up.size(); ++i) pg[2][i % C] += up[i];
            }
        });
}

Tensor activation(Activation kind, const Tensor& x, double slope) {
    switch (kind) {
        case Activation::relu: return relu(x);
        case Activation::leaky_relu: return leaky_relu(x, slope);
        case Activation::tanh: return tanh(x);
        case Activation::sigmoid: return sigmoid(x);
    }
    throw ContractError("unknown activation kind");
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
    const int C = x.shape().back();
    if (bias.ndim() != 1 || bias.shape()[0] != C) {
        throw ShapeError("add_channel_bias: bias " + shape_to_string(bias.shape()) +
                         " does not match channel count " + std::to_string(C));
    }
    std::size_t total = x.size();
    std::vector<double> out(total);
    const double* xd = x.data().data();
    const double* bd = bias.data().data();
    for (std::size_t i = 0; i < total; ++i) out[i] = xd[i] + bd[i % C];
    return make_op_output(x.shape(), std::move(out), {&x, &bias}, "add_channel_bias",
        [C](std::span<const double> up, const std::vector<std::span<double>>& pg) {
            if (!pg[0].empty()) {
                for (std::size_t i = 0; i < up.size(); ++i) pg[0][i] += up[i];
            }
            if (!pg[1].empty()) {
                for (std::size_t i = 0; i < up.size(); ++i) pg[1][i % C] += up[i];
            }
        });
}

// ---- specs -----------------------------------------------------------------------

namespace {

LayerSpec conv_layer(int channels, int k, int stride, int padding) {
    LayerSpec l;
    l.kind = LayerKind::conv;
    l.out_channels = channels;
    l.kh = l.kw = k;
    l.stride = stride;
    l.padding = padding;
    return l;
}

LayerSpec deconv_layer(int channels, int k, int stride, int padding, int output_padding) {
    LayerSpec l;
    l.kind = LayerKind::deconv;
    l.out_channels = channels;
    l.kh = l.kw = k;
    l.stride = stride;
    l.padding = padding;
    l.output_padding = output_padding;
    return l;
}

LayerSpec bn_layer(int channels) {
    LayerSpec l;
    l.kind = LayerKind::batchnorm;
    l.out_channels = channels;
    return l;
}

LayerSpec act_layer(LayerKind kind, int channels, double slope = 0.0) {
    LayerSpec l;
    l.kind = kind;
    l.out_channels = channels;
    l.slope = slope;
    return l;
}

LayerSpec residual_layer(int channels) {
    LayerSpec l;
    l.kind = LayerKind::residual_block;
    l.out_channels = channels;
    l.kh = l.kw = 3;
    l.stride = 1;
    l.padding = 1;
    return l;
}

void check_scale_factor(int sf) {
    if (sf < 1 || 64 % sf != 0) {
        throw ContractError("scale_factor must be a positive divisor of 64, got " + std::to_string(sf));
    }
}

} // namespace

NetworkSpec generator_spec(int h, int w, int scale_factor, int residual_blocks) {
    check_scale_factor(scale_factor);
    if (h <= 0 || w <= 0 || h % 4 != 0 || w % 4 != 0) {
        throw ContractError("generator needs spatial dimensions divisible by 4, got " +
                            std::to_string(h) + "x" + std::to_string(w));
    }
    if (residual_blocks < 1) throw ContractError("generator needs at least one residual block");
    const int c1 = 64 / scale_factor;
    const int c2 = 128 / scale_factor;
    const int c3 = 256 / scale_factor;

    NetworkSpec spec;
    spec.height = h;
    spec.width = w;
    spec.channels = 3;
    spec.scale_factor = scale_factor;

    // Input layer. The table's K7 rows keep the spatial size, which pins the
    // effective padding at 3.
    spec.layers.push_back(conv_layer(c1, 7, 1, 3));
    spec.layers.push_back(bn_layer(c1));
    spec.layers.push_back(act_layer(LayerKind::relu, c1));
    // Down-sampling.
    spec.layers.push_back(conv_layer(c2, 3, 2, 1));
    spec.layers.push_back(bn_layer(c2));
    spec.layers.push_back(act_layer(LayerKind::relu, c2));
    spec.layers.push_back(conv_layer(c3, 3, 2, 1));
    spec.layers.push_back(bn_layer(c3));
    spec.layers.push_back(act_layer(LayerKind::relu, c3));
    // Residual section.
    for (int r = 0; r < residual_blocks; ++r) spec.layers.push_back(residual_layer(c3));
    // Up-sampling; output_padding=1 restores the exact pre-downsampling size.
    spec.layers.push_back(deconv_layer(c2, 3, 2, 1, 1));
    spec.layers.push_back(bn_layer(c2));
    spec.layers.push_back(act_layer(LayerKind::relu, c2));
    spec.layers.push_back(deconv_layer(c1, 3, 2, 1, 1));
    spec.layers.push_back(bn_layer(c1));
    spec.layers.push_back(act_layer(LayerKind::relu, c1));
    // Output layer (no batch norm before tanh, as in the table).
    spec.layers.push_back(conv_layer(3, 7, 1, 3));
    spec.layers.push_back(act_layer(LayerKind::tanh, 3));

    validate_generator_spec(spec);
    return spec;
}

NetworkSpec discriminator_spec(int h, int w, int scale_factor, int downsample_layers) {
    check_scale_factor(scale_factor);
    if (downsample_layers < 1) throw ContractError("discriminator needs at least one hidden layer");
    const int div = 1 << downsample_layers;
    if (h % div != 0 || w % div != 0 || h / div < 2 || w / div < 2) {
        throw ShapeError("spatial size " + std::to_string(h) + "x" + std::to_string(w) +
                         " too small for " + std::to_string(downsample_layers) + " stride-2 layers");
    }

    NetworkSpec spec;
    spec.height = h;
    spec.width = w;
    spec.channels = 3;
    spec.scale_factor = scale_factor;

    int channels = 64 / scale_factor;
    for (int i = 0; i < downsample_layers; ++i) {
        spec.layers.push_back(conv_layer(channels, 4, 2, 1));
        spec.layers.push_back(bn_layer(channels));
        spec.layers.push_back(act_layer(LayerKind::leaky_relu, channels, 0.2));
        channels *= 2;
    }

    spec.src_head = conv_layer(1, 4, 1, 1);
    LayerSpec st = conv_layer(kStrokeCodeWidth, h / div, 1, 0);
    st.kw = w / div; // kernel spans the whole hidden map
    spec.st_head = st;

    validate_discriminator_spec(spec);
    return spec;
}

std::vector<std::array<int, 3>> shape_chain(const NetworkSpec& spec) {
    std::vector<std::array<int, 3>> chain;
    int h = spec.height, w = spec.width, c = spec.channels;
    chain.push_back({h, w, c});
    auto apply = [&](const LayerSpec& l) {
        switch (l.kind) {
            case LayerKind::conv: {
                if (h + 2 * l.padding < l.kh || w + 2 * l.padding < l.kw) {
                    throw ShapeError("conv kernel larger than padded input at shape " +
                                     std::to_string(h) + "x" + std::to_string(w));
                }
                h = (h + 2 * l.padding - l.kh) / l.stride + 1;
                w = (w + 2 * l.padding - l.kw) / l.stride + 1;
                c = l.out_channels;
                break;
            }
            case LayerKind::deconv: {
                h = (h - 1) * l.stride - 2 * l.padding + l.kh + l.output_padding;
                w = (w - 1) * l.stride - 2 * l.padding + l.kw + l.output_padding;
                if (h <= 0 || w <= 0) throw ShapeError("deconv output collapsed to zero size");
                c = l.out_channels;
                break;
            }
            case LayerKind::residual_block:
                if (l.out_channels != c) {
                    throw ShapeError("residual block channel mismatch: " + std::to_string(c) +
                                     " vs " + std::to_string(l.out_channels));
                }
                break;
            case LayerKind::batchnorm:
            case LayerKind::relu:
            case LayerKind::leaky_relu:
            case LayerKind::tanh:
                break;
        }
        chain.push_back({h, w, c});
    };
    for (const auto& l : spec.layers) apply(l);
    if (spec.src_head || spec.st_head) {
        int trunk_h = h, trunk_w = w, trunk_c = c;
        if (spec.src_head) {
            apply(*spec.src_head);
            h = trunk_h; w = trunk_w; c = trunk_c;
        }
        if (spec.st_head) apply(*spec.st_head);
    }
    return chain;
}

void validate_generator_spec(const NetworkSpec& spec) {
    if (spec.layers.empty()) throw ContractError("empty generator spec");
    if (spec.src_head || spec.st_head) throw ContractError("generator spec must not carry heads");
    for (const auto& l : spec.layers) {
        if (l.kind == LayerKind::conv || l.kind == LayerKind::deconv) {
            if (l.stride < 1 || l.padding < 0 || l.kh < 1 || l.kw < 1 || l.out_channels < 1) {
                throw ContractError("invalid layer geometry in generator spec");
            }
        }
    }
    const LayerSpec& last = spec.layers.back();
    const LayerSpec& head = spec.layers[spec.layers.size() - 2];
    if (last.kind != LayerKind::tanh || head.kind != LayerKind::conv || head.out_channels != 3) {
        throw ContractError("generator must end with a 3-channel conv followed by tanh");
    }
    auto chain = shape_chain(spec);
    if (chain.back() != chain.front()) {
        throw ShapeError("generator is not shape preserving: in " +
                         std::to_string(chain.front()[0]) + "x" + std::to_string(chain.front()[1]) +
                         " out " + std::to_string(chain.back()[0]) + "x" + std::to_string(chain.back()[1]));
    }
}

void validate_discriminator_spec(const NetworkSpec& spec) {
    if (spec.layers.empty()) throw ContractError("empty discriminator spec");
    if (!spec.src_head || !spec.st_head) {
        throw ContractError("discriminator spec needs both output heads");
    }
    auto chain = shape_chain(spec); // throws when any layer underflows
    auto st = chain.back();
    if (st[0] != 1 || st[1] != 1 || st[2] != kStrokeCodeWidth) {
        throw ShapeError("stroke head must emit (1,1,32), got " + std::to_string(st[0]) + "x" +
                         std::to_string(st[1]) + "x" + std::to_string(st[2]));
    }
}

// ---- parameter construction ----------------------------------------------------

namespace {

std::string layer_prefix(std::size_t index) {
    std::ostringstream os;
    os << "l" << (index < 10 ? "0" : "") << index;
    return os.str();
}

void init_conv(Parameters& params, const std::string& prefix, int kh, int kw, int ci, int co,
               std::mt19937_64& rng, bool transposed) {
    // Deconv weights are stored (kh,kw,co,ci) to match conv_transpose2d.
    Shape wshape = transposed ? Shape{kh, kw, co, ci} : Shape{kh, kw, ci, co};
    params.add(prefix + ".weight", Tensor::randn(wshape, rng, 0.02));
    params.add(prefix + ".bias", Tensor::zeros({co}));
}

void init_bn(Parameters& params, const std::string& prefix, int c) {
    params.add(prefix + ".gamma", Tensor::full({c}, 1.0));
    params.add(prefix + ".beta", Tensor::zeros({c}));
    params.add(prefix + ".running_mean", Tensor::zeros({c}), false);
    params.add(prefix + ".running_var", Tensor::full({c}, 1.0), false);
}

Parameters build_params(const NetworkSpec& spec, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Parameters params;
    int channels = spec.channels;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        std::string prefix = layer_prefix(i);
        switch (l.kind) {
            case LayerKind::conv:
                init_conv(params, prefix, l.kh, l.kw, channels, l.out_channels, rng, false);
                channels = l.out_channels;
                break;
            case LayerKind::deconv:
                init_conv(params, prefix, l.kh, l.kw, channels, l.out_channels, rng, true);
                channels = l.out_channels;
                break;
            case LayerKind::batchnorm:
                init_bn(params, prefix, channels);
                break;
            case LayerKind::residual_block:
                init_conv(params, prefix + ".conv1", l.kh, l.kw, channels, l.out_channels, rng, false);
                init_bn(params, prefix + ".bn1", l.out_channels);
                init_conv(params, prefix + ".conv2", l.kh, l.kw, l.out_channels, l.out_channels, rng, false);
                init_bn(params, prefix + ".bn2", l.out_channels);
                break;
            default:
                break;
        }
    }
    if (spec.src_head) {
        init_conv(params, "src_head", spec.src_head->kh, spec.src_head->kw, channels,
                  spec.src_head->out_channels, rng, false);
    }
    if (spec.st_head) {
        init_conv(params, "st_head", spec.st_head->kh, spec.st_head->kw, channels,
                  spec.st_head->out_channels, rng, false);
    }
    params.set_requires_grad(true);
    return params;
}

Tensor run_layers(const NetworkSpec& spec, Parameters& params, const Tensor& input, Mode mode) {
    Tensor t = input;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        std::string prefix = layer_prefix(i);
        switch (l.kind) {
            case LayerKind::conv:
                t = conv2d(t, params.at(prefix + ".weight"), l.stride, l.padding);
                t = add_channel_bias(t, params.at(prefix + ".bias"));
                break;
            case LayerKind::deconv:
                t = conv_transpose2d(t, params.at(prefix + ".weight"), l.stride, l.padding,
                                     l.output_padding);
                t = add_channel_bias(t, params.at(prefix + ".bias"));
                break;
            case LayerKind::batchnorm:
                t = batch_norm(t, params.at(prefix + ".gamma"), params.at(prefix + ".beta"),
                               params.at(prefix + ".running_mean"), params.at(prefix + ".running_var"),
                               mode);
                break;
            case LayerKind::relu:
                t = relu(t);
                break;
            case LayerKind::leaky_relu:
                t = leaky_relu(t, l.slope);
                break;
            case LayerKind::tanh:
                t = tanh(t);
                break;
            case LayerKind::residual_block: {
                Tensor y = conv2d(t, params.at(prefix + ".conv1.weight"), l.stride, l.padding);
                y = add_channel_bias(y, params.at(prefix + ".conv1.bias"));
                y = batch_norm(y, params.at(prefix + ".bn1.gamma"), params.at(prefix + ".bn1.beta"),
                               params.at(prefix + ".bn1.running_mean"),
                               params.at(prefix + ".bn1.running_var"), mode);
                y = relu(y);
                y = conv2d(y, params.at(prefix + ".conv2.weight"), l.stride, l.padding);
                y = add_channel_bias(y, params.at(prefix + ".conv2.bias"));
                y = batch_norm(y, params.at(prefix + ".bn2.gamma"), params.at(prefix + ".bn2.beta"),
                               params.at(prefix + ".bn2.running_mean"),
                               params.at(prefix + ".bn2.running_var"), mode);
                t = add(t, y); // identity skip
                break;
            }
        }
    }
    return t;
}

void check_input(const NetworkSpec& spec, const Tensor& x, const char* who) {
    if (x.ndim() != 4 || x.shape()[1] != spec.height || x.shape()[2] != spec.width ||
        x.shape()[3] != spec.channels) {
        throw ShapeError(std::string(who) + " expects (n," + std::to_string(spec.height) + "," +
                         std::to_string(spec.width) + "," + std::to_string(spec.channels) +
                         "), got " + shape_to_string(x.shape()));
    }
}

} // namespace

// ---- Generator --------------------------------------------------------------------

Generator::Generator(NetworkSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
    validate_generator_spec(spec_);
    params_ = build_params(spec_, seed);
}

Tensor Generator::forward(const Tensor& x, Mode mode) {
    check_input(spec_, x, "generator");
    return run_layers(spec_, params_, x, mode);
}

// ---- Discriminator ------------------------------------------------------------------

Discriminator::Discriminator(NetworkSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
    validate_discriminator_spec(spec_);
    params_ = build_params(spec_, seed);
}

Discriminator::Output Discriminator::forward(const Tensor& x, Mode mode) {
    check_input(spec_, x, "discriminator");
    Tensor hidden = run_layers(spec_, params_, x, mode);

    Tensor src = conv2d(hidden, params_.at("src_head.weight"), spec_.src_head->stride,
                        spec_.src_head->padding);
    src = add_channel_bias(src, params_.at("src_head.bias"));

    Tensor st = conv2d(hidden, params_.at("st_head.weight"), spec_.st_head->stride,
                       spec_.st_head->padding);
    st = add_channel_bias(st, params_.at("st_head.bias"));
    st = st.reshape({x.shape()[0], kStrokeCodeWidth});

    return Output{std::move(src), std::move(st)};
}

} // namespace strokegan
