#include "strokegan/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>

namespace strokegan {

namespace {

thread_local std::vector<Tape*> g_tape_stack;
std::atomic<std::uint64_t> g_next_tape_id{1};

void check_finite(std::span<const double> values, const char* op_name) {
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw NumericError(std::string("non-finite value produced by ") + op_name);
        }
    }
}

bool is_scalar_shape(const Shape& s) { return shape_numel(s) == 1; }

} // namespace

Tensor make_op_output(Shape shape, std::vector<double> data, std::vector<const Tensor*> inputs,
                      const char* op_name, Tape::BackwardFn backward);

std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
}

// ---- Tensor ----------------------------------------------------------------

static std::shared_ptr<detail::TensorImpl> make_impl(Shape shape, std::vector<double> data) {
    for (int d : shape) {
        if (d <= 0) throw ShapeError("tensor dimensions must be positive, got " + shape_to_string(shape));
    }
    if (shape_numel(shape) != data.size()) {
        throw ShapeError("shape " + shape_to_string(shape) + " does not match data length " +
                         std::to_string(data.size()));
    }
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    return impl;
}

Tensor Tensor::zeros(Shape shape) {
    std::size_t n = shape_numel(shape);
    return Tensor(make_impl(std::move(shape), std::vector<double>(n, 0.0)));
}

Tensor Tensor::full(Shape shape, double value) {
    if (!std::isfinite(value)) throw NumericError("Tensor::full with non-finite value");
    std::size_t n = shape_numel(shape);
    return Tensor(make_impl(std::move(shape), std::vector<double>(n, value)));
}

Tensor Tensor::scalar(double value) { return full({1}, value); }

Tensor Tensor::from_data(Shape shape, std::vector<double> data) {
    check_finite(data, "Tensor::from_data");
    return Tensor(make_impl(std::move(shape), std::move(data)));
}

Tensor Tensor::randn(Shape shape, std::mt19937_64& rng, double stddev) {
    // Box-Muller on explicit uniforms so the draw sequence depends only on the
    // engine, not on library internals.
    std::size_t n = shape_numel(shape);
    std::vector<double> data(n);
    for (std::size_t i = 0; i < n; ++i) {
        double u1 = 0.0;
        do {
            u1 = (static_cast<double>(rng() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
        } while (u1 <= 0.0);
        double u2 = (static_cast<double>(rng() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
        data[i] = stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }
    return Tensor(make_impl(std::move(shape), std::move(data)));
}

Tensor Tensor::rand_uniform(Shape shape, std::mt19937_64& rng, double lo, double hi) {
    std::size_t n = shape_numel(shape);
    std::vector<double> data(n);
    for (std::size_t i = 0; i < n; ++i) {
        double u = (static_cast<double>(rng() >> 11)) * (1.0 / 9007199254740992.0);
        data[i] = lo + (hi - lo) * u;
    }
    return Tensor(make_impl(std::move(shape), std::move(data)));
}

const Shape& Tensor::shape() const {
    if (!impl_) throw ContractError("use of an undefined Tensor");
    return impl_->shape;
}

std::size_t Tensor::size() const { return impl_ ? impl_->data.size() : 0; }

std::span<const double> Tensor::data() const {
    if (!impl_) throw ContractError("use of an undefined Tensor");
    return impl_->data;
}

std::span<double> Tensor::mutable_data() {
    if (!impl_) throw ContractError("use of an undefined Tensor");
    return impl_->data;
}

double Tensor::item() const {
    if (size() != 1) throw ContractError("item() on non-scalar tensor of shape " + shape_to_string(shape()));
    return impl_->data[0];
}

double Tensor::at(std::size_t flat_index) const {
    if (flat_index >= size()) throw ContractError("flat index out of range");
    return impl_->data[flat_index];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool value) {
    if (!impl_) throw ContractError("set_requires_grad on undefined Tensor");
    impl_->requires_grad = value;
    return *this;
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<const double> Tensor::grad() const {
    if (!has_grad()) throw ContractError("tensor has no accumulated gradient");
    return impl_->grad;
}

void Tensor::zero_grad() {
    if (impl_) impl_->grad.clear();
}

void Tensor::accumulate_grad(std::span<const double> g) {
    if (!impl_) throw ContractError("accumulate_grad on undefined Tensor");
    if (g.size() != impl_->data.size()) throw ShapeError("gradient length mismatch");
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) impl_->grad[i] += g[i];
}

Tensor Tensor::detach() const {
    if (!impl_) return Tensor();
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = impl_->shape;
    impl->data = impl_->data; // value copy; detached views must not alias tape-linked storage
    return Tensor(std::move(impl));
}

Tensor Tensor::clone() const {
    if (!impl_) return Tensor();
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = impl_->shape;
    impl->data = impl_->data;
    impl->requires_grad = impl_->requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::reshape(Shape new_shape) const {
    if (!impl_) throw ContractError("reshape of undefined Tensor");
    if (shape_numel(new_shape) != size()) {
        throw ShapeError("reshape " + shape_to_string(shape()) + " -> " + shape_to_string(new_shape) +
                         " changes element count");
    }
    // Recorded as a node so gradients flow through shape changes.
    return make_op_output(std::move(new_shape), std::vector<double>(impl_->data), {this}, "reshape",
                          [](std::span<const double> up, const std::vector<std::span<double>>& pg) {
                              if (pg[0].empty()) return;
                              for (std::size_t i = 0; i < up.size(); ++i) pg[0][i] += up[i];
                          });
}

// ---- Tape ------------------------------------------------------------------

Tape::Tape() : id_(g_next_tape_id.fetch_add(1)) { g_tape_stack.push_back(this); }

Tape::~Tape() {
    if (!g_tape_stack.empty() && g_tape_stack.back() == this) {
        g_tape_stack.pop_back();
    } else {
        // Out-of-order destruction; remove without popping others.
        std::erase(g_tape_stack, this);
    }
}

Tape* Tape::active() {
    return g_tape_stack.empty() ? nullptr : g_tape_stack.back();
}

NoTape::NoTape() { g_tape_stack.push_back(nullptr); }
NoTape::~NoTape() {
    if (!g_tape_stack.empty()) g_tape_stack.pop_back();
}

int Tape::leaf_node(const Tensor& t) {
    auto* impl = t.impl();
    auto it = leaf_ids_.find(impl);
    if (it != leaf_ids_.end()) return it->second;
    int id = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{{}, t.size(), nullptr});
    leaf_ids_.emplace(impl, id);
    leaves_.emplace_back(id, t.impl_ptr());
    return id;
}

int Tape::record(std::vector<int> parents, std::size_t output_size, BackwardFn fn) {
    int id = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{std::move(parents), output_size, std::move(fn)});
    return id;
}

std::unordered_map<int, std::vector<double>> Tape::backward(const Tensor& loss) {
    if (loss.size() != 1) {
        throw ContractError("backward() expects a scalar loss, got shape " + shape_to_string(loss.shape()));
    }
    auto* impl = loss.impl();
    if (!impl || impl->tape_id != id_) {
        throw ContractError("loss tensor is not on this tape");
    }
    std::vector<std::vector<double>> grads(nodes_.size());
    grads[impl->node_id] = {1.0};

    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
        if (grads[i].empty()) continue;
        const Node& node = nodes_[i];
        if (!node.backward) continue; // leaf
        std::vector<std::span<double>> parent_grads;
        parent_grads.reserve(node.parents.size());
        for (int p : node.parents) {
            if (p < 0) {
                parent_grads.emplace_back(); // constant input, gradient discarded
                continue;
            }
            if (grads[p].empty()) grads[p].assign(nodes_[p].size, 0.0);
            parent_grads.emplace_back(grads[p]);
        }
        node.backward(grads[i], parent_grads);
    }

    std::unordered_map<int, std::vector<double>> result;
    for (auto& [node_id, leaf] : leaves_) {
        if (!leaf->requires_grad) continue;
        if (grads[node_id].empty()) grads[node_id].assign(nodes_[node_id].size, 0.0);
        if (leaf->grad.empty()) leaf->grad.assign(leaf->data.size(), 0.0);
        for (std::size_t i = 0; i < grads[node_id].size(); ++i) leaf->grad[i] += grads[node_id][i];
        result.emplace(node_id, grads[node_id]);
    }
    return result;
}

// Shared helper: evaluates inputs, records the node when gradient tracking is
// on, and attaches the tape linkage to the output tensor.
Tensor make_op_output(Shape shape, std::vector<double> data, std::vector<const Tensor*> inputs,
                      const char* op_name, Tape::BackwardFn backward) {
    check_finite(data, op_name);
    auto impl = make_impl(std::move(shape), std::move(data));
    Tape* tape = Tape::active();
    if (tape) {
        bool track = false;
        for (const Tensor* in : inputs) {
            if (!in || !in->defined()) continue;
            if (in->requires_grad()) track = true;
            auto* ii = in->impl();
            if (ii->tape_id == tape->id() && ii->node_id >= 0) track = true;
        }
        if (track) {
            std::vector<int> parents;
            parents.reserve(inputs.size());
            for (const Tensor* in : inputs) {
                if (!in || !in->defined()) {
                    parents.push_back(-1);
                    continue;
                }
                auto* ii = in->impl();
                if (ii->tape_id == tape->id() && ii->node_id >= 0) {
                    parents.push_back(ii->node_id);
                } else if (in->requires_grad()) {
                    parents.push_back(tape->leaf_node(*in));
                } else {
                    parents.push_back(-1);
                }
            }
            int id = tape->record(std::move(parents), impl->data.size(), std::move(backward));
            impl->tape_id = tape->id();
            impl->node_id = id;
        }
    }
    return Tensor(std::move(impl));
}

// ---- elementwise -----------------------------------------------------------

namespace {

struct BinaryPlan {
    Shape out_shape;
    bool a_scalar = false;
    bool b_scalar = false;
};

BinaryPlan plan_binary(const Tensor& a, const Tensor& b, const char* op_name) {
    BinaryPlan plan;
    plan.a_scalar = is_scalar_shape(a.shape());
    plan.b_scalar = is_scalar_shape(b.shape());
    if (a.shape() == b.shape()) {
        plan.out_shape = a.shape();
        plan.a_scalar = plan.b_scalar = false;
    } else if (plan.b_scalar) {
        plan.out_shape = a.shape();
    } else if (plan.a_scalar) {
        plan.out_shape = b.shape();
    } else {
        throw ShapeError(std::string(op_name) + ": shape mismatch " + shape_to_string(a.shape()) +
                         " vs " + shape_to_string(b.shape()) +
                         " (only scalar broadcasting is supported)");
    }
    return plan;
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    BinaryPlan plan = plan_binary(a, b, "add");
    std::size_t n = shape_numel(plan.out_shape);
    std::vector<double> out(n);
    auto da = a.data(), db = b.data();
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = da[plan.a_scalar ? 0 : i] + db[plan.b_scalar ? 0 : i];
    }
    bool a_sc = plan.a_scalar, b_sc = plan.b_scalar;
    return make_op_output(plan.out_shape, std::move(out), {&a, &b}, "add",
        [a_sc, b_sc](std::span<const double> up, const std::vector<std::span<double>>& pg) {
            if (!pg[0].empty()) {
                if (a_sc) { for (double u : up) pg[0][0] += u; }
                else { for (std::size_t i = 0; i < up.size(); ++i) pg[0][i] += up[i]; }
            }
            if (!pg[1].empty()) {
                if (b_sc) { for (double u : up) pg[1][0] += u; }
                else { for (std::size_t i = 0; i < up.size(); ++i) pg[1][i] += up[i]; }
            }
        });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    BinaryPlan plan = plan_binary(a, b, "sub");
    std::size_t n = shape_numel(plan.out_shape);
    std::vector<double> out(n);
    auto da = a.data(), db = b.data();
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = da[plan.a_scalar ? 0 : i] - db[plan.b_scalar ? 0 : i];
    }
    bool a_sc = plan.a_scalar, b_sc = plan.b_scalar;
    return make_op_output(plan.out_shape, std::move(out), {&a, &b}, "sub",
        [a_sc, b_sc](std::span<const double> up, const std::vector<std::span<double>>& pg) {
            if (!pg[0].empty()) {
                if (a_sc) { for (double u : up) pg[0][0] += u; }
                else { for (std::size_t i = 0; i < up.size(); ++i) pg[0][i] += up[i]; }
            }
            if (!pg[1].empty()) {
                if (b_sc) { for (double u : up) pg[1][0] -= u; }
                else { for (std::size_t i = 0; i < up.size(); ++i) pg[1][i] -= up[i]; }
            }
        });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    BinaryPlan plan = plan_binary(a, b, "mul");
    std::size_t n = shape_numel(plan.out_shape);
    std::vector<double> out(n);
    auto da = a.data(), db = b.data();
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = da[plan.a_scalar ? 0 : i] * db[plan.b_scalar ? 0 : i];
    }
    bool a_sc = plan.a_scalar, b_sc = plan.b_scalar;
    Tensor av = a, bv = b; // keep forward values alive for backward
    return make_op_output(plan.out_shape, std::move(out), {&a, &b}, "mul",
        [a_sc, b_sc, av, bv](std::span<const double> up, const std::vector<std::span<double>>& pg) {
            auto da2 = av.data(), db2 = bv.data();
            if (!pg[0].empty()) {
                for (std::size_t i = 0; i < up.size(); ++i) {
                    double g = up[i] * db2[b_sc ? 0 : i];
                    pg[0][a_sc ? 0 : i] += g;
                }
            }
            if (!pg[1].empty()) {
                for (std::size_t i = 0; i < up.size(); ++i) {
                    double g = up[i] * da2[a_sc ? 0 : i];
                    pg[1][b_sc ? 0 : i] += g;
                }
            }
        });
}

namespace {

template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& a, const char* name, Fwd fwd, Bwd bwd_factor) {
    std::size_t n = a.size();
    std::vector<double> out(n);
    auto da = a.data();
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(da[i]);
    Tensor av = a;
    return make_op_output(a.shape(), std::move(out), {&a}, name,
        [av, bwd_factor](std::span<const double> up, const std::vector<std::span<double>>& pg) {
            if (pg[0].empty()) return;
            auto da2 = av.data();
            for (std::size_t i = 0; i < up.size(); ++i) pg[0][i] += up[i] * bwd_factor(da2[i]);
        });
}

} // namespace

Tensor neg(const Tensor& a) {
    return unary_op(a, "neg", [](double x) { return -x; }, [](double) { return -1.0; });
}

Tensor abs(const Tensor& a) {
    return unary_op(a, "abs", [](double x) { return std::fabs(x); },
                    [](double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Tensor log(const Tensor& a) {
    for (double v : a.data()) {
        if (v <= 0.0) throw DomainError("log of non-positive value " + std::to_string(v));
    }
    return unary_op(a, "log", [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

Tensor square(const Tensor& a) {
    return unary_op(a, "square", [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

Tensor sqrt(const Tensor& a) {
    for (double v : a.data()) {
        if (v < 0.0) throw DomainError("sqrt of negative value " + std::to_string(v));
    }
    // Subgradient 0 at 0 keeps l2-type losses defined at exact reconstruction.
    return unary_op(a, "sqrt", [](double x) { return std::sqrt(x); },
                    [](double x) { return x > 0 ? 0.5 / std::sqrt(x) : 0.0; });
}

Tensor scale(const Tensor& a, double c) {
    if (!std::isfinite(c)) throw NumericError("scale by non-finite constant");
    return unary_op(a, "scale", [c](double x) { return c * x; }, [c](double) { return c; });
}

Tensor add_scalar(const Tensor& a, double c) {
    if (!std::isfinite(c)) throw NumericError("add_scalar with non-finite constant");
    return unary_op(a, "add_scalar", [c](double x) { return x + c; }, [](double) { return 1.0; });
}

Tensor exp(const Tensor& a) {
    std::size_t n = a.size();
    std::vector<double> out(n);
    auto da = a.data();
    for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(da[i]);
    std::vector<double> saved = out;
    return make_op_output(a.shape(), std::move(out), {&a}, "exp",
        [saved = std::move(saved)](std::span<const double> up, const std::vector<std::span<double>>& pg) {
            if (pg[0].empty()) return;
            for (std::size_t i = 0; i < up.size(); ++i) pg[0][i] += up[i] * saved[i];
        });
}

Tensor sigmoid(const Tensor& a) {
    std::size_t n = a.size();
    std::vector<double> out(n);
    auto da = a.data();
    for (std::size_t i = 0; i < n; ++i) {
        double x = da[i];
        out[i] = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    }
    std::vector<double> saved = out;
    return make_op_output(a.shape(), std::move(out), {&a}, "sigmoid",
        [saved = std::move(saved)](std::span<const double> up, const std::vector<std::span<double>>& pg) {
            if (pg[0].empty()) return;
            for (std::size_t i = 0; i < up.size(); ++i) {
                pg[0][i] += up[i] * saved[i] * (1.0 - saved[i]);
            }
        });
}

Tensor tanh(const Tensor& a) {
    std::size_t n = a.size();
    std::vector<double> out(n);
    auto da = a.data();
    for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(da[i]);
    std::vector<double> saved = out;
    return make_op_output(a.shape(), std::move(out), {&a}, "tanh",
        [saved = std::move(saved)](std::span<const double> up, const std::vector<std::span<double>>& pg) {
            if (pg[0].empty()) return;
            for (std::size_t i = 0; i < up.size(); ++i) pg[0][i] += up[i] * (1.0 - saved[i] * saved[i]);
        });
}

Tensor relu(const Tensor& a) {
    return unary_op(a, "relu", [](double x) { return x > 0 ? x : 0.0; },
                    [](double x) { return x > 0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& a, double slope) {
    return unary_op(a, "leaky_relu", [slope](double x) { return x > 0 ? x : slope * x; },
                    [slope](double x) { return x > 0 ? 1.0 : slope; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
    if (lo > hi) throw ContractError("clamp with lo > hi");
    return unary_op(a, "clamp",
                    [lo, hi](double x) { return x < lo ? lo : (x > hi ? hi : x); },
                    [lo, hi](double x) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Tensor add_rowvec(const Tensor& a, const Tensor& v) {
    if (a.ndim() != 2 || v.ndim() != 1 || a.shape()[1] != v.shape()[0]) {
        throw ShapeError("add_rowvec: need (n,c) and (c), got " + shape_to_string(a.shape()) + " and " +
                         shape_to_string(v.shape()));
    }
    std::size_t rows = static_cast<std::size_t>(a.shape()[0]);
    std::size_t cols = static_cast<std::size_t>(a.shape()[1]);
    std::vector<double> out(rows * cols);
    auto da = a.data(), dv = v.data();
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = da[r * cols + c] + dv[c];
    }
    return make_op_output(a.shape(), std::move(out), {&a, &v}, "add_rowvec",
        [rows, cols](std::span<const double> up, const std::vector<std::span<double>>& pg) {
            if (!pg[0].empty()) {
                for (std::size_t i = 0; i < up.size(); ++i) pg[0][i] += up[i];
            }
            if (!pg[1].empty()) {
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t c = 0; c < cols; ++c) pg[1][c] += up[r * cols + c];
                }
            }
        });
}

Tensor elementwise(EwiseOp op, const Tensor& a, const Tensor* b, double constant) {
    switch (op) {
        case EwiseOp::add:
            if (!b) throw ContractError("elementwise add needs two operands");
            return add(a, *b);
        case EwiseOp::sub:
            if (!b) throw ContractError("elementwise sub needs two operands");
            return sub(a, *b);
        case EwiseOp::mul:
            if (!b) throw ContractError("elementwise mul needs two operands");
            return mul(a, *b);
        case EwiseOp::neg: return neg(a);
        case EwiseOp::abs: return abs(a);
        case EwiseOp::log: return log(a);
        case EwiseOp::square: return square(a);
        case EwiseOp::sqrt: return sqrt(a);
        case EwiseOp::scale: return scale(a, constant);
    }
    throw ContractError("unknown elementwise op kind");
}

// ---- reductions -------------------------------------------------------------

namespace {

struct ReducePlan {
    Shape out_shape;          // reduced axes removed; {1} when everything reduced
    std::vector<bool> reduced;
    std::size_t group_count = 1; // number of output elements
    std::size_t group_size = 1;  // elements folded into each output
    std::vector<std::size_t> out_index_of; // input flat index -> output flat index
};

ReducePlan plan_reduce(const Tensor& a, const std::vector<int>& axes) {
    const Shape& shape = a.shape();
    int nd = static_cast<int>(shape.size());
    ReducePlan plan;
    plan.reduced.assign(nd, false);
    if (axes.empty()) {
        plan.reduced.assign(nd, true);
    } else {
        for (int ax : axes) {
            if (ax < 0 || ax >= nd) {
                throw ShapeError("reduce axis " + std::to_string(ax) + " invalid for shape " +
                                 shape_to_string(shape));
            }
            plan.reduced[ax] = true;
        }
    }
    for (int d = 0; d < nd; ++d) {
        if (plan.reduced[d]) plan.group_size *= static_cast<std::size_t>(shape[d]);
        else { plan.out_shape.push_back(shape[d]); plan.group_count *= static_cast<std::size_t>(shape[d]); }
    }
    if (plan.out_shape.empty()) plan.out_shape = {1};
    if (plan.group_size == 0 || a.size() == 0) throw DomainError("reduction over zero elements");

    // Map each input element to its output slot.
    plan.out_index_of.resize(a.size());
    std::vector<std::size_t> strides(nd, 1);
    for (int d = nd - 2; d >= 0; --d) strides[d] = strides[d + 1] * static_cast<std::size_t>(shape[d + 1]);
    std::vector<std::size_t> out_strides;
    {
        std::vector<std::size_t> kept_dims;
        for (int d = 0; d < nd; ++d) if (!plan.reduced[d]) kept_dims.push_back(static_cast<std::size_t>(shape[d]));
        out_strides.assign(kept_dims.size(), 1);
        for (int d = static_cast<int>(kept_dims.size()) - 2; d >= 0; --d) {
            out_strides[d] = out_strides[d + 1] * kept_dims[d + 1];
        }
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        std::size_t rem = i, out = 0, k = 0;
        for (int d = 0; d < nd; ++d) {
            std::size_t idx = rem / strides[d];
            rem %= strides[d];
            if (!plan.reduced[d]) out += idx * out_strides[k++];
        }
        plan.out_index_of[i] = out;
    }
    return plan;
}

} // namespace

Tensor reduce(ReduceOp op, const Tensor& a, const std::vector<int>& axes) {
    ReducePlan plan = plan_reduce(a, axes);
    auto da = a.data();
    std::vector<double> out(plan.group_count, 0.0);

    switch (op) {
        case ReduceOp::sum:
        case ReduceOp::mean:
            for (std::size_t i = 0; i < da.size(); ++i) out[plan.out_index_of[i]] += da[i];
            if (op == ReduceOp::mean) {
                for (double& v : out) v /= static_cast<double>(plan.group_size);
            }
            break;
        case ReduceOp::l1_norm:
            for (std::size_t i = 0; i < da.size(); ++i) out[plan.out_index_of[i]] += std::fabs(da[i]);
            break;
        case ReduceOp::l2_norm:
            for (std::size_t i = 0; i < da.size(); ++i) out[plan.out_index_of[i]] += da[i] * da[i];
            for (double& v : out) v = std::sqrt(v);
            break;
    }

    Tensor av = a;
    auto indices = std::make_shared<std::vector<std::size_t>>(std::move(plan.out_index_of));
    double inv_group = 1.0 / static_cast<double>(plan.group_size);
    std::vector<double> saved_out; // only l2 needs the forward output
    if (op == ReduceOp::l2_norm) saved_out = out;

    return make_op_output(plan.out_shape, std::move(out), {&a}, "reduce",
        [op, av, indices, inv_group, saved_out = std::move(saved_out)](
            std::span<const double> up, const std::vector<std::span<double>>& pg) {
            if (pg[0].empty()) return;
            auto da2 = av.data();
            const auto& idx = *indices;
            switch (op) {
                case ReduceOp::sum:
                    for (std::size_t i = 0; i < da2.size(); ++i) pg[0][i] += up[idx[i]];
                    break;
                case ReduceOp::mean:
                    for (std::size_t i = 0; i < da2.size(); ++i) pg[0][i] += up[idx[i]] * inv_group;
                    break;
                case ReduceOp::l1_norm:
                    for (std::size_t i = 0; i < da2.size(); ++i) {
                        double s = da2[i] > 0 ? 1.0 : (da2[i] < 0 ? -1.0 : 0.0);
                        pg[0][i] += up[idx[i]] * s;
                    }
                    break;
                case ReduceOp::l2_norm:
                    for (std::size_t i = 0; i < da2.size(); ++i) {
                        double norm = saved_out[idx[i]];
                        if (norm > 0) pg[0][i] += up[idx[i]] * da2[i] / norm;
                    }
                    break;
            }
        });
}

Tensor sum(const Tensor& a, const std::vector<int>& axes) { return reduce(ReduceOp::sum, a, axes); }
Tensor mean(const Tensor& a, const std::vector<int>& axes) { return reduce(ReduceOp::mean, a, axes); }
Tensor l1_norm(const Tensor& a, const std::vector<int>& axes) { return reduce(ReduceOp::l1_norm, a, axes); }
Tensor l2_norm(const Tensor& a, const std::vector<int>& axes) { return reduce(ReduceOp::l2_norm, a, axes); }

// ---- matmul -----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2) {
        throw ShapeError("matmul expects rank-2 tensors, got " + shape_to_string(a.shape()) + " and " +
                         shape_to_string(b.shape()));
    }
    std::size_t m = static_cast<std::size_t>(a.shape()[0]);
    std::size_t k = static_cast<std::size_t>(a.shape()[1]);
    std::size_t k2 = static_cast<std::size_t>(b.shape()[0]);
    std::size_t n = static_cast<std::size_t>(b.shape()[1]);
    if (k != k2) {
        throw ShapeError("matmul inner dimensions disagree: " + shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()));
    }
    std::vector<double> out(m * n, 0.0);
    auto da = a.data(), db = b.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t kk = 0; kk < k; ++kk) {
            double av = da[i * k + kk];
            const double* brow = &db[kk * n];
            double* orow = &out[i * n];
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    Tensor at = a, bt = b;
    return make_op_output({static_cast<int>(m), static_cast<int>(n)}, std::move(out), {&a, &b}, "matmul",
        [at, bt, m, k, n](std::span<const double> up, const std::vector<std::span<double>>& pg) {
            auto da2 = at.data(), db2 = bt.data();
            if (!pg[0].empty()) {
                // grad_a = upstream . b^T
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t kk = 0; kk < k; ++kk) {
                        double acc = 0.0;
                        const double* urow = &up[i * n];
                        const double* brow = &db2[kk * n];
                        for (std::size_t j = 0; j < n; ++j) acc += urow[j] * brow[j];
                        pg[0][i * k + kk] += acc;
                    }
                }
            }
            if (!pg[1].empty()) {
                // grad_b = a^T . upstream
                for (std::size_t kk = 0; kk < k; ++kk) {
                    for (std::size_t i = 0; i < m; ++i) {
                        double av = da2[i * k + kk];
                        const double* urow = &up[i * n];
                        double* grow = &pg[1][kk * n];
                        for (std::size_t j = 0; j < n; ++j) grow[j] += av * urow[j];
                    }
                }
            }
        });
}

// ---- gradient checking --------------------------------------------------------

GradCheckResult grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           double eps, const std::vector<std::size_t>& coords) {
    if (eps <= 0) throw ContractError("grad_check eps must be positive");

    Tensor probe = x.clone();
    probe.set_requires_grad(true);
    std::vector<double> analytic;
    {
        Tape tape;
        Tensor loss = f(probe);
        if (loss.size() != 1) throw ContractError("grad_check: f must return a scalar");
        tape.backward(loss);
        if (probe.has_grad()) {
            analytic.assign(probe.grad().begin(), probe.grad().end());
        } else {
            analytic.assign(probe.size(), 0.0);
        }
    }

    auto eval = [&f](const Tensor& point) {
        NoTape guard;
        Tensor value = f(point);
        if (value.size() != 1) throw ContractError("grad_check: f must return a scalar");
        return value.item();
    };

    std::vector<std::size_t> all;
    const std::vector<std::size_t>* which = &coords;
    if (coords.empty()) {
        all.resize(x.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        which = &all;
    }

    GradCheckResult result;
    Tensor work = x.clone();
    auto wd = work.mutable_data();
    double f0 = eval(work);
    for (std::size_t i : *which) {
        double orig = wd[i];
        wd[i] = orig + eps;
        double fp = eval(work);
        wd[i] = orig - eps;
        double fm = eval(work);
        wd[i] = orig;

        double numeric = (fp - fm) / (2.0 * eps);
        // Kink detection: the two one-sided slopes disagreeing means the
        // function is not differentiable here; report and skip.
        double sp = (fp - f0) / eps;
        double sm = (f0 - fm) / eps;
        if (std::fabs(sp - sm) > 1e-2 * std::max({std::fabs(sp), std::fabs(sm), 1.0})) {
            result.excluded.push_back(i);
            continue;
        }
        double denom = std::max({std::fabs(analytic[i]), std::fabs(numeric), 1e-8});
        double rel = std::fabs(analytic[i] - numeric) / denom;
        result.max_rel_err = std::max(result.max_rel_err, rel);
        ++result.checked;
    }
    return result;
}

} // namespace strokegan
