#ifndef STROKEGAN_TENSOR_HPP
#define STROKEGAN_TENSOR_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "strokegan/errors.hpp"

namespace strokegan {

using Shape = std::vector<int>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

class Tape;

namespace detail {

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad; // empty until first backward touches it
    // Tape linkage. tape_id identifies the tape this value was recorded on;
    // ids are never reused, so a stale id simply stops matching.
    std::uint64_t tape_id = 0;
    int node_id = -1;
};

} // namespace detail

// Dense n-dimensional array of 64-bit floats, row-major. Copies are shallow
// (shared storage); use clone() for a deep copy. A Tensor may carry a link to
// the tape node that produced it, which is how backward() finds its way.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double value);
    static Tensor scalar(double value);
    // Validates that every entry is finite.
    static Tensor from_data(Shape shape, std::vector<double> data);
    static Tensor randn(Shape shape, std::mt19937_64& rng, double stddev = 1.0);
    static Tensor rand_uniform(Shape shape, std::mt19937_64& rng, double lo, double hi);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    int ndim() const { return static_cast<int>(shape().size()); }
    std::size_t size() const;
    std::span<const double> data() const;
    std::span<double> mutable_data();
    double item() const; // scalar tensors only
    double at(std::size_t flat_index) const;

    bool requires_grad() const;
    Tensor& set_requires_grad(bool value);
    bool has_grad() const;
    std::span<const double> grad() const; // throws if no gradient accumulated yet
    void zero_grad();
    void accumulate_grad(std::span<const double> g);

    // Same storage, no tape linkage, no gradient tracking.
    Tensor detach() const;
    // Deep copy of the values; no tape linkage.
    Tensor clone() const;
    Tensor reshape(Shape new_shape) const;

    detail::TensorImpl* impl() const { return impl_.get(); }
    std::shared_ptr<detail::TensorImpl> impl_ptr() const { return impl_; }

private:
    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<detail::TensorImpl> impl_;

    friend class Tape;
    friend Tensor make_op_output(Shape shape, std::vector<double> data,
                                 std::vector<const Tensor*> inputs, const char* op_name,
                                 std::function<void(std::span<const double>,
                                                    const std::vector<std::span<double>>&)> backward);
};

// Reverse-mode tape. Creating a Tape makes it the active tape for the current
// thread until it is destroyed (scoped, innermost wins). Ops record a node
// when an input is gradient-tracked; without an active tape they evaluate
// eagerly. Single-threaded per tape.
class Tape {
public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Runs reverse accumulation from a scalar loss. Every requires_grad leaf
    // reachable from the loss receives its gradient, both in the returned map
    // (node_id -> grad) and accumulated into the leaf's grad slot. Repeated
    // calls keep accumulating until zero_grad().
    std::unordered_map<int, std::vector<double>> backward(const Tensor& loss);

    std::uint64_t id() const { return id_; }
    std::size_t node_count() const { return nodes_.size(); }

    static Tape* active();

    // Recording interface (used by op implementations).
    using BackwardFn =
        std::function<void(std::span<const double> upstream,
                           const std::vector<std::span<double>>& parent_grads)>;
    int leaf_node(const Tensor& t);
    int record(std::vector<int> parents, std::size_t output_size, BackwardFn fn);

private:
    struct Node {
        std::vector<int> parents;
        std::size_t size = 0;
        BackwardFn backward;
    };
    std::uint64_t id_;
    std::vector<Node> nodes_;
    // Leaves watched on this tape: node id -> tensor impl (kept alive).
    std::vector<std::pair<int, std::shared_ptr<detail::TensorImpl>>> leaves_;
    std::unordered_map<const detail::TensorImpl*, int> leaf_ids_;
};

// Suppresses recording for its lifetime (used for eager evaluation inside
// gradient checks while an outer tape exists).
class NoTape {
public:
    NoTape();
    ~NoTape();
    NoTape(const NoTape&) = delete;
    NoTape& operator=(const NoTape&) = delete;
};

// Extension point for fused ops (convolutions, batch norm, ...): validates the
// output, records a tape node when gradient tracking is on, and wires the
// backward closure to the inputs' nodes. parent_grads spans line up with
// `inputs`; an empty span means that input's gradient is not needed.
Tensor make_op_output(Shape shape, std::vector<double> data, std::vector<const Tensor*> inputs,
                      const char* op_name, Tape::BackwardFn backward);

// ---- elementwise ops ------------------------------------------------------

enum class EwiseOp { add, sub, mul, neg, abs, log, square, sqrt, scale };

// Generic dispatcher. Binary ops need b; scale needs the constant. Shapes must
// match exactly or one binary operand must be a scalar.
Tensor elementwise(EwiseOp op, const Tensor& a, const Tensor* b = nullptr,
                   double constant = 0.0);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor abs(const Tensor& a);   // subgradient 0 at 0
Tensor log(const Tensor& a);   // domain error on input <= 0
Tensor square(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);

// Extra tape ops used by the networks and losses.
Tensor exp(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope);
// Saturating clamp; backward passes gradient only where lo < x < hi.
Tensor clamp(const Tensor& a, double lo, double hi);
// Adds a length-c vector to every row of an (n, c) tensor (bias add).
Tensor add_rowvec(const Tensor& a, const Tensor& v);

// ---- reductions -----------------------------------------------------------

enum class ReduceOp { sum, mean, l1_norm, l2_norm };

// Reduces over the given axes (all axes when empty); reduced axes are removed
// from the shape. l2 subgradient at ||v|| = 0 is 0, matching abs.
Tensor reduce(ReduceOp op, const Tensor& a, const std::vector<int>& axes = {});

Tensor sum(const Tensor& a, const std::vector<int>& axes = {});
Tensor mean(const Tensor& a, const std::vector<int>& axes = {});
Tensor l1_norm(const Tensor& a, const std::vector<int>& axes = {});
Tensor l2_norm(const Tensor& a, const std::vector<int>& axes = {});

// ---- matmul ---------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b); // (m,k) x (k,n) -> (m,n)

// ---- gradient checking ----------------------------------------------------

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::size_t checked = 0;
    // Coordinates skipped because the two one-sided differences disagree
    // (non-differentiable point such as |x| at 0).
    std::vector<std::size_t> excluded;
};

// Compares the tape gradient of f (scalar-valued) w.r.t. x against central
// finite differences. Relative error uses max(|analytic|, |numeric|, 1e-8).
// coords empty = all coordinates.
GradCheckResult grad_check(const std::function<Tensor(const Tensor&)>& f,
                           const Tensor& x, double eps = 1e-5,
                           const std::vector<std::size_t>& coords = {});

} // namespace strokegan

#endif
