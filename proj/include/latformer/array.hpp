#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

// Reverse-mode array engine. Arrays are shared handles to graph nodes; node
// values are immutable once built (leaf values may be edited between graph
// constructions, e.g. by the optimizer or finite differencing). Gradients
// accumulate into leaves; intermediate gradients are scratch per backward().

namespace latformer::ad {

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
    std::vector<std::size_t> shape;
    std::vector<double> value;
    std::vector<double> grad;   // empty until needed; same length as value after
    bool requires_grad = false;
    std::vector<NodePtr> inputs;
    std::function<void()> backprop;  // reads this->grad, accumulates into inputs

    std::size_t size() const { return value.size(); }
    bool is_leaf() const { return inputs.empty(); }
    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};

class Array {
public:
    Array() = default;
    explicit Array(NodePtr n) : n_(std::move(n)) {}

    static Array zeros(std::vector<std::size_t> shape, bool requires_grad = false);
    static Array from(std::vector<std::size_t> shape, std::vector<double> data,
                      bool requires_grad = false);
    static Array scalar(double v);

    bool valid() const { return static_cast<bool>(n_); }
    const std::vector<std::size_t>& shape() const { return n_->shape; }
    std::size_t size() const { return n_->size(); }
    std::size_t rank() const { return n_->shape.size(); }
    std::size_t rows() const { return n_->shape.at(0); }
    std::size_t cols() const { return n_->shape.at(1); }

    const std::vector<double>& value() const { return n_->value; }
    std::vector<double>& leaf_value();           // throws on non-leaf
    const std::vector<double>& grad() const { return n_->grad; }
    double item() const;                         // throws unless size()==1

    bool requires_grad() const { return n_->requires_grad; }
    void set_requires_grad(bool rg);             // leaves only
    void zero_grad() { n_->grad.assign(n_->value.size(), 0.0); }

    const NodePtr& node() const { return n_; }

private:
    NodePtr n_;
};

// Accumulates d(loss)/d(leaf) into every requires_grad leaf reachable from
// loss. Repeatable: intermediate grads are reset per call, so two calls
// without a leaf reset add the same contribution twice.
void backward(const Array& loss);

// While a guard is alive, ops skip graph bookkeeping (values only).
class InferenceMode {
public:
    InferenceMode();
    ~InferenceMode();
    InferenceMode(const InferenceMode&) = delete;
    InferenceMode& operator=(const InferenceMode&) = delete;
    static bool active();
};

// Records the discrete routing decisions (relu signs, argmax winners, gate
// masks) of the ops executed while installed. Finite-difference checks use
// the hash to detect and exclude coordinates whose routing flips near the
// evaluation point.
class RoutingTrace {
public:
    RoutingTrace();
    ~RoutingTrace();
    RoutingTrace(const RoutingTrace&) = delete;
    RoutingTrace& operator=(const RoutingTrace&) = delete;

    static bool active();
    static void record(const void* bytes, std::size_t n);
    static void record_u64(std::uint64_t v);

    std::uint64_t hash() const { return hash_; }

private:
    std::uint64_t hash_;
    RoutingTrace* prev_;
};

std::string shape_str(const std::vector<std::size_t>& s);
void check(bool cond, const std::string& msg);

} // namespace latformer::ad
