#include "latformer/array.hpp"

#include <stdexcept>
#include <unordered_set>

namespace latformer::ad {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t p = 1;
    for (std::size_t e : shape) p *= e;
    return p;
}

thread_local int g_inference_depth = 0;
thread_local RoutingTrace* g_trace = nullptr;

} // namespace

std::string shape_str(const std::vector<std::size_t>& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

void check(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

Array Array::zeros(std::vector<std::size_t> shape, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value.assign(shape_product(shape), 0.0);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad && !InferenceMode::active();
    return Array(std::move(n));
}

Array Array::from(std::vector<std::size_t> shape, std::vector<double> data,
                  bool requires_grad) {
    check(shape_product(shape) == data.size(),
          "array data length " + std::to_string(data.size()) +
              " does not match shape " + shape_str(shape));
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad && !InferenceMode::active();
    return Array(std::move(n));
}

Array Array::scalar(double v) { return from({1}, {v}); }

std::vector<double>& Array::leaf_value() {
    if (!n_->is_leaf())
        throw std::logic_error("leaf_value() on a non-leaf array");
    return n_->value;
}

double Array::item() const {
    if (size() != 1)
        throw std::logic_error("item() on array of shape " + shape_str(shape()));
    return n_->value[0];
}

void Array::set_requires_grad(bool rg) {
    if (!n_->is_leaf())
        throw std::logic_error("set_requires_grad() on a non-leaf array");
    n_->requires_grad = rg;
}

void backward(const Array& loss) {
    check(loss.valid() && loss.size() == 1,
          "backward requires a scalar loss, got shape " +
              (loss.valid() ? shape_str(loss.shape()) : std::string("<null>")));
    Node* root = loss.node().get();
    if (!root->requires_grad) return;

    // Iterative post-order DFS; the reversed finish order is topological.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
    seen.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* in = node->inputs[next++].get();
            if (in->requires_grad && seen.insert(in).second)
                stack.emplace_back(in, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    // Leaf grads persist (accumulate across calls); scratch grads reset.
    for (Node* n : order) {
        if (n->is_leaf())
            n->ensure_grad();
        else
            n->grad.assign(n->value.size(), 0.0);
    }
    root->grad[0] += 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backprop) (*it)->backprop();
}

InferenceMode::InferenceMode() { ++g_inference_depth; }
InferenceMode::~InferenceMode() { --g_inference_depth; }
bool InferenceMode::active() { return g_inference_depth > 0; }

RoutingTrace::RoutingTrace() : hash_(0xcbf29ce484222325ULL), prev_(g_trace) {
    g_trace = this;
}
RoutingTrace::~RoutingTrace() { g_trace = prev_; }
bool RoutingTrace::active() { return g_trace != nullptr; }

void RoutingTrace::record(const void* bytes, std::size_t n) {
    if (!g_trace) return;
    const auto* p = static_cast<const unsigned char*>(bytes);
    std::uint64_t h = g_trace->hash_;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    g_trace->hash_ = h;
}

void RoutingTrace::record_u64(std::uint64_t v) { record(&v, sizeof(v)); }

} // namespace latformer::ad
