#include "latformer/ops.hpp"

#include "latformer/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

namespace latformer::ad {

namespace {

// Attach inputs and a backprop closure unless nothing upstream needs grads.
Array finish(NodePtr out, std::vector<NodePtr> ins,
             std::function<void()> backprop) {
    bool rg = false;
    if (!InferenceMode::active())
        for (const auto& in : ins)
            rg = rg || in->requires_grad;
    if (rg) {
        out->requires_grad = true;
        out->inputs = std::move(ins);
        out->backprop = std::move(backprop);
    }
    return Array(std::move(out));
}

NodePtr fresh(std::vector<std::size_t> shape) {
    auto n = std::make_shared<Node>();
    std::size_t p = 1;
    for (std::size_t e : shape) p *= e;
    n->shape = std::move(shape);
    n->value.resize(p);
    return n;
}

void check_same_shape(const Array& a, const Array& b, const char* op) {
    check(a.shape() == b.shape(), std::string(op) + ": shape mismatch " +
                                      shape_str(a.shape()) + " vs " +
                                      shape_str(b.shape()));
}

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

} // namespace

Array matmul(const Array& a, const Array& b) {
    check(a.rank() == 2 && b.rank() == 2, "matmul: both operands must be rank 2");
    check(a.cols() == b.rows(), "matmul: inner extents disagree, " +
                                    shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    auto out = fresh({m, n});
    // out is freshly zeroed, so accumulate and overwrite coincide
    kern::active().matmul_nn(a.value().data(), b.value().data(), out->value.data(),
                             m, k, n, true);
    Node* o = out.get();
    Node* an = a.node().get();
    Node* bn = b.node().get();
    return finish(std::move(out), {a.node(), b.node()}, [o, an, bn, m, k, n] {
        if (an->requires_grad) {
            an->ensure_grad();
            kern::active().matmul_nt(o->grad.data(), bn->value.data(),
                                     an->grad.data(), m, n, k, true);
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            kern::active().matmul_tn(an->value.data(), o->grad.data(),
                                     bn->grad.data(), k, m, n, true);
        }
    });
}

Array matmul_nt(const Array& a, const Array& b) {
    check(a.rank() == 2 && b.rank() == 2, "matmul_nt: both operands must be rank 2");
    check(a.cols() == b.cols(), "matmul_nt: shared extents disagree, " +
                                    shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    auto out = fresh({m, n});
    kern::active().matmul_nt(a.value().data(), b.value().data(), out->value.data(),
                             m, k, n, false);
    Node* o = out.get();
    Node* an = a.node().get();
    Node* bn = b.node().get();
    return finish(std::move(out), {a.node(), b.node()}, [o, an, bn, m, k, n] {
        if (an->requires_grad) {
            an->ensure_grad();
            // dA = dC * B
            kern::active().matmul_nn(o->grad.data(), bn->value.data(),
                                     an->grad.data(), m, n, k, true);
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            // dB = dC^T * A
            kern::active().matmul_tn(o->grad.data(), an->value.data(),
                                     bn->grad.data(), n, m, k, true);
        }
    });
}

Array linear(const Array& x, const Array& w, const Array& b) {
    check(x.rank() == 2 && w.rank() == 2, "linear: x and w must be rank 2");
    check(b.rank() == 1, "linear: bias must be rank 1");
    check(x.cols() == w.rows() && w.cols() == b.shape()[0],
          "linear: extents disagree, x " + shape_str(x.shape()) + ", w " +
              shape_str(w.shape()) + ", b " + shape_str(b.shape()));
    const std::size_t n = x.rows(), din = x.cols(), dout = w.cols();
    auto out = fresh({n, dout});
    kern::active().matmul_nn(x.value().data(), w.value().data(), out->value.data(),
                             n, din, dout, true);
    for (std::size_t i = 0; i < n; ++i)
        kern::active().axpy(1.0, b.value().data(), out->value.data() + i * dout, dout);
    Node* o = out.get();
    Node* xn = x.node().get();
    Node* wn = w.node().get();
    Node* bn = b.node().get();
    return finish(std::move(out), {x.node(), w.node(), b.node()},
                  [o, xn, wn, bn, n, din, dout] {
                      if (xn->requires_grad) {
                          xn->ensure_grad();
                          kern::active().matmul_nt(o->grad.data(), wn->value.data(),
                                                   xn->grad.data(), n, dout, din, true);
                      }
                      if (wn->requires_grad) {
                          wn->ensure_grad();
                          kern::active().matmul_tn(xn->value.data(), o->grad.data(),
                                                   wn->grad.data(), din, n, dout, true);
                      }
                      if (bn->requires_grad) {
                          bn->ensure_grad();
                          for (std::size_t i = 0; i < n; ++i)
                              kern::active().axpy(1.0, o->grad.data() + i * dout,
                                                  bn->grad.data(), dout);
                      }
                  });
}

namespace {

template <typename Fwd, typename Bwd>
Array binary_ew(const Array& a, const Array& b, const char* name, Fwd fwd, Bwd bwd) {
    check_same_shape(a, b, name);
    auto out = fresh(a.shape());
    fwd(a.value().data(), b.value().data(), out->value.data(), a.size());
    Node* o = out.get();
    Node* an = a.node().get();
    Node* bn = b.node().get();
    return finish(std::move(out), {a.node(), b.node()},
                  [o, an, bn, bwd] { bwd(o, an, bn); });
}

} // namespace

Array add(const Array& a, const Array& b) {
    return binary_ew(a, b, "add",
                     [](const double* x, const double* y, double* z, std::size_t n) {
                         kern::active().add(x, y, z, n);
                     },
                     [](Node* o, Node* an, Node* bn) {
                         if (an->requires_grad) {
                             an->ensure_grad();
                             kern::active().axpy(1.0, o->grad.data(), an->grad.data(),
                                                 o->grad.size());
                         }
                         if (bn->requires_grad) {
                             bn->ensure_grad();
                             kern::active().axpy(1.0, o->grad.data(), bn->grad.data(),
                                                 o->grad.size());
                         }
                     });
}

Array sub(const Array& a, const Array& b) {
    return binary_ew(a, b, "sub",
                     [](const double* x, const double* y, double* z, std::size_t n) {
                         kern::active().sub(x, y, z, n);
                     },
                     [](Node* o, Node* an, Node* bn) {
                         if (an->requires_grad) {
                             an->ensure_grad();
                             kern::active().axpy(1.0, o->grad.data(), an->grad.data(),
                                                 o->grad.size());
                         }
                         if (bn->requires_grad) {
                             bn->ensure_grad();
                             kern::active().axpy(-1.0, o->grad.data(), bn->grad.data(),
                                                 o->grad.size());
                         }
                     });
}

Array mul(const Array& a, const Array& b) {
    return binary_ew(a, b, "mul",
                     [](const double* x, const double* y, double* z, std::size_t n) {
                         kern::active().mul(x, y, z, n);
                     },
                     [](Node* o, Node* an, Node* bn) {
                         if (an->requires_grad) {
                             an->ensure_grad();
                             for (std::size_t i = 0; i < o->grad.size(); ++i)
                                 an->grad[i] += o->grad[i] * bn->value[i];
                         }
                         if (bn->requires_grad) {
                             bn->ensure_grad();
                             for (std::size_t i = 0; i < o->grad.size(); ++i)
                                 bn->grad[i] += o->grad[i] * an->value[i];
                         }
                     });
}

Array mul_scalar(const Array& a, double s) {
    auto out = fresh(a.shape());
    kern::active().scale(s, a.value().data(), out->value.data(), a.size());
    Node* o = out.get();
    Node* an = a.node().get();
    return finish(std::move(out), {a.node()}, [o, an, s] {
        if (!an->requires_grad) return;
        an->ensure_grad();
        kern::active().axpy(s, o->grad.data(), an->grad.data(), o->grad.size());
    });
}

Array sigmoid(const Array& x) {
    auto out = fresh(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i)
        out->value[i] = stable_sigmoid(x.value()[i]);
    Node* o = out.get();
    Node* xn = x.node().get();
    return finish(std::move(out), {x.node()}, [o, xn] {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < o->grad.size(); ++i) {
            const double s = o->value[i];
            xn->grad[i] += o->grad[i] * s * (1.0 - s);
        }
    });
}

Array relu(const Array& x) {
    auto out = fresh(x.shape());
    kern::active().relu(x.value().data(), out->value.data(), x.size());
    if (RoutingTrace::active())
        for (std::size_t i = 0; i < x.size(); ++i)
            RoutingTrace::record_u64(x.value()[i] > 0.0 ? 1 : 0);
    Node* o = out.get();
    Node* xn = x.node().get();
    return finish(std::move(out), {x.node()}, [o, xn] {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        kern::active().relu_bwd_acc(xn->value.data(), o->grad.data(),
                                    xn->grad.data(), o->grad.size());
    });
}

Array sum_all(const Array& x) {
    auto out = fresh({1});
    out->value[0] = kern::active().sum(x.value().data(), x.size());
    Node* o = out.get();
    Node* xn = x.node().get();
    return finish(std::move(out), {x.node()}, [o, xn] {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        const double g = o->grad[0];
        for (double& v : xn->grad) v += g;
    });
}

Array reduce(const Array& x, std::size_t axis, Reduce mode) {
    check(axis < x.rank(), "reduce: axis " + std::to_string(axis) +
                               " out of range for shape " + shape_str(x.shape()));
    const auto& shape = x.shape();
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
    const std::size_t extent = shape[axis];
    std::vector<std::size_t> out_shape;
    for (std::size_t i = 0; i < shape.size(); ++i)
        if (i != axis) out_shape.push_back(shape[i]);
    if (out_shape.empty()) out_shape.push_back(1);
    auto out = fresh(out_shape);

    if (mode == Reduce::max) {
        std::vector<std::uint32_t> arg(outer * inner);
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t i = 0; i < inner; ++i) {
                double best = x.value()[(o * extent) * inner + i];
                std::uint32_t bi = 0;
                for (std::size_t e = 1; e < extent; ++e) {
                    const double v = x.value()[(o * extent + e) * inner + i];
                    if (v > best) {
                        best = v;
                        bi = static_cast<std::uint32_t>(e);
                    }
                }
                out->value[o * inner + i] = best;
                arg[o * inner + i] = bi;
            }
        if (RoutingTrace::active())
            RoutingTrace::record(arg.data(), arg.size() * sizeof(arg[0]));
        Node* on = out.get();
        Node* xn = x.node().get();
        return finish(std::move(out), {x.node()},
                      [on, xn, arg = std::move(arg), outer, inner, extent] {
                          if (!xn->requires_grad) return;
                          xn->ensure_grad();
                          for (std::size_t o = 0; o < outer; ++o)
                              for (std::size_t i = 0; i < inner; ++i)
                                  xn->grad[(o * extent + arg[o * inner + i]) * inner + i] +=
                                      on->grad[o * inner + i];
                      });
    }

    // Mean: order-independent accumulation (sorted ascending).
    std::vector<double> slice(extent);
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < inner; ++i) {
            for (std::size_t e = 0; e < extent; ++e)
                slice[e] = x.value()[(o * extent + e) * inner + i];
            std::sort(slice.begin(), slice.end());
            out->value[o * inner + i] =
                kern::active().sum(slice.data(), extent) / static_cast<double>(extent);
        }
    Node* on = out.get();
    Node* xn = x.node().get();
    return finish(std::move(out), {x.node()}, [on, xn, outer, inner, extent] {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        const double inv = 1.0 / static_cast<double>(extent);
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t i = 0; i < inner; ++i) {
                const double g = on->grad[o * inner + i] * inv;
                for (std::size_t e = 0; e < extent; ++e)
                    xn->grad[(o * extent + e) * inner + i] += g;
            }
    });
}

Array concat(const std::vector<Array>& parts, std::size_t axis) {
    check(!parts.empty(), "concat: no parts");
    const auto& s0 = parts[0].shape();
    check(axis < s0.size(), "concat: axis out of range");
    std::size_t total_axis = 0;
    for (const auto& p : parts) {
        check(p.rank() == s0.size(), "concat: rank mismatch");
        for (std::size_t i = 0; i < s0.size(); ++i)
            if (i != axis)
                check(p.shape()[i] == s0[i],
                      "concat: side extent mismatch " + shape_str(p.shape()) +
                          " vs " + shape_str(s0));
        total_axis += p.shape()[axis];
    }
    std::vector<std::size_t> out_shape = s0;
    out_shape[axis] = total_axis;
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s0[i];
    for (std::size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];

    auto out = fresh(out_shape);
    std::size_t col = 0;
    for (const auto& p : parts) {
        const std::size_t e = p.shape()[axis];
        for (std::size_t o = 0; o < outer; ++o)
            std::memcpy(out->value.data() + (o * total_axis + col) * inner,
                        p.value().data() + o * e * inner, e * inner * sizeof(double));
        col += e;
    }

    std::vector<NodePtr> ins;
    ins.reserve(parts.size());
    for (const auto& p : parts) ins.push_back(p.node());
    Node* on = out.get();
    std::vector<Node*> raw;
    raw.reserve(parts.size());
    for (const auto& p : parts) raw.push_back(p.node().get());
    std::vector<std::size_t> extents;
    for (const auto& p : parts) extents.push_back(p.shape()[axis]);
    return finish(std::move(out), std::move(ins),
                  [on, raw = std::move(raw), extents = std::move(extents), outer, inner,
                   total_axis] {
                      std::size_t col = 0;
                      for (std::size_t pi = 0; pi < raw.size(); ++pi) {
                          Node* p = raw[pi];
                          const std::size_t e = extents[pi];
                          if (p->requires_grad) {
                              p->ensure_grad();
                              for (std::size_t o = 0; o < outer; ++o)
                                  kern::active().axpy(
                                      1.0,
                                      on->grad.data() + (o * total_axis + col) * inner,
                                      p->grad.data() + o * e * inner, e * inner);
                          }
                          col += e;
                      }
                  });
}

Array reshape(const Array& x, std::vector<std::size_t> shape) {
    std::size_t p = 1;
    for (std::size_t e : shape) p *= e;
    check(p == x.size(), "reshape: new shape " + shape_str(shape) +
                             " incompatible with " + shape_str(x.shape()));
    auto out = fresh(std::move(shape));
    out->value = x.value();
    Node* on = out.get();
    Node* xn = x.node().get();
    return finish(std::move(out), {x.node()}, [on, xn] {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        kern::active().axpy(1.0, on->grad.data(), xn->grad.data(), on->grad.size());
    });
}

Array slice_cols(const Array& x, std::size_t start, std::size_t width) {
    check(x.rank() == 2, "slice_cols: rank 2 required");
    check(start + width <= x.cols(), "slice_cols: range out of bounds");
    const std::size_t n = x.rows(), c = x.cols();
    auto out = fresh({n, width});
    for (std::size_t i = 0; i < n; ++i)
        std::memcpy(out->value.data() + i * width, x.value().data() + i * c + start,
                    width * sizeof(double));
    Node* on = out.get();
    Node* xn = x.node().get();
    return finish(std::move(out), {x.node()}, [on, xn, start, width, n, c] {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < n; ++i)
            kern::active().axpy(1.0, on->grad.data() + i * width,
                                xn->grad.data() + i * c + start, width);
    });
}

Array gather_rows(const Array& x, std::vector<std::size_t> idx) {
    check(x.rank() == 2, "gather_rows: rank 2 required");
    const std::size_t c = x.cols();
    for (std::size_t r : idx)
        check(r < x.rows(), "gather_rows: row index out of range");
    auto out = fresh({idx.size(), c});
    for (std::size_t i = 0; i < idx.size(); ++i)
        std::memcpy(out->value.data() + i * c, x.value().data() + idx[i] * c,
                    c * sizeof(double));
    Node* on = out.get();
    Node* xn = x.node().get();
    return finish(std::move(out), {x.node()}, [on, xn, idx = std::move(idx), c] {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < idx.size(); ++i)
            kern::active().axpy(1.0, on->grad.data() + i * c,
                                xn->grad.data() + idx[i] * c, c);
    });
}

Array group_max(const Array& x, std::vector<std::size_t> flat_idx,
                std::vector<std::size_t> offsets) {
    check(x.rank() == 2, "group_max: rank 2 required");
    check(offsets.size() >= 2 && offsets.front() == 0 &&
              offsets.back() == flat_idx.size(),
          "group_max: malformed offsets");
    const std::size_t groups = offsets.size() - 1, c = x.cols();
    for (std::size_t r : flat_idx)
        check(r < x.rows(), "group_max: row index out of range");
    auto out = fresh({groups, c});
    const double* xv = x.value().data();
    for (std::size_t g = 0; g < groups; ++g) {
        const std::size_t lo = offsets[g], hi = offsets[g + 1];
        check(hi > lo, "group_max: empty group");
        double* og = out->value.data() + g * c;
        std::memcpy(og, xv + flat_idx[lo] * c, c * sizeof(double));
        for (std::size_t t = lo + 1; t < hi; ++t)
            kern::active().ew_max(og, xv + flat_idx[t] * c, og, c);
    }

    // Gradient and routing need the winning rows; value ties resolve to the
    // smallest row index. Skipped entirely in plain inference.
    const bool need_winners =
        RoutingTrace::active() ||
        (!InferenceMode::active() && x.requires_grad());
    std::vector<std::uint32_t> winner;
    if (need_winners) {
        winner.resize(groups * c);
        for (std::size_t g = 0; g < groups; ++g) {
            const std::size_t lo = offsets[g], hi = offsets[g + 1];
            const double* og = out->value.data() + g * c;
            for (std::size_t j = 0; j < c; ++j) {
                std::size_t best_row = x.rows();
                for (std::size_t t = lo; t < hi; ++t) {
                    const std::size_t r = flat_idx[t];
                    if (xv[r * c + j] == og[j] && r < best_row) best_row = r;
                }
                winner[g * c + j] = static_cast<std::uint32_t>(best_row);
            }
        }
        if (RoutingTrace::active())
            RoutingTrace::record(winner.data(), winner.size() * sizeof(winner[0]));
    }
    Node* on = out.get();
    Node* xn = x.node().get();
    return finish(std::move(out), {x.node()},
                  [on, xn, winner = std::move(winner), groups, c] {
                      if (!xn->requires_grad) return;
                      xn->ensure_grad();
                      for (std::size_t g = 0; g < groups; ++g)
                          for (std::size_t j = 0; j < c; ++j)
                              xn->grad[winner[g * c + j] * c + j] +=
                                  on->grad[g * c + j];
                  });
}

Array max_list(const std::vector<Array>& parts) {
    check(!parts.empty(), "max_list: no parts");
    for (const auto& p : parts) check_same_shape(parts[0], p, "max_list");
    const std::size_t n = parts[0].size();
    auto out = fresh(parts[0].shape());
    out->value = parts[0].value();
    for (std::size_t p = 1; p < parts.size(); ++p)
        kern::active().ew_max(out->value.data(), parts[p].value().data(),
                              out->value.data(), n);
    std::vector<std::uint32_t> winner(n, 0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < parts.size(); ++p)
            if (parts[p].value()[i] == out->value[i]) {
                winner[i] = static_cast<std::uint32_t>(p);
                break;
            }
    if (RoutingTrace::active())
        RoutingTrace::record(winner.data(), winner.size() * sizeof(winner[0]));
    std::vector<NodePtr> ins;
    std::vector<Node*> raw;
    for (const auto& p : parts) {
        ins.push_back(p.node());
        raw.push_back(p.node().get());
    }
    Node* on = out.get();
    return finish(std::move(out), std::move(ins),
                  [on, raw = std::move(raw), winner = std::move(winner)] {
                      for (std::size_t i = 0; i < winner.size(); ++i) {
                          Node* p = raw[winner[i]];
                          if (!p->requires_grad) continue;
                          p->ensure_grad();
                          p->grad[i] += on->grad[i];
                      }
                  });
}

Array row_softmax(const Array& x) {
    check(x.rank() == 2, "row_softmax: rank 2 required");
    const std::size_t n = x.rows(), c = x.cols();
    auto out = fresh({n, c});
    for (std::size_t i = 0; i < n; ++i) {
        const double* xi = x.value().data() + i * c;
        double m = xi[0];
        for (std::size_t j = 1; j < c; ++j) m = std::max(m, xi[j]);
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            const double e = std::exp(xi[j] - m);
            out->value[i * c + j] = e;
            s += e;
        }
        const double inv = 1.0 / s;
        for (std::size_t j = 0; j < c; ++j) out->value[i * c + j] *= inv;
    }
    Node* on = out.get();
    Node* xn = x.node().get();
    return finish(std::move(out), {x.node()}, [on, xn, n, c] {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) {
            const double* s = on->value.data() + i * c;
            const double* g = on->grad.data() + i * c;
            const double gs = kern::active().dot(g, s, c);
            for (std::size_t j = 0; j < c; ++j)
                xn->grad[i * c + j] += s[j] * (g[j] - gs);
        }
    });
}

GateResult threshold_gate(const Array& omega, double beta) {
    check(beta >= 0.0 && beta < 1.0, "threshold_gate: beta must be in [0,1)");
    const std::size_t n = omega.size();
    auto out = fresh(omega.shape());
    std::vector<std::uint8_t> mask(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double s = stable_sigmoid(omega.value()[i]);
        const bool keep = s > beta;  // strict at the boundary
        mask[i] = keep ? 1 : 0;
        out->value[i] = keep ? s : 0.0;
    }
    if (RoutingTrace::active()) RoutingTrace::record(mask.data(), mask.size());
    Node* on = out.get();
    Node* xn = omega.node().get();
    auto mask_copy = mask;
    Array alpha =
        finish(std::move(out), {omega.node()}, [on, xn, mask = std::move(mask_copy)] {
            if (!xn->requires_grad) return;
            xn->ensure_grad();
            for (std::size_t i = 0; i < mask.size(); ++i) {
                if (!mask[i]) continue;  // masked entries pass exactly zero gradient
                const double s = on->value[i];
                xn->grad[i] += on->grad[i] * s * (1.0 - s);
            }
        });
    return {std::move(alpha), std::move(mask)};
}

Array weighted_average_rows(const Array& alpha, const Array& v, double eps) {
    check(eps > 0.0, "weighted_average_rows: eps must be positive");
    check(alpha.rank() == 2 && v.rank() == 2,
          "weighted_average_rows: rank 2 required");
    check(alpha.cols() == v.rows(), "weighted_average_rows: extents disagree, " +
                                        shape_str(alpha.shape()) + " vs " +
                                        shape_str(v.shape()));
    const std::size_t nx = alpha.rows(), ny = alpha.cols(), d = v.cols();
    auto out = fresh({nx, d});
    std::vector<double> denom(nx);
    kern::active().matmul_nn(alpha.value().data(), v.value().data(),
                             out->value.data(), nx, ny, d, true);
    for (std::size_t t = 0; t < nx; ++t) {
        denom[t] = kern::active().sum(alpha.value().data() + t * ny, ny) + eps;
        kern::active().scale(1.0 / denom[t], out->value.data() + t * d,
                             out->value.data() + t * d, d);
    }
    Node* on = out.get();
    Node* an = alpha.node().get();
    Node* vn = v.node().get();
    return finish(std::move(out), {alpha.node(), v.node()},
                  [on, an, vn, denom = std::move(denom), nx, ny, d] {
                      if (an->requires_grad) {
                          an->ensure_grad();
                          // d alpha[t,z] = (dG_t . V_z - dG_t . G_t) / denom_t
                          for (std::size_t t = 0; t < nx; ++t) {
                              const double* gt = on->grad.data() + t * d;
                              const double gg =
                                  kern::active().dot(gt, on->value.data() + t * d, d);
                              const double inv = 1.0 / denom[t];
                              for (std::size_t z = 0; z < ny; ++z) {
                                  const double gv =
                                      kern::active().dot(gt, vn->value.data() + z * d, d);
                                  an->grad[t * ny + z] += (gv - gg) * inv;
                              }
                          }
                      }
                      if (vn->requires_grad) {
                          vn->ensure_grad();
                          // dV[z] += sum_t alpha[t,z]/denom_t * dG_t
                          for (std::size_t t = 0; t < nx; ++t) {
                              const double inv = 1.0 / denom[t];
                              const double* gt = on->grad.data() + t * d;
                              for (std::size_t z = 0; z < ny; ++z) {
                                  const double w = an->value[t * ny + z] * inv;
                                  if (w != 0.0)
                                      kern::active().axpy(w, gt, vn->grad.data() + z * d,
                                                          d);
                              }
                          }
                      }
                  });
}

Array cross_entropy(const Array& logits, const std::vector<int>& labels) {
    check(logits.rank() == 2, "cross_entropy: logits must be rank 2");
    const std::size_t b = logits.rows(), c = logits.cols();
    check(labels.size() == b, "cross_entropy: batch size mismatch");
    for (int y : labels)
        check(y >= 0 && static_cast<std::size_t>(y) < c,
              "cross_entropy: label " + std::to_string(y) + " out of range for " +
                  std::to_string(c) + " classes");
    auto out = fresh({1});
    double total = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        const double* li = logits.value().data() + i * c;
        double m = li[0];
        for (std::size_t j = 1; j < c; ++j) m = std::max(m, li[j]);
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) s += std::exp(li[j] - m);
        total += (m + std::log(s)) - li[labels[i]];
    }
    out->value[0] = total / static_cast<double>(b);
    Node* on = out.get();
    Node* ln = logits.node().get();
    return finish(std::move(out), {logits.node()}, [on, ln, labels, b, c] {
        if (!ln->requires_grad) return;
        ln->ensure_grad();
        const double g = on->grad[0] / static_cast<double>(b);
        for (std::size_t i = 0; i < b; ++i) {
            const double* li = ln->value.data() + i * c;
            double m = li[0];
            for (std::size_t j = 1; j < c; ++j) m = std::max(m, li[j]);
            double s = 0.0;
            for (std::size_t j = 0; j < c; ++j) s += std::exp(li[j] - m);
            const double inv = 1.0 / s;
            for (std::size_t j = 0; j < c; ++j) {
                double p = std::exp(li[j] - m) * inv;
                if (static_cast<std::size_t>(labels[i]) == j) p -= 1.0;
                ln->grad[i * c + j] += g * p;
            }
        }
    });
}

} // namespace latformer::ad
