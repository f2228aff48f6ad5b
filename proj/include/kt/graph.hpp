#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "kt/error.hpp"
#include "kt/tensor.hpp"

namespace kt::num {

enum class Act { Sigmoid, Tanh, Relu, Identity };

inline const char* act_name(Act a) {
    switch (a) {
        case Act::Sigmoid: return "sigmoid";
        case Act::Tanh: return "tanh";
        case Act::Relu: return "relu";
        case Act::Identity: return "identity";
    }
    return "?";
}

inline Act act_from_name(const std::string& s) {
    if (s == "sigmoid") return Act::Sigmoid;
    if (s == "tanh") return Act::Tanh;
    if (s == "relu") return Act::Relu;
    if (s == "identity") return Act::Identity;
    throw config_error("unknown activation '" + s + "'");
}

inline double apply_act(Act a, double x) {
    switch (a) {
        case Act::Sigmoid: return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
        case Act::Tanh: return std::tanh(x);
        case Act::Relu: return x > 0 ? x : 0.0;
        case Act::Identity: return x;
    }
    return x;
}

// Derivative expressed through the activation output y = act(x).
inline double act_grad_from_output(Act a, double y, double x) {
    switch (a) {
        case Act::Sigmoid: return y * (1.0 - y);
        case Act::Tanh: return 1.0 - y * y;
        case Act::Relu: return x > 0 ? 1.0 : 0.0;
        case Act::Identity: return 1.0;
    }
    return 0.0;
}

// A trainable tensor. Lives outside any graph (typically inside a
// ParamStore) so that many sampled sub-models can share it; graphs bind to
// it via Graph::param() and backward() accumulates into `grad`.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;

    Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {
        grad = Tensor::zeros(value.shape);
    }
    void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

// Reverse-mode tape. Nodes are appended in evaluation order, which is a
// topological order by construction, so backward() is one reverse sweep
// visiting each node exactly once. A graph is confined to one worker; the
// parameter store owns cross-model synchronization.
class Graph {
public:
    struct Ref {
        std::uint32_t id = 0;
    };

    Graph() { nodes_.reserve(256); }

    const Tensor& value(Ref r) const { return nodes_[r.id].value; }
    const Tensor& grad(Ref r) const { return nodes_[r.id].grad; }
    std::size_t node_count() const { return nodes_.size(); }

    Ref constant(Tensor v) { return push(std::move(v), {}, nullptr); }

    Ref param(Parameter& p) {
        Ref r = push(p.value, {}, nullptr);
        nodes_[r.id].bound = &p;
        bound_.push_back(r.id);
        return r;
    }

    // x·W for x:[n] W:[n,m] -> [m], or A:[r,n] B:[n,m] -> [r,m].
    Ref matmul(Ref xr, Ref wr) {
        const Tensor& x = value(xr);
        const Tensor& w = value(wr);
        if (w.rank() != 2 || (x.rank() == 1 ? x.shape[0] : x.cols()) != w.rows())
            throw shape_error("matmul: shapes " + shape_str(x.shape) + " and " +
                              shape_str(w.shape) + " do not chain");
        const std::size_t r = x.rank() == 1 ? 1 : x.rows();
        const std::size_t n = w.rows(), m = w.cols();
        Tensor out = x.rank() == 1 ? Tensor::zeros({m}) : Tensor::zeros({r, m});
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t k = 0; k < n; ++k) {
                const double xv = x.data[i * n + k];
                if (xv == 0.0) continue;
                const double* wrow = &w.data[k * m];
                double* orow = &out.data[i * m];
                for (std::size_t j = 0; j < m; ++j) orow[j] += xv * wrow[j];
            }
        return push(std::move(out), {xr, wr}, [r, n, m](Graph& g, const Node& nd) {
            const Tensor& go = nd.grad;
            const Tensor& x = g.nodes_[nd.in[0].id].value;
            const Tensor& w = g.nodes_[nd.in[1].id].value;
            Tensor& gx = g.nodes_[nd.in[0].id].grad;
            Tensor& gw = g.nodes_[nd.in[1].id].grad;
            // dX += dOut · Wᵀ ; dW += Xᵀ · dOut
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < m; ++j) {
                    const double gv = go.data[i * m + j];
                    if (gv == 0.0) continue;
                    for (std::size_t k = 0; k < n; ++k) {
                        gx.data[i * n + k] += gv * w.data[k * m + j];
                        gw.data[k * m + j] += x.data[i * n + k] * gv;
                    }
                }
        });
    }

    Ref add(Ref a, Ref b) {
        require_same_shape(value(a), value(b), "add");
        Tensor out = value(a);
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += value(b).data[i];
        return push(std::move(out), {a, b}, [](Graph& g, const Node& nd) {
            accum(g.nodes_[nd.in[0].id].grad, nd.grad, 1.0);
            accum(g.nodes_[nd.in[1].id].grad, nd.grad, 1.0);
        });
    }

    Ref sub(Ref a, Ref b) {
        require_same_shape(value(a), value(b), "sub");
        Tensor out = value(a);
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= value(b).data[i];
        return push(std::move(out), {a, b}, [](Graph& g, const Node& nd) {
            accum(g.nodes_[nd.in[0].id].grad, nd.grad, 1.0);
            accum(g.nodes_[nd.in[1].id].grad, nd.grad, -1.0);
        });
    }

    // Elementwise (Hadamard) product.
    Ref mul(Ref a, Ref b) {
        require_same_shape(value(a), value(b), "mul");
        Tensor out = value(a);
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= value(b).data[i];
        return push(std::move(out), {a, b}, [](Graph& g, const Node& nd) {
            const Tensor& av = g.nodes_[nd.in[0].id].value;
            const Tensor& bv = g.nodes_[nd.in[1].id].value;
            Tensor& ga = g.nodes_[nd.in[0].id].grad;
            Tensor& gb = g.nodes_[nd.in[1].id].grad;
            for (std::size_t i = 0; i < nd.grad.size(); ++i) {
                ga.data[i] += nd.grad.data[i] * bv.data[i];
                gb.data[i] += nd.grad.data[i] * av.data[i];
            }
        });
    }

    Ref scale(Ref a, double c) {
        Tensor out = value(a);
        for (auto& v : out.data) v *= c;
        return push(std::move(out), {a}, [c](Graph& g, const Node& nd) {
            accum(g.nodes_[nd.in[0].id].grad, nd.grad, c);
        });
    }

    // 1 - a, elementwise; the skip-gate complement in the cell equations.
    Ref one_minus(Ref a) {
        Tensor out = value(a);
        for (auto& v : out.data) v = 1.0 - v;
        return push(std::move(out), {a}, [](Graph& g, const Node& nd) {
            accum(g.nodes_[nd.in[0].id].grad, nd.grad, -1.0);
        });
    }

    Ref activate(Act act, Ref a) {
        const Tensor& x = value(a);
        Tensor out = x;
        for (auto& v : out.data) v = apply_act(act, v);
        return push(std::move(out), {a}, [act](Graph& g, const Node& nd) {
            const Tensor& x = g.nodes_[nd.in[0].id].value;
            Tensor& gx = g.nodes_[nd.in[0].id].grad;
            for (std::size_t i = 0; i < nd.grad.size(); ++i)
                gx.data[i] += nd.grad.data[i] * act_grad_from_output(act, nd.value.data[i], x.data[i]);
        });
    }

    Ref concat(Ref a, Ref b) {
        const Tensor& av = value(a);
        const Tensor& bv = value(b);
        if (av.rank() != 1 || bv.rank() != 1)
            throw shape_error("concat: expected vectors, got " + shape_str(av.shape) + " and " +
                              shape_str(bv.shape));
        Tensor out = Tensor::zeros({av.size() + bv.size()});
        std::copy(av.data.begin(), av.data.end(), out.data.begin());
        std::copy(bv.data.begin(), bv.data.end(), out.data.begin() + static_cast<long>(av.size()));
        const std::size_t na = av.size();
        return push(std::move(out), {a, b}, [na](Graph& g, const Node& nd) {
            Tensor& ga = g.nodes_[nd.in[0].id].grad;
            Tensor& gb = g.nodes_[nd.in[1].id].grad;
            for (std::size_t i = 0; i < na; ++i) ga.data[i] += nd.grad.data[i];
            for (std::size_t i = na; i < nd.grad.size(); ++i) gb.data[i - na] += nd.grad.data[i];
        });
    }

    // Contiguous vector slice [lo, lo+len).
    Ref slice(Ref a, std::size_t lo, std::size_t len) {
        const Tensor& av = value(a);
        if (av.rank() != 1 || lo + len > av.size())
            throw shape_error("slice: range [" + std::to_string(lo) + "," + std::to_string(lo + len) +
                              ") out of " + shape_str(av.shape));
        Tensor out = Tensor::zeros({len});
        std::copy(av.data.begin() + static_cast<long>(lo), av.data.begin() + static_cast<long>(lo + len),
                  out.data.begin());
        return push(std::move(out), {a}, [lo, len](Graph& g, const Node& nd) {
            Tensor& ga = g.nodes_[nd.in[0].id].grad;
            for (std::size_t i = 0; i < len; ++i) ga.data[lo + i] += nd.grad.data[i];
        });
    }

    Ref pick(Ref a, std::size_t i) { return slice(a, i, 1); }

    // Row i of a matrix, as a vector (embedding lookup).
    Ref row(Ref a, std::size_t i) {
        const Tensor& av = value(a);
        if (av.rank() != 2 || i >= av.rows())
            throw shape_error("row: index " + std::to_string(i) + " out of " + shape_str(av.shape));
        const std::size_t c = av.cols();
        Tensor out = Tensor::zeros({c});
        std::copy(av.data.begin() + static_cast<long>(i * c),
                  av.data.begin() + static_cast<long>((i + 1) * c), out.data.begin());
        return push(std::move(out), {a}, [i, c](Graph& g, const Node& nd) {
            Tensor& ga = g.nodes_[nd.in[0].id].grad;
            for (std::size_t j = 0; j < c; ++j) ga.data[i * c + j] += nd.grad.data[j];
        });
    }

    Ref softmax(Ref a) {
        const Tensor& x = value(a);
        if (x.rank() != 1) throw shape_error("softmax: expected vector, got " + shape_str(x.shape));
        Tensor out = x;
        const double mx = *std::max_element(out.data.begin(), out.data.end());
        double z = 0.0;
        for (auto& v : out.data) {
            v = std::exp(v - mx);
            z += v;
        }
        for (auto& v : out.data) v /= z;
        return push(std::move(out), {a}, [](Graph& g, const Node& nd) {
            Tensor& gx = g.nodes_[nd.in[0].id].grad;
            const Tensor& s = nd.value;
            double dot = 0.0;
            for (std::size_t i = 0; i < s.size(); ++i) dot += nd.grad.data[i] * s.data[i];
            for (std::size_t i = 0; i < s.size(); ++i)
                gx.data[i] += s.data[i] * (nd.grad.data[i] - dot);
        });
    }

    // Outer product u ⊗ v -> [|u|, |v|].
    Ref outer(Ref u, Ref v) {
        const Tensor& uv = value(u);
        const Tensor& vv = value(v);
        if (uv.rank() != 1 || vv.rank() != 1)
            throw shape_error("outer: expected vectors, got " + shape_str(uv.shape) + " and " +
                              shape_str(vv.shape));
        const std::size_t n = uv.size(), m = vv.size();
        Tensor out = Tensor::zeros({n, m});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) out.data[i * m + j] = uv.data[i] * vv.data[j];
        return push(std::move(out), {u, v}, [n, m](Graph& g, const Node& nd) {
            const Tensor& uv = g.nodes_[nd.in[0].id].value;
            const Tensor& vv = g.nodes_[nd.in[1].id].value;
            Tensor& gu = g.nodes_[nd.in[0].id].grad;
            Tensor& gv = g.nodes_[nd.in[1].id].grad;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < m; ++j) {
                    gu.data[i] += nd.grad.data[i * m + j] * vv.data[j];
                    gv.data[j] += nd.grad.data[i * m + j] * uv.data[i];
                }
        });
    }

    // Mean of same-shaped tensors; leaf averaging in the cell output.
    Ref mean_of(const std::vector<Ref>& xs) {
        if (xs.empty()) throw state_error("mean_of: empty node list");
        Tensor out = value(xs[0]);
        for (std::size_t k = 1; k < xs.size(); ++k) {
            require_same_shape(out, value(xs[k]), "mean_of");
            for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += value(xs[k]).data[i];
        }
        const double inv = 1.0 / static_cast<double>(xs.size());
        for (auto& v : out.data) v *= inv;
        Node nd;
        nd.value = std::move(out);
        nd.in = xs;
        nd.back = [inv](Graph& g, const Node& n) {
            for (const Ref r : n.in) accum(g.nodes_[r.id].grad, n.grad, inv);
        };
        nodes_.push_back(std::move(nd));
        return Ref{static_cast<std::uint32_t>(nodes_.size() - 1)};
    }

    Ref sum(Ref a) {
        double s = 0.0;
        for (double v : value(a).data) s += v;
        return push(Tensor::scalar(s), {a}, [](Graph& g, const Node& nd) {
            Tensor& ga = g.nodes_[nd.in[0].id].grad;
            for (auto& v : ga.data) v += nd.grad.data[0];
        });
    }

    Ref mean(Ref a) { return scale(sum(a), 1.0 / static_cast<double>(value(a).size())); }

    // Binary cross-entropy of a scalar probability node against label y.
    // The plain variant; callers that keep logits should prefer
    // bce_with_logits, which is stable under saturation.
    Ref bce(Ref p, double y) {
        const Tensor& pv = value(p);
        if (pv.size() != 1) throw shape_error("bce: expected scalar, got " + shape_str(pv.shape));
        const double eps = 1e-12;
        const double pc = std::min(1.0 - eps, std::max(eps, pv.data[0]));
        const double loss = -(y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc));
        return push(Tensor::scalar(loss), {p}, [y, pc](Graph& g, const Node& nd) {
            g.nodes_[nd.in[0].id].grad.data[0] += nd.grad.data[0] * (pc - y) / (pc * (1.0 - pc));
        });
    }

    // Fused sigmoid + cross-entropy on a scalar logit: max(z,0) - z*y +
    // log1p(exp(-|z|)); gradient is sigmoid(z) - y.
    Ref bce_with_logits(Ref z, double y) {
        const Tensor& zv = value(z);
        if (zv.size() != 1)
            throw shape_error("bce_with_logits: expected scalar, got " + shape_str(zv.shape));
        const double zz = zv.data[0];
        const double loss = std::max(zz, 0.0) - zz * y + std::log1p(std::exp(-std::fabs(zz)));
        return push(Tensor::scalar(loss), {z}, [y](Graph& g, const Node& nd) {
            const double zz = g.nodes_[nd.in[0].id].value.data[0];
            g.nodes_[nd.in[0].id].grad.data[0] += nd.grad.data[0] * (apply_act(Act::Sigmoid, zz) - y);
        });
    }

    // Reverse sweep from a scalar loss. Fills node grads and accumulates
    // into every bound Parameter's grad. One shot per graph.
    void backward(Ref loss) {
        if (backward_done_) throw state_error("backward: already run on this graph; build a new one");
        if (value(loss).size() != 1)
            throw state_error("backward: loss must be scalar, got " + shape_str(value(loss).shape));
        backward_done_ = true;
        for (auto& nd : nodes_) nd.grad = Tensor::zeros(nd.value.shape);
        nodes_[loss.id].grad.data[0] = 1.0;
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            const Node& nd = nodes_[i];
            if (nd.back) nd.back(*this, nd);
        }
        for (std::uint32_t id : bound_) {
            Parameter& p = *nodes_[id].bound;
            const Tensor& g = nodes_[id].grad;
            for (std::size_t i = 0; i < g.size(); ++i) p.grad.data[i] += g.data[i];
        }
    }

    bool backward_done() const { return backward_done_; }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::vector<Ref> in;
        std::function<void(Graph&, const Node&)> back;
        Parameter* bound = nullptr;
    };

    static void accum(Tensor& dst, const Tensor& src, double c) {
        for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += c * src.data[i];
    }

    Ref push(Tensor v, std::initializer_list<Ref> in,
             std::function<void(Graph&, const Node&)> back) {
        Node nd;
        nd.value = std::move(v);
        nd.in.assign(in);
        nd.back = std::move(back);
        nodes_.push_back(std::move(nd));
        return Ref{static_cast<std::uint32_t>(nodes_.size() - 1)};
    }

    std::vector<Node> nodes_;
    std::vector<std::uint32_t> bound_;
    bool backward_done_ = false;
};

using Ref = Graph::Ref;

// x·W + b (b optional). The workhorse of every layer here.
inline Ref affine(Graph& g, Ref x, Ref w, Ref b) { return g.add(g.matmul(x, w), b); }
inline Ref affine(Graph& g, Ref x, Ref w) { return g.matmul(x, w); }

} // namespace kt::num
