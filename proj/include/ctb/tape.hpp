#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "ctb/sparse.hpp"
#include "ctb/tensor.hpp"

namespace ctb::ad {

using NodeId = std::size_t;

enum class Op {
    leaf,
    add,
    sub,
    scale,            // constant * tensor
    scalar_mul,       // scalar node * tensor node
    mul,              // elementwise
    matvec,           // sparse matrix (optionally transposed) times flattened input
    correlate1d,      // fixed kernel along the last axis of a 2-D tensor
    conv2d,           // multi-channel 2-D valid/same correlation with kernel + bias nodes
    grad2d,           // forward differences [H,W] -> [2,H,W], replicate boundary
    smoothed_tv,      // sum_p sqrt(|grad u|_p^2 + eps^2), scalar
    smoothed_tv_grad, // gradient field of smoothed_tv, [H,W] -> [H,W]
    sq_l2,
    l2,
    sum,
    mean_pool,        // [C,H,W] -> [C]
    relu,
    sigmoid,
    bce_logit,        // binary cross-entropy of sigmoid(z) against a fixed label
    crop,             // [H,W] -> [side,side] sub-array
};

namespace detail {

inline void forward_diff(const Tensor& u, Tensor& gx, Tensor& gy) {
    const std::size_t h = u.shape[0], w = u.shape[1];
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
            gx.at(i, j) = (j + 1 < w) ? u.at(i, j + 1) - u.at(i, j) : 0.0;
            gy.at(i, j) = (i + 1 < h) ? u.at(i + 1, j) - u.at(i, j) : 0.0;
        }
}

// acc += D^T (qx, qy), the adjoint of forward_diff
inline void forward_diff_adjoint(const Tensor& qx, const Tensor& qy, Tensor& acc) {
    const std::size_t h = acc.shape[0], w = acc.shape[1];
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
            if (j + 1 < w) {
                acc.at(i, j) -= qx.at(i, j);
                acc.at(i, j + 1) += qx.at(i, j);
            }
            if (i + 1 < h) {
                acc.at(i, j) -= qy.at(i, j);
                acc.at(i + 1, j) += qy.at(i, j);
            }
        }
}

inline double smoothed_tv_value(const Tensor& u, double eps) {
    const std::size_t h = u.shape[0], w = u.shape[1];
    double s = 0.0;
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
            double gx = (j + 1 < w) ? u.at(i, j + 1) - u.at(i, j) : 0.0;
            double gy = (i + 1 < h) ? u.at(i + 1, j) - u.at(i, j) : 0.0;
            s += std::sqrt(gx * gx + gy * gy + eps * eps);
        }
    return s;
}

// grad of smoothed TV: D^T psi(D u) with psi(g) = g / sqrt(|g|^2 + eps^2)
inline Tensor smoothed_tv_gradient(const Tensor& u, double eps) {
    const std::size_t h = u.shape[0], w = u.shape[1];
    Tensor gx = Tensor::zeros({h, w}), gy = Tensor::zeros({h, w});
    forward_diff(u, gx, gy);
    Tensor px = Tensor::zeros({h, w}), py = Tensor::zeros({h, w});
    for (std::size_t i = 0; i < h * w; ++i) {
        double n = std::sqrt(gx.data[i] * gx.data[i] + gy.data[i] * gy.data[i] + eps * eps);
        px.data[i] = gx.data[i] / n;
        py.data[i] = gy.data[i] / n;
    }
    Tensor out = Tensor::zeros({h, w});
    forward_diff_adjoint(px, py, out);
    return out;
}

// Multi-channel 2-D cross-correlation; x [Cin,H,W], k [Cout,Cin,kh,kw],
// optional bias [Cout], zero padding `pad` on all sides.
inline Tensor conv2d_value(const Tensor& x, const Tensor& k, const Tensor* bias,
                           std::size_t pad) {
    const std::size_t cin = x.shape[0], h = x.shape[1], w = x.shape[2];
    const std::size_t cout = k.shape[0], kh = k.shape[2], kw = k.shape[3];
    const std::size_t oh = h + 2 * pad - kh + 1, ow = w + 2 * pad - kw + 1;
    Tensor out = Tensor::zeros({cout, oh, ow});
    for (std::size_t o = 0; o < cout; ++o)
        for (std::size_t i = 0; i < oh; ++i)
            for (std::size_t j = 0; j < ow; ++j) {
                double acc = bias ? bias->data[o] : 0.0;
                for (std::size_t c = 0; c < cin; ++c)
                    for (std::size_t p = 0; p < kh; ++p) {
                        std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(i + p) -
                                            static_cast<std::ptrdiff_t>(pad);
                        if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(h)) continue;
                        for (std::size_t q = 0; q < kw; ++q) {
                            std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(j + q) -
                                                static_cast<std::ptrdiff_t>(pad);
                            if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(w)) continue;
                            acc += k.data[((o * cin + c) * kh + p) * kw + q] *
                                   x.at(c, static_cast<std::size_t>(ii),
                                        static_cast<std::size_t>(jj));
                        }
                    }
                out.at(o, i, j) = acc;
            }
    return out;
}

inline Tensor correlate1d_rows(const Tensor& x, const Tensor& kernel, std::size_t center) {
    const std::size_t rows = x.shape[0], n = x.shape[1], klen = kernel.numel();
    Tensor out = Tensor::zeros({rows, n});
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t t = 0; t < klen; ++t) {
                std::ptrdiff_t j = static_cast<std::ptrdiff_t>(i + t) -
                                   static_cast<std::ptrdiff_t>(center);
                if (j >= 0 && j < static_cast<std::ptrdiff_t>(n))
                    acc += kernel.data[t] * x.at(r, static_cast<std::size_t>(j));
            }
            out.at(r, i) = acc;
        }
    return out;
}

}  // namespace detail

struct Node {
    Op op = Op::leaf;
    std::vector<NodeId> inputs;
    Tensor value;

    // payloads (op-dependent)
    double scalar = 0.0;              // scale factor / tv epsilon / bce label
    const CsrMatrix* matrix = nullptr;
    bool transpose = false;
    Tensor kernel;                    // correlate1d kernel
    std::size_t center = 0;           // correlate1d center tap
    std::size_t pad = 0;              // conv2d zero padding
    std::size_t i0 = 0, j0 = 0, side = 0;  // crop rectangle
};

/// Reverse-mode tape over a fixed op vocabulary. Nodes reference strictly
/// earlier nodes; backward() does a single reverse sweep in node order, so
/// repeated sweeps over the same tape are bitwise identical.
class Tape {
  public:
    NodeId leaf(Tensor value) {
        if (!value.all_finite())
            throw std::invalid_argument("Tape::leaf: non-finite value");
        Node n;
        n.op = Op::leaf;
        n.value = std::move(value);
        nodes_.push_back(std::move(n));
        return nodes_.size() - 1;
    }

    const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
    std::size_t size() const { return nodes_.size(); }

    NodeId add(NodeId a, NodeId b) {
        check(a); check(b);
        require(nodes_[a].value.same_shape(nodes_[b].value), "add: shape mismatch");
        return push(Op::add, {a, b}, nodes_[a].value + nodes_[b].value);
    }

    NodeId sub(NodeId a, NodeId b) {
        check(a); check(b);
        require(nodes_[a].value.same_shape(nodes_[b].value), "sub: shape mismatch");
        return push(Op::sub, {a, b}, nodes_[a].value - nodes_[b].value);
    }

    NodeId scale(double c, NodeId a) {
        check(a);
        Node n = make(Op::scale, {a}, c * nodes_[a].value);
        n.scalar = c;
        return emplace(std::move(n));
    }

    NodeId scalar_mul(NodeId s, NodeId a) {
        check(s); check(a);
        require(nodes_[s].value.numel() == 1, "scalar_mul: scalar operand must have one element");
        return push(Op::scalar_mul, {s, a}, nodes_[s].value.data[0] * nodes_[a].value);
    }

    NodeId mul(NodeId a, NodeId b) {
        check(a); check(b);
        require(nodes_[a].value.same_shape(nodes_[b].value), "mul: shape mismatch");
        Tensor v = nodes_[a].value;
        for (std::size_t i = 0; i < v.numel(); ++i) v.data[i] *= nodes_[b].value.data[i];
        return push(Op::mul, {a, b}, std::move(v));
    }

    /// y = M x (or M^T x). The matrix must outlive the tape.
    NodeId matvec(const CsrMatrix& m, NodeId x, std::vector<std::size_t> out_shape,
                  bool transpose_matrix = false) {
        check(x);
        const Tensor& xv = nodes_[x].value;
        Tensor y = transpose_matrix ? m.apply_transpose(xv, std::move(out_shape))
                                    : m.apply(xv, std::move(out_shape));
        Node n = make(Op::matvec, {x}, std::move(y));
        n.matrix = &m;
        n.transpose = transpose_matrix;
        return emplace(std::move(n));
    }

    /// Correlation with a fixed kernel along the detector (last) axis of a
    /// [rows, n] tensor; `center` is the kernel tap aligned with the output
    /// sample. Zero boundary.
    NodeId correlate1d(NodeId x, Tensor kernel, std::size_t center) {
        check(x);
        require(nodes_[x].value.rank() == 2, "correlate1d: input must be 2-D");
        require(center < kernel.numel(), "correlate1d: center out of kernel range");
        Tensor y = detail::correlate1d_rows(nodes_[x].value, kernel, center);
        Node n = make(Op::correlate1d, {x}, std::move(y));
        n.kernel = std::move(kernel);
        n.center = center;
        return emplace(std::move(n));
    }

    /// Multi-channel 2-D cross-correlation; x [Cin,H,W], k [Cout,Cin,kh,kw],
    /// bias [Cout]. pad zero-pads the input ("same" for 3x3 kernels at pad=1).
    NodeId conv2d(NodeId x, NodeId k, NodeId bias, std::size_t pad = 0) {
        check(x); check(k); check(bias);
        const Tensor& xv = nodes_[x].value;
        const Tensor& kv = nodes_[k].value;
        require(xv.rank() == 3 && kv.rank() == 4, "conv2d: rank mismatch");
        require(kv.shape[1] == xv.shape[0], "conv2d: channel mismatch");
        require(nodes_[bias].value.numel() == kv.shape[0], "conv2d: bias size mismatch");
        require(xv.shape[1] + 2 * pad >= kv.shape[2] && xv.shape[2] + 2 * pad >= kv.shape[3],
                "conv2d: kernel larger than padded input");
        Tensor y = detail::conv2d_value(xv, kv, &nodes_[bias].value, pad);
        Node n = make(Op::conv2d, {x, k, bias}, std::move(y));
        n.pad = pad;
        return emplace(std::move(n));
    }

    NodeId grad2d(NodeId x) {
        check(x);
        require(nodes_[x].value.rank() == 2, "grad2d: input must be 2-D");
        const std::size_t h = nodes_[x].value.shape[0], w = nodes_[x].value.shape[1];
        Tensor gx = Tensor::zeros({h, w}), gy = Tensor::zeros({h, w});
        detail::forward_diff(nodes_[x].value, gx, gy);
        Tensor out = Tensor::zeros({2, h, w});
        for (std::size_t i = 0; i < h * w; ++i) {
            out.data[i] = gx.data[i];
            out.data[h * w + i] = gy.data[i];
        }
        return push(Op::grad2d, {x}, std::move(out));
    }

    NodeId smoothed_tv(NodeId x, double eps) {
        check(x);
        require(nodes_[x].value.rank() == 2, "smoothed_tv: input must be 2-D");
        Node n = make(Op::smoothed_tv, {x},
                      Tensor::scalar(detail::smoothed_tv_value(nodes_[x].value, eps)));
        n.scalar = eps;
        return emplace(std::move(n));
    }

    NodeId smoothed_tv_grad(NodeId x, double eps) {
        check(x);
        require(nodes_[x].value.rank() == 2, "smoothed_tv_grad: input must be 2-D");
        Node n = make(Op::smoothed_tv_grad, {x},
                      detail::smoothed_tv_gradient(nodes_[x].value, eps));
        n.scalar = eps;
        return emplace(std::move(n));
    }

    NodeId sq_l2(NodeId x) {
        check(x);
        return push(Op::sq_l2, {x}, Tensor::scalar(sq_norm(nodes_[x].value)));
    }

    NodeId l2(NodeId x) {
        check(x);
        return push(Op::l2, {x}, Tensor::scalar(norm2(nodes_[x].value)));
    }

    NodeId sum(NodeId x) {
        check(x);
        double s = 0.0;
        for (double v : nodes_[x].value.data) s += v;
        return push(Op::sum, {x}, Tensor::scalar(s));
    }

    NodeId mean_pool(NodeId x) {
        check(x);
        require(nodes_[x].value.rank() == 3, "mean_pool: input must be [C,H,W]");
        const Tensor& v = nodes_[x].value;
        const std::size_t c = v.shape[0], hw = v.shape[1] * v.shape[2];
        Tensor out = Tensor::zeros({c});
        for (std::size_t ch = 0; ch < c; ++ch) {
            double s = 0.0;
            for (std::size_t i = 0; i < hw; ++i) s += v.data[ch * hw + i];
            out.data[ch] = s / static_cast<double>(hw);
        }
        return push(Op::mean_pool, {x}, std::move(out));
    }

    NodeId relu(NodeId x) {
        check(x);
        Tensor v = nodes_[x].value;
        for (double& t : v.data) t = t > 0.0 ? t : 0.0;
        return push(Op::relu, {x}, std::move(v));
    }

    NodeId sigmoid(NodeId x) {
        check(x);
        Tensor v = nodes_[x].value;
        for (double& t : v.data) t = sigmoid_value(t);
        return push(Op::sigmoid, {x}, std::move(v));
    }

    /// Binary cross-entropy of sigmoid(z) against label y, fused with the
    /// sigmoid for numerical stability: softplus(z) - y*z.
    NodeId bce_logit(NodeId z, double label) {
        check(z);
        require(nodes_[z].value.numel() == 1, "bce_logit: logit must be scalar");
        double zv = nodes_[z].value.data[0];
        double softplus = std::max(zv, 0.0) + std::log1p(std::exp(-std::fabs(zv)));
        Node n = make(Op::bce_logit, {z}, Tensor::scalar(softplus - label * zv));
        n.scalar = label;
        return emplace(std::move(n));
    }

    NodeId crop(NodeId x, std::size_t i0, std::size_t j0, std::size_t side) {
        check(x);
        const Tensor& v = nodes_[x].value;
        require(v.rank() == 2, "crop: input must be 2-D");
        require(i0 + side <= v.shape[0] && j0 + side <= v.shape[1], "crop: out of bounds");
        Tensor out = Tensor::zeros({side, side});
        for (std::size_t i = 0; i < side; ++i)
            for (std::size_t j = 0; j < side; ++j)
                out.at(i, j) = v.at(i0 + i, j0 + j);
        Node n = make(Op::crop, {x}, std::move(out));
        n.i0 = i0; n.j0 = j0; n.side = side;
        return emplace(std::move(n));
    }

    /// Gradients of a scalar output with respect to every leaf.
    std::unordered_map<NodeId, Tensor> backward(NodeId output) const {
        check(output);
        if (nodes_[output].value.numel() != 1)
            throw std::invalid_argument("backward: output node must be scalar");
        std::vector<Tensor> grads(nodes_.size());
        std::vector<bool> active(nodes_.size(), false);
        grads[output] = Tensor::scalar(1.0);
        active[output] = true;

        for (std::size_t idx = output + 1; idx-- > 0;) {
            if (!active[idx]) continue;
            propagate(idx, grads, active);
        }

        std::unordered_map<NodeId, Tensor> leaf_grads;
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            if (nodes_[i].op != Op::leaf) continue;
            leaf_grads.emplace(i, active[i] ? std::move(grads[i])
                                            : Tensor::zeros(nodes_[i].value.shape));
        }
        return leaf_grads;
    }

  private:
    std::vector<Node> nodes_;

    void check(NodeId id) const {
        if (id >= nodes_.size()) throw std::invalid_argument("Tape: unknown node id");
    }
    static void require(bool cond, const char* msg) {
        if (!cond) throw std::invalid_argument(std::string("Tape: ") + msg);
    }

    Node make(Op op, std::vector<NodeId> inputs, Tensor value) {
        Node n;
        n.op = op;
        n.inputs = std::move(inputs);
        n.value = std::move(value);
        return n;
    }

    NodeId push(Op op, std::vector<NodeId> inputs, Tensor value) {
        return emplace(make(op, std::move(inputs), std::move(value)));
    }

    NodeId emplace(Node n) {
        nodes_.push_back(std::move(n));
        return nodes_.size() - 1;
    }

    static double sigmoid_value(double t) {
        return t >= 0.0 ? 1.0 / (1.0 + std::exp(-t))
                        : std::exp(t) / (1.0 + std::exp(t));
    }

    void accumulate(std::vector<Tensor>& grads, std::vector<bool>& active, NodeId id,
                    const Tensor& g) const {
        if (!active[id]) {
            grads[id] = g;
            active[id] = true;
        } else {
            for (std::size_t i = 0; i < g.numel(); ++i) grads[id].data[i] += g.data[i];
        }
    }

    void propagate(NodeId idx, std::vector<Tensor>& grads, std::vector<bool>& active) const {
        const Node& n = nodes_[idx];
        const Tensor& g = grads[idx];
        switch (n.op) {
            case Op::leaf:
                break;
            case Op::add:
                accumulate(grads, active, n.inputs[0], g);
                accumulate(grads, active, n.inputs[1], g);
                break;
            case Op::sub: {
                accumulate(grads, active, n.inputs[0], g);
                accumulate(grads, active, n.inputs[1], -1.0 * g);
                break;
            }
            case Op::scale:
                accumulate(grads, active, n.inputs[0], n.scalar * g);
                break;
            case Op::scalar_mul: {
                const Tensor& s = nodes_[n.inputs[0]].value;
                const Tensor& x = nodes_[n.inputs[1]].value;
                accumulate(grads, active, n.inputs[0], Tensor::scalar(dot(x, g)));
                accumulate(grads, active, n.inputs[1], s.data[0] * g);
                break;
            }
            case Op::mul: {
                const Tensor& a = nodes_[n.inputs[0]].value;
                const Tensor& b = nodes_[n.inputs[1]].value;
                Tensor ga = g, gb = g;
                for (std::size_t i = 0; i < g.numel(); ++i) {
                    ga.data[i] *= b.data[i];
                    gb.data[i] *= a.data[i];
                }
                accumulate(grads, active, n.inputs[0], ga);
                accumulate(grads, active, n.inputs[1], gb);
                break;
            }
            case Op::matvec: {
                const Tensor& x = nodes_[n.inputs[0]].value;
                Tensor gx = n.transpose ? n.matrix->apply(g, x.shape)
                                        : n.matrix->apply_transpose(g, x.shape);
                accumulate(grads, active, n.inputs[0], gx);
                break;
            }
            case Op::correlate1d: {
                // transpose of correlation = correlation with reversed kernel
                Tensor rk = n.kernel;
                std::reverse(rk.data.begin(), rk.data.end());
                std::size_t rc = rk.numel() - 1 - n.center;
                accumulate(grads, active, n.inputs[0],
                           detail::correlate1d_rows(g, rk, rc));
                break;
            }
            case Op::conv2d:
                conv2d_backward(n, g, grads, active);
                break;
            case Op::grad2d: {
                const Tensor& x = nodes_[n.inputs[0]].value;
                const std::size_t h = x.shape[0], w = x.shape[1];
                Tensor qx = Tensor::zeros({h, w}), qy = Tensor::zeros({h, w});
                for (std::size_t i = 0; i < h * w; ++i) {
                    qx.data[i] = g.data[i];
                    qy.data[i] = g.data[h * w + i];
                }
                Tensor gx = Tensor::zeros({h, w});
                detail::forward_diff_adjoint(qx, qy, gx);
                accumulate(grads, active, n.inputs[0], gx);
                break;
            }
            case Op::smoothed_tv: {
                Tensor gx = detail::smoothed_tv_gradient(nodes_[n.inputs[0]].value, n.scalar);
                accumulate(grads, active, n.inputs[0], g.data[0] * gx);
                break;
            }
            case Op::smoothed_tv_grad:
                smoothed_tv_grad_backward(n, g, grads, active);
                break;
            case Op::sq_l2:
                accumulate(grads, active, n.inputs[0],
                           (2.0 * g.data[0]) * nodes_[n.inputs[0]].value);
                break;
            case Op::l2: {
                // subgradient 0 at the origin
                double nv = n.value.data[0];
                if (nv > 0.0)
                    accumulate(grads, active, n.inputs[0],
                               (g.data[0] / nv) * nodes_[n.inputs[0]].value);
                else
                    accumulate(grads, active, n.inputs[0],
                               Tensor::zeros(nodes_[n.inputs[0]].value.shape));
                break;
            }
            case Op::sum: {
                accumulate(grads, active, n.inputs[0],
                           Tensor::full(nodes_[n.inputs[0]].value.shape, g.data[0]));
                break;
            }
            case Op::mean_pool: {
                const Tensor& x = nodes_[n.inputs[0]].value;
                const std::size_t c = x.shape[0], hw = x.shape[1] * x.shape[2];
                Tensor gx = Tensor::zeros(x.shape);
                for (std::size_t ch = 0; ch < c; ++ch) {
                    double v = g.data[ch] / static_cast<double>(hw);
                    for (std::size_t i = 0; i < hw; ++i) gx.data[ch * hw + i] = v;
                }
                accumulate(grads, active, n.inputs[0], gx);
                break;
            }
            case Op::relu: {
                const Tensor& x = nodes_[n.inputs[0]].value;
                Tensor gx = g;
                for (std::size_t i = 0; i < gx.numel(); ++i)
                    if (x.data[i] <= 0.0) gx.data[i] = 0.0;
                accumulate(grads, active, n.inputs[0], gx);
                break;
            }
            case Op::sigmoid: {
                Tensor gx = g;
                for (std::size_t i = 0; i < gx.numel(); ++i) {
                    double s = n.value.data[i];
                    gx.data[i] *= s * (1.0 - s);
                }
                accumulate(grads, active, n.inputs[0], gx);
                break;
            }
            case Op::bce_logit: {
                double z = nodes_[n.inputs[0]].value.data[0];
                double s = sigmoid_value(z);
                accumulate(grads, active, n.inputs[0],
                           Tensor::scalar(g.data[0] * (s - n.scalar)));
                break;
            }
            case Op::crop: {
                const Tensor& x = nodes_[n.inputs[0]].value;
                Tensor gx = Tensor::zeros(x.shape);
                for (std::size_t i = 0; i < n.side; ++i)
                    for (std::size_t j = 0; j < n.side; ++j)
                        gx.at(n.i0 + i, n.j0 + j) = g.at(i, j);
                accumulate(grads, active, n.inputs[0], gx);
                break;
            }
        }
    }

    void conv2d_backward(const Node& n, const Tensor& g, std::vector<Tensor>& grads,
                         std::vector<bool>& active) const {
        const Tensor& x = nodes_[n.inputs[0]].value;
        const Tensor& k = nodes_[n.inputs[1]].value;
        const std::size_t cin = x.shape[0], h = x.shape[1], w = x.shape[2];
        const std::size_t cout = k.shape[0], kh = k.shape[2], kw = k.shape[3];
        const std::size_t oh = g.shape[1], ow = g.shape[2];
        const std::size_t pad = n.pad;
        Tensor gx = Tensor::zeros(x.shape);
        Tensor gk = Tensor::zeros(k.shape);
        Tensor gb = Tensor::zeros(nodes_[n.inputs[2]].value.shape);
        for (std::size_t o = 0; o < cout; ++o)
            for (std::size_t i = 0; i < oh; ++i)
                for (std::size_t j = 0; j < ow; ++j) {
                    double gv = g.at(o, i, j);
                    gb.data[o] += gv;
                    for (std::size_t c = 0; c < cin; ++c)
                        for (std::size_t p = 0; p < kh; ++p) {
                            std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(i + p) -
                                                static_cast<std::ptrdiff_t>(pad);
                            if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(h)) continue;
                            for (std::size_t q = 0; q < kw; ++q) {
                                std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(j + q) -
                                                    static_cast<std::ptrdiff_t>(pad);
                                if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(w)) continue;
                                const std::size_t kidx = ((o * cin + c) * kh + p) * kw + q;
                                gx.at(c, static_cast<std::size_t>(ii),
                                      static_cast<std::size_t>(jj)) += k.data[kidx] * gv;
                                gk.data[kidx] +=
                                    x.at(c, static_cast<std::size_t>(ii),
                                         static_cast<std::size_t>(jj)) * gv;
                            }
                        }
                }
        accumulate(grads, active, n.inputs[0], gx);
        accumulate(grads, active, n.inputs[1], gk);
        accumulate(grads, active, n.inputs[2], gb);
    }

    // Hessian-vector product of the smoothed TV: D^T Jpsi(Du) D v, with the
    // per-pixel 2x2 Jacobian of psi(g) = g / sqrt(|g|^2 + eps^2).
    void smoothed_tv_grad_backward(const Node& n, const Tensor& g, std::vector<Tensor>& grads,
                                   std::vector<bool>& active) const {
        const Tensor& u = nodes_[n.inputs[0]].value;
        const std::size_t h = u.shape[0], w = u.shape[1];
        const double eps = n.scalar;
        Tensor ax = Tensor::zeros({h, w}), ay = Tensor::zeros({h, w});
        detail::forward_diff(u, ax, ay);
        Tensor wx = Tensor::zeros({h, w}), wy = Tensor::zeros({h, w});
        detail::forward_diff(g, wx, wy);
        Tensor jx = Tensor::zeros({h, w}), jy = Tensor::zeros({h, w});
        for (std::size_t i = 0; i < h * w; ++i) {
            double a = ax.data[i], b = ay.data[i];
            double nn = std::sqrt(a * a + b * b + eps * eps);
            double n3 = nn * nn * nn;
            double cross = (a * wx.data[i] + b * wy.data[i]) / n3;
            jx.data[i] = wx.data[i] / nn - a * cross;
            jy.data[i] = wy.data[i] / nn - b * cross;
        }
        Tensor out = Tensor::zeros({h, w});
        detail::forward_diff_adjoint(jx, jy, out);
        accumulate(grads, active, n.inputs[0], out);
    }
};

}  // namespace ctb::ad
