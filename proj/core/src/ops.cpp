#include "synthvit/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <utility>

#include "synthvit/errors.hpp"

namespace synthvit {

namespace {

bool track(const Tensor& t) {
    return detail::grad_enabled() && t.requires_grad();
}

void accumulate(Tensor& t, const std::vector<double>& g) {
    t.ensure_grad();
    auto& dst = t.grad_values();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

Tensor make_output(Shape shape, std::vector<double> values, std::vector<Tensor> parents,
                   std::function<void(const Tensor&)> backward) {
    Tensor out = Tensor::from_data(std::move(shape), std::move(values));
    bool any = false;
    if (detail::grad_enabled()) {
        for (const auto& p : parents) {
            if (p.requires_grad()) {
                any = true;
                break;
            }
        }
    }
    if (any) {
        auto node = std::make_shared<detail::Node>();
        node->parents = std::move(parents);
        node->backward = std::move(backward);
        out.set_node(std::move(node));
    }
    return out;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
    }
}

// C[m,n] += A[m,k] . B[k,n]
void mm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            if (av == 0.0) continue;
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m,k] += A[m,n] . B[k,n]^T
void mm_nt_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t n,
               std::size_t k) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * n;
        double* crow = c + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double* brow = b + p * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
            crow[p] += acc;
        }
    }
}

// C[k,n] += A[m,k]^T . B[m,n]
void mm_tn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* brow = b + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            if (av == 0.0) continue;
            double* crow = c + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

std::size_t normalize_axis(int axis, std::size_t rank) {
    long long ax = axis;
    if (ax < 0) ax += static_cast<long long>(rank);
    if (ax < 0 || ax >= static_cast<long long>(rank)) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for rank " +
                             std::to_string(rank));
    }
    return static_cast<std::size_t>(ax);
}

std::vector<std::size_t> row_major_strides(const Shape& shape) {
    std::vector<std::size_t> strides(shape.size(), 1);
    for (std::size_t i = shape.size(); i-- > 1;) {
        strides[i - 1] = strides[i] * shape[i];
    }
    return strides;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    const auto& as = a.shape();
    const auto& bs = b.shape();
    if (bs.size() > as.size() ||
        !std::equal(bs.rbegin(), bs.rend(), as.rbegin())) {
        throw DimensionError("add: " + shape_str(bs) + " is not a suffix of " + shape_str(as));
    }
    const std::size_t bn = b.numel();
    std::vector<double> out(a.numel());
    const double* ad = a.data();
    const double* bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i % bn];
    return make_output(as, std::move(out), {a, b}, [bn](const Tensor& o) {
        auto& pa = o.node()->parents[0];
        auto& pb = o.node()->parents[1];
        const auto& g = o.grad_values();
        if (pa.requires_grad()) accumulate(pa, g);
        if (pb.requires_grad()) {
            pb.ensure_grad();
            auto& gb = pb.grad_values();
            for (std::size_t i = 0; i < g.size(); ++i) gb[i % bn] += g[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<double> out(a.numel());
    const double* ad = a.data();
    const double* bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] - bd[i];
    return make_output(a.shape(), std::move(out), {a, b}, [](const Tensor& o) {
        auto& pa = o.node()->parents[0];
        auto& pb = o.node()->parents[1];
        const auto& g = o.grad_values();
        if (pa.requires_grad()) accumulate(pa, g);
        if (pb.requires_grad()) {
            pb.ensure_grad();
            auto& gb = pb.grad_values();
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<double> out(a.numel());
    const double* ad = a.data();
    const double* bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
    return make_output(a.shape(), std::move(out), {a, b}, [](const Tensor& o) {
        auto& pa = o.node()->parents[0];
        auto& pb = o.node()->parents[1];
        const auto& g = o.grad_values();
        if (pa.requires_grad()) {
            pa.ensure_grad();
            auto& ga = pa.grad_values();
            const double* bv = pb.data();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        }
        if (pb.requires_grad()) {
            pb.ensure_grad();
            auto& gb = pb.grad_values();
            const double* av = pa.data();
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
        }
    });
}

Tensor scale(const Tensor& a, double factor) {
    std::vector<double> out(a.numel());
    const double* ad = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * factor;
    return make_output(a.shape(), std::move(out), {a}, [factor](const Tensor& o) {
        auto& pa = o.node()->parents[0];
        if (!pa.requires_grad()) return;
        pa.ensure_grad();
        auto& ga = pa.grad_values();
        const auto& g = o.grad_values();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
    });
}

Tensor add_scalar(const Tensor& a, double constant) {
    std::vector<double> out(a.numel());
    const double* ad = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + constant;
    return make_output(a.shape(), std::move(out), {a}, [](const Tensor& o) {
        auto& pa = o.node()->parents[0];
        if (pa.requires_grad()) accumulate(pa, o.grad_values());
    });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    const auto& as = a.shape();
    const auto& bs = b.shape();
    if (!((as.size() == 2 && bs.size() == 2) || (as.size() == 3 && bs.size() == 3))) {
        throw DimensionError("matmul: expects 2-d or batched 3-d operands, got " +
                             shape_str(as) + " x " + shape_str(bs));
    }
    const bool batched = as.size() == 3;
    const std::size_t batch = batched ? as[0] : 1;
    if (batched && bs[0] != batch) {
        throw DimensionError("matmul: batch mismatch " + shape_str(as) + " x " + shape_str(bs));
    }
    const std::size_t m = as[batched ? 1 : 0];
    const std::size_t k = as[batched ? 2 : 1];
    const std::size_t n = bs[batched ? 2 : 1];
    if (bs[batched ? 1 : 0] != k) {
        throw DimensionError("matmul: inner dimensions disagree " + shape_str(as) + " x " +
                             shape_str(bs));
    }
    Shape out_shape = batched ? Shape{batch, m, n} : Shape{m, n};
    std::vector<double> out(batch * m * n, 0.0);
    for (std::size_t s = 0; s < batch; ++s) {
        mm_acc(a.data() + s * m * k, b.data() + s * k * n, out.data() + s * m * n, m, k, n);
    }
    return make_output(std::move(out_shape), std::move(out), {a, b},
                       [batch, m, k, n](const Tensor& o) {
                           auto& pa = o.node()->parents[0];
                           auto& pb = o.node()->parents[1];
                           const double* g = o.grad();
                           if (pa.requires_grad()) {
                               pa.ensure_grad();
                               for (std::size_t s = 0; s < batch; ++s) {
                                   mm_nt_acc(g + s * m * n, pb.data() + s * k * n,
                                             pa.grad() + s * m * k, m, n, k);
                               }
                           }
                           if (pb.requires_grad()) {
                               pb.ensure_grad();
                               for (std::size_t s = 0; s < batch; ++s) {
                                   mm_tn_acc(pa.data() + s * m * k, g + s * m * n,
                                             pb.grad() + s * k * n, m, k, n);
                               }
                           }
                       });
}

Tensor transpose_last2(const Tensor& x) {
    const auto& xs = x.shape();
    if (xs.size() < 2) throw DimensionError("transpose_last2: rank must be >= 2");
    const std::size_t rows = xs[xs.size() - 2];
    const std::size_t cols = xs[xs.size() - 1];
    const std::size_t outer = x.numel() / (rows * cols);
    Shape out_shape = xs;
    std::swap(out_shape[out_shape.size() - 2], out_shape[out_shape.size() - 1]);
    std::vector<double> out(x.numel());
    const double* xd = x.data();
    for (std::size_t s = 0; s < outer; ++s) {
        const double* src = xd + s * rows * cols;
        double* dst = out.data() + s * rows * cols;
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
        }
    }
    return make_output(std::move(out_shape), std::move(out), {x},
                       [rows, cols, outer](const Tensor& o) {
                           auto& px = o.node()->parents[0];
                           if (!px.requires_grad()) return;
                           px.ensure_grad();
                           const double* g = o.grad();
                           double* gx = px.grad();
                           for (std::size_t s = 0; s < outer; ++s) {
                               const double* gsrc = g + s * rows * cols;
                               double* gdst = gx + s * rows * cols;
                               for (std::size_t r = 0; r < rows; ++r) {
                                   for (std::size_t c = 0; c < cols; ++c) {
                                       gdst[r * cols + c] += gsrc[c * rows + r];
                                   }
                               }
                           }
                       });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    if (ws.size() != 2) throw DimensionError("linear: weight must be 2-d, got " + shape_str(ws));
    if (xs.empty() || xs.back() != ws[0]) {
        throw DimensionError("linear: input " + shape_str(xs) + " incompatible with weight " +
                             shape_str(ws));
    }
    if (b.shape() != Shape{ws[1]}) {
        throw DimensionError("linear: bias " + shape_str(b.shape()) + " incompatible with weight " +
                             shape_str(ws));
    }
    const std::size_t k = ws[0];
    const std::size_t n = ws[1];
    const std::size_t m = x.numel() / k;
    std::vector<double> out(m * n);
    const double* bd = b.data();
    for (std::size_t i = 0; i < m; ++i) {
        std::copy(bd, bd + n, out.data() + i * n);
    }
    mm_acc(x.data(), w.data(), out.data(), m, k, n);
    Shape out_shape = xs;
    out_shape.back() = n;
    return make_output(std::move(out_shape), std::move(out), {x, w, b},
                       [m, k, n](const Tensor& o) {
                           auto& px = o.node()->parents[0];
                           auto& pw = o.node()->parents[1];
                           auto& pb = o.node()->parents[2];
                           const double* g = o.grad();
                           if (px.requires_grad()) {
                               px.ensure_grad();
                               mm_nt_acc(g, pw.data(), px.grad(), m, n, k);
                           }
                           if (pw.requires_grad()) {
                               pw.ensure_grad();
                               mm_tn_acc(px.data(), g, pw.grad(), m, k, n);
                           }
                           if (pb.requires_grad()) {
                               pb.ensure_grad();
                               double* gb = pb.grad();
                               for (std::size_t i = 0; i < m; ++i) {
                                   const double* grow = g + i * n;
                                   for (std::size_t j = 0; j < n; ++j) gb[j] += grow[j];
                               }
                           }
                       });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw DimensionError("reshape: " + shape_str(x.shape()) + " has " +
                             std::to_string(x.numel()) + " elements, target " + shape_str(shape));
    }
    std::vector<double> out(x.values());
    return make_output(std::move(shape), std::move(out), {x}, [](const Tensor& o) {
        auto& px = o.node()->parents[0];
        if (px.requires_grad()) accumulate(px, o.grad_values());
    });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm) {
    const auto& xs = x.shape();
    if (perm.size() != xs.size()) {
        throw DimensionError("permute: perm length " + std::to_string(perm.size()) +
                             " vs rank " + std::to_string(xs.size()));
    }
    std::vector<bool> seen(perm.size(), false);
    Shape out_shape(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) {
        if (perm[i] >= xs.size() || seen[perm[i]]) {
            throw DimensionError("permute: invalid permutation");
        }
        seen[perm[i]] = true;
        out_shape[i] = xs[perm[i]];
    }
    const auto in_strides = row_major_strides(xs);
    std::vector<std::size_t> strides(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) strides[i] = in_strides[perm[i]];

    const std::size_t n = x.numel();
    std::vector<double> out(n);
    std::vector<std::size_t> idx(out_shape.size(), 0);
    const double* xd = x.data();
    // Walk output indices in row-major order, tracking the input offset.
    std::size_t in_off = 0;
    std::vector<std::size_t> src_of_out(n);
    for (std::size_t o = 0; o < n; ++o) {
        out[o] = xd[in_off];
        src_of_out[o] = in_off;
        for (std::size_t ax = out_shape.size(); ax-- > 0;) {
            idx[ax]++;
            in_off += strides[ax];
            if (idx[ax] < out_shape[ax]) break;
            in_off -= strides[ax] * out_shape[ax];
            idx[ax] = 0;
        }
    }
    return make_output(std::move(out_shape), std::move(out), {x},
                       [src = std::move(src_of_out)](const Tensor& o) {
                           auto& px = o.node()->parents[0];
                           if (!px.requires_grad()) return;
                           px.ensure_grad();
                           double* gx = px.grad();
                           const double* g = o.grad();
                           for (std::size_t i = 0; i < src.size(); ++i) gx[src[i]] += g[i];
                       });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
    if (parts.empty()) throw DimensionError("concat: no inputs");
    const auto& first = parts[0].shape();
    if (axis >= first.size()) throw DimensionError("concat: axis out of range");
    Shape out_shape = first;
    std::size_t axis_total = 0;
    for (const auto& p : parts) {
        const auto& s = p.shape();
        if (s.size() != first.size()) throw DimensionError("concat: rank mismatch");
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (i != axis && s[i] != first[i]) {
                throw DimensionError("concat: shape mismatch " + shape_str(s) + " vs " +
                                     shape_str(first));
            }
        }
        axis_total += s[axis];
    }
    out_shape[axis] = axis_total;

    std::size_t outer = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
    std::size_t inner = 1;
    for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];

    std::vector<double> out(shape_numel(out_shape));
    std::vector<std::size_t> part_axis(parts.size());
    std::size_t offset = 0;
    for (std::size_t pi = 0; pi < parts.size(); ++pi) {
        const std::size_t pa = parts[pi].shape()[axis];
        part_axis[pi] = pa;
        const double* src = parts[pi].data();
        for (std::size_t ou = 0; ou < outer; ++ou) {
            std::copy(src + ou * pa * inner, src + (ou + 1) * pa * inner,
                      out.data() + (ou * axis_total + offset) * inner);
        }
        offset += pa;
    }
    std::vector<Tensor> parents(parts.begin(), parts.end());
    return make_output(std::move(out_shape), std::move(out), std::move(parents),
                       [outer, inner, axis_total, part_axis](const Tensor& o) {
                           const double* g = o.grad();
                           std::size_t off = 0;
                           for (std::size_t pi = 0; pi < part_axis.size(); ++pi) {
                               auto& p = o.node()->parents[pi];
                               const std::size_t pa = part_axis[pi];
                               if (p.requires_grad()) {
                                   p.ensure_grad();
                                   double* gp = p.grad();
                                   for (std::size_t ou = 0; ou < outer; ++ou) {
                                       const double* gsrc = g + (ou * axis_total + off) * inner;
                                       double* gdst = gp + ou * pa * inner;
                                       for (std::size_t i = 0; i < pa * inner; ++i) gdst[i] += gsrc[i];
                                   }
                               }
                               off += pa;
                           }
                       });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t len) {
    const auto& xs = x.shape();
    if (axis >= xs.size()) throw DimensionError("slice: axis out of range");
    if (start + len > xs[axis] || len == 0) {
        throw DimensionError("slice: range [" + std::to_string(start) + ", " +
                             std::to_string(start + len) + ") out of bounds for axis size " +
                             std::to_string(xs[axis]));
    }
    std::size_t outer = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= xs[i];
    std::size_t inner = 1;
    for (std::size_t i = axis + 1; i < xs.size(); ++i) inner *= xs[i];
    const std::size_t axis_n = xs[axis];

    Shape out_shape = xs;
    out_shape[axis] = len;
    std::vector<double> out(outer * len * inner);
    const double* xd = x.data();
    for (std::size_t ou = 0; ou < outer; ++ou) {
        std::copy(xd + (ou * axis_n + start) * inner, xd + (ou * axis_n + start + len) * inner,
                  out.data() + ou * len * inner);
    }
    return make_output(std::move(out_shape), std::move(out), {x},
                       [outer, inner, axis_n, start, len](const Tensor& o) {
                           auto& px = o.node()->parents[0];
                           if (!px.requires_grad()) return;
                           px.ensure_grad();
                           double* gx = px.grad();
                           const double* g = o.grad();
                           for (std::size_t ou = 0; ou < outer; ++ou) {
                               const double* gsrc = g + ou * len * inner;
                               double* gdst = gx + (ou * axis_n + start) * inner;
                               for (std::size_t i = 0; i < len * inner; ++i) gdst[i] += gsrc[i];
                           }
                       });
}

Tensor broadcast_rows(const Tensor& x, std::size_t n) {
    if (x.rank() != 1) throw DimensionError("broadcast_rows: expects a vector, got " + shape_str(x.shape()));
    const std::size_t d = x.numel();
    std::vector<double> out(n * d);
    for (std::size_t i = 0; i < n; ++i) {
        std::copy(x.data(), x.data() + d, out.data() + i * d);
    }
    return make_output({n, d}, std::move(out), {x}, [n, d](const Tensor& o) {
        auto& px = o.node()->parents[0];
        if (!px.requires_grad()) return;
        px.ensure_grad();
        double* gx = px.grad();
        const double* g = o.grad();
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < d; ++j) gx[j] += g[i * d + j];
        }
    });
}

Tensor softmax(const Tensor& x, int axis) {
    const std::size_t ax = normalize_axis(axis, x.rank());
    const auto& xs = x.shape();
    const std::size_t n = xs[ax];
    std::size_t outer = 1;
    for (std::size_t i = 0; i < ax; ++i) outer *= xs[i];
    std::size_t inner = 1;
    for (std::size_t i = ax + 1; i < xs.size(); ++i) inner *= xs[i];

    std::vector<double> out(x.numel());
    const double* xd = x.data();
    for (std::size_t ou = 0; ou < outer; ++ou) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = ou * n * inner + in;
            double mx = xd[base];
            for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, xd[base + i * inner]);
            double denom = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double e = std::exp(xd[base + i * inner] - mx);
                out[base + i * inner] = e;
                denom += e;
            }
            for (std::size_t i = 0; i < n; ++i) out[base + i * inner] /= denom;
        }
    }
    std::vector<double> saved = out;
    return make_output(xs, std::move(out), {x},
                       [outer, inner, n, y = std::move(saved)](const Tensor& o) {
                           auto& px = o.node()->parents[0];
                           if (!px.requires_grad()) return;
                           px.ensure_grad();
                           double* gx = px.grad();
                           const double* g = o.grad();
                           for (std::size_t ou = 0; ou < outer; ++ou) {
                               for (std::size_t in = 0; in < inner; ++in) {
                                   const std::size_t base = ou * n * inner + in;
                                   double dot = 0.0;
                                   for (std::size_t i = 0; i < n; ++i) {
                                       dot += g[base + i * inner] * y[base + i * inner];
                                   }
                                   for (std::size_t i = 0; i < n; ++i) {
                                       const std::size_t p = base + i * inner;
                                       gx[p] += y[p] * (g[p] - dot);
                                   }
                               }
                           }
                       });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    if (eps <= 0.0) throw ParameterError("layer_norm: eps must be positive");
    const auto& xs = x.shape();
    if (xs.empty()) throw DimensionError("layer_norm: rank must be >= 1");
    const std::size_t d = xs.back();
    if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
        throw DimensionError("layer_norm: gamma/beta must be [" + std::to_string(d) + "], got " +
                             shape_str(gamma.shape()) + " and " + shape_str(beta.shape()));
    }
    const std::size_t rows = x.numel() / d;
    std::vector<double> out(x.numel());
    std::vector<double> xhat(x.numel());
    std::vector<double> inv_sigma(rows);
    const double* xd = x.data();
    const double* gd = gamma.data();
    const double* bd = beta.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = xd + r * d;
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += row[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double c = row[j] - mu;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_sigma[r] = inv;
        for (std::size_t j = 0; j < d; ++j) {
            const double h = (row[j] - mu) * inv;
            xhat[r * d + j] = h;
            out[r * d + j] = gd[j] * h + bd[j];
        }
    }
    return make_output(xs, std::move(out), {x, gamma, beta},
                       [rows, d, xh = std::move(xhat), inv = std::move(inv_sigma)](const Tensor& o) {
                           auto& px = o.node()->parents[0];
                           auto& pg = o.node()->parents[1];
                           auto& pb = o.node()->parents[2];
                           const double* g = o.grad();
                           const double* gam = pg.data();
                           if (pg.requires_grad()) {
                               pg.ensure_grad();
                               double* gg = pg.grad();
                               for (std::size_t r = 0; r < rows; ++r) {
                                   for (std::size_t j = 0; j < d; ++j) {
                                       gg[j] += g[r * d + j] * xh[r * d + j];
                                   }
                               }
                           }
                           if (pb.requires_grad()) {
                               pb.ensure_grad();
                               double* gb = pb.grad();
                               for (std::size_t r = 0; r < rows; ++r) {
                                   for (std::size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
                               }
                           }
                           if (px.requires_grad()) {
                               px.ensure_grad();
                               double* gx = px.grad();
                               for (std::size_t r = 0; r < rows; ++r) {
                                   double mean_gy = 0.0;
                                   double mean_gyh = 0.0;
                                   for (std::size_t j = 0; j < d; ++j) {
                                       const double gy = g[r * d + j] * gam[j];
                                       mean_gy += gy;
                                       mean_gyh += gy * xh[r * d + j];
                                   }
                                   mean_gy /= static_cast<double>(d);
                                   mean_gyh /= static_cast<double>(d);
                                   for (std::size_t j = 0; j < d; ++j) {
                                       const double gy = g[r * d + j] * gam[j];
                                       gx[r * d + j] +=
                                           inv[r] * (gy - mean_gy - xh[r * d + j] * mean_gyh);
                                   }
                               }
                           }
                       });
}

Tensor gelu(const Tensor& x) {
    constexpr double kSqrt2OverPi = 0.7978845608028654;
    constexpr double kCubic = 0.044715;
    std::vector<double> out(x.numel());
    const double* xd = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = xd[i];
        const double u = kSqrt2OverPi * (v + kCubic * v * v * v);
        out[i] = 0.5 * v * (1.0 + std::tanh(u));
    }
    return make_output(x.shape(), std::move(out), {x}, [](const Tensor& o) {
        auto& px = o.node()->parents[0];
        if (!px.requires_grad()) return;
        px.ensure_grad();
        const double* xd = px.data();
        const double* g = o.grad();
        double* gx = px.grad();
        for (std::size_t i = 0; i < o.numel(); ++i) {
            const double v = xd[i];
            const double u = kSqrt2OverPi * (v + kCubic * v * v * v);
            const double th = std::tanh(u);
            const double sech2 = 1.0 - th * th;
            const double du = kSqrt2OverPi * (1.0 + 3.0 * kCubic * v * v);
            gx[i] += g[i] * (0.5 * (1.0 + th) + 0.5 * v * sech2 * du);
        }
    });
}

Tensor dropout(const Tensor& x, double rate, RunMode mode, Rng* rng) {
    if (rate < 0.0 || rate >= 1.0) {
        throw ParameterError("dropout: rate must lie in [0,1), got " + std::to_string(rate));
    }
    if (mode == RunMode::eval || rate == 0.0) {
        return x;
    }
    if (rng == nullptr) throw ParameterError("dropout: train mode requires an rng");
    const double keep_scale = 1.0 / (1.0 - rate);
    std::vector<double> mask(x.numel());
    for (double& m : mask) m = (rng->uniform() >= rate) ? keep_scale : 0.0;
    std::vector<double> out(x.numel());
    const double* xd = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] * mask[i];
    return make_output(x.shape(), std::move(out), {x},
                       [m = std::move(mask)](const Tensor& o) {
                           auto& px = o.node()->parents[0];
                           if (!px.requires_grad()) return;
                           px.ensure_grad();
                           double* gx = px.grad();
                           const double* g = o.grad();
                           for (std::size_t i = 0; i < m.size(); ++i) gx[i] += g[i] * m[i];
                       });
}

Tensor sum(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.values()) acc += v;
    return make_output({1}, {acc}, {x}, [](const Tensor& o) {
        auto& px = o.node()->parents[0];
        if (!px.requires_grad()) return;
        px.ensure_grad();
        const double g = o.grad()[0];
        for (double& gv : px.grad_values()) gv += g;
    });
}

Tensor mean(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.values()) acc += v;
    const double inv_n = 1.0 / static_cast<double>(x.numel());
    return make_output({1}, {acc * inv_n}, {x}, [inv_n](const Tensor& o) {
        auto& px = o.node()->parents[0];
        if (!px.requires_grad()) return;
        px.ensure_grad();
        const double g = o.grad()[0] * inv_n;
        for (double& gv : px.grad_values()) gv += g;
    });
}

Tensor cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels) {
    const auto& ls = logits.shape();
    if (ls.size() != 2) throw DimensionError("cross_entropy: logits must be [batch, classes]");
    const std::size_t batch = ls[0];
    const std::size_t classes = ls[1];
    if (labels.size() != batch) {
        throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch " +
                             std::to_string(batch));
    }
    for (std::size_t lab : labels) {
        if (lab >= classes) {
            throw DataError("cross_entropy: label " + std::to_string(lab) + " out of range [0, " +
                            std::to_string(classes) + ")");
        }
    }
    std::vector<double> probs(logits.numel());
    const double* ld = logits.data();
    double loss = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        const double* row = ld + b * classes;
        double mx = row[0];
        for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
        double denom = 0.0;
        for (std::size_t c = 0; c < classes; ++c) {
            const double e = std::exp(row[c] - mx);
            probs[b * classes + c] = e;
            denom += e;
        }
        for (std::size_t c = 0; c < classes; ++c) probs[b * classes + c] /= denom;
        loss -= std::log(probs[b * classes + labels[b]]);
    }
    loss /= static_cast<double>(batch);
    return make_output({1}, {loss}, {logits},
                       [batch, classes, labels, p = std::move(probs)](const Tensor& o) {
                           auto& pl = o.node()->parents[0];
                           if (!pl.requires_grad()) return;
                           pl.ensure_grad();
                           double* g = pl.grad();
                           const double scale_g = o.grad()[0] / static_cast<double>(batch);
                           for (std::size_t b = 0; b < batch; ++b) {
                               for (std::size_t c = 0; c < classes; ++c) {
                                   const double delta = (c == labels[b]) ? 1.0 : 0.0;
                                   g[b * classes + c] += scale_g * (p[b * classes + c] - delta);
                               }
                           }
                       });
}

Tensor embedding(const Tensor& table, const std::vector<std::size_t>& ids) {
    const auto& ts = table.shape();
    if (ts.size() != 2) throw DimensionError("embedding: table must be 2-d");
    const std::size_t vocab = ts[0];
    const std::size_t d = ts[1];
    for (std::size_t id : ids) {
        if (id >= vocab) {
            throw DataError("embedding: id " + std::to_string(id) + " out of range [0, " +
                            std::to_string(vocab) + ")");
        }
    }
    std::vector<double> out(ids.size() * d);
    const double* td = table.data();
    for (std::size_t i = 0; i < ids.size(); ++i) {
        std::copy(td + ids[i] * d, td + (ids[i] + 1) * d, out.data() + i * d);
    }
    return make_output({ids.size(), d}, std::move(out), {table}, [ids, d](const Tensor& o) {
        auto& pt = o.node()->parents[0];
        if (!pt.requires_grad()) return;
        pt.ensure_grad();
        double* gt = pt.grad();
        const double* g = o.grad();
        for (std::size_t i = 0; i < ids.size(); ++i) {
            for (std::size_t j = 0; j < d; ++j) gt[ids[i] * d + j] += g[i * d + j];
        }
    });
}

Tensor im2col(const Tensor& x, std::size_t k, std::size_t pad) {
    const auto& xs = x.shape();
    if (xs.size() != 4) throw DimensionError("im2col: expects [N,H,W,C], got " + shape_str(xs));
    const std::size_t n = xs[0], h = xs[1], w = xs[2], c = xs[3];
    if (h + 2 * pad < k || w + 2 * pad < k) throw DimensionError("im2col: kernel larger than padded input");
    const std::size_t oh = h + 2 * pad - k + 1;
    const std::size_t ow = w + 2 * pad - k + 1;
    const std::size_t patch = k * k * c;
    std::vector<double> out(n * oh * ow * patch, 0.0);
    const double* xd = x.data();
    for (std::size_t ni = 0; ni < n; ++ni) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                double* dst = out.data() + ((ni * oh + oy) * ow + ox) * patch;
                for (std::size_t dy = 0; dy < k; ++dy) {
                    const long long sy = static_cast<long long>(oy + dy) - static_cast<long long>(pad);
                    if (sy < 0 || sy >= static_cast<long long>(h)) continue;
                    for (std::size_t dx = 0; dx < k; ++dx) {
                        const long long sx = static_cast<long long>(ox + dx) - static_cast<long long>(pad);
                        if (sx < 0 || sx >= static_cast<long long>(w)) continue;
                        const double* src = xd + ((ni * h + sy) * w + sx) * c;
                        std::copy(src, src + c, dst + (dy * k + dx) * c);
                    }
                }
            }
        }
    }
    return make_output({n * oh * ow, patch}, std::move(out), {x},
                       [n, h, w, c, k, pad, oh, ow, patch](const Tensor& o) {
                           auto& px = o.node()->parents[0];
                           if (!px.requires_grad()) return;
                           px.ensure_grad();
                           double* gx = px.grad();
                           const double* g = o.grad();
                           for (std::size_t ni = 0; ni < n; ++ni) {
                               for (std::size_t oy = 0; oy < oh; ++oy) {
                                   for (std::size_t ox = 0; ox < ow; ++ox) {
                                       const double* gsrc = g + ((ni * oh + oy) * ow + ox) * patch;
                                       for (std::size_t dy = 0; dy < k; ++dy) {
                                           const long long sy =
                                               static_cast<long long>(oy + dy) - static_cast<long long>(pad);
                                           if (sy < 0 || sy >= static_cast<long long>(h)) continue;
                                           for (std::size_t dx = 0; dx < k; ++dx) {
                                               const long long sx = static_cast<long long>(ox + dx) -
                                                                    static_cast<long long>(pad);
                                               if (sx < 0 || sx >= static_cast<long long>(w)) continue;
                                               double* gdst = gx + ((ni * h + sy) * w + sx) * c;
                                               const double* gp = gsrc + (dy * k + dx) * c;
                                               for (std::size_t ch = 0; ch < c; ++ch) gdst[ch] += gp[ch];
                                           }
                                       }
                                   }
                               }
                           }
                       });
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t pad) {
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    if (xs.size() != 4) throw DimensionError("conv2d: input must be [N,H,W,C]");
    if (ws.size() != 4 || ws[0] != ws[1]) {
        throw DimensionError("conv2d: weight must be [k,k,Cin,Cout], got " + shape_str(ws));
    }
    if (ws[2] != xs[3]) {
        throw DimensionError("conv2d: input channels " + std::to_string(xs[3]) +
                             " vs weight " + std::to_string(ws[2]));
    }
    const std::size_t k = ws[0];
    const std::size_t cout = ws[3];
    const std::size_t oh = xs[1] + 2 * pad - k + 1;
    const std::size_t ow = xs[2] + 2 * pad - k + 1;
    Tensor cols = im2col(x, k, pad);
    Tensor wmat = reshape(w, {k * k * ws[2], cout});
    Tensor out2 = linear(cols, wmat, b);
    return reshape(out2, {xs[0], oh, ow, cout});
}

Tensor avg_pool2(const Tensor& x) {
    const auto& xs = x.shape();
    if (xs.size() != 4) throw DimensionError("avg_pool2: expects [N,H,W,C]");
    if (xs[1] % 2 != 0 || xs[2] % 2 != 0) {
        throw ParameterError("avg_pool2: spatial dims must be even, got " + shape_str(xs));
    }
    const std::size_t n = xs[0], h = xs[1], w = xs[2], c = xs[3];
    const std::size_t oh = h / 2, ow = w / 2;
    std::vector<double> out(n * oh * ow * c);
    const double* xd = x.data();
    for (std::size_t ni = 0; ni < n; ++ni) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                for (std::size_t ch = 0; ch < c; ++ch) {
                    const std::size_t y0 = 2 * oy, x0 = 2 * ox;
                    const double acc = xd[((ni * h + y0) * w + x0) * c + ch] +
                                       xd[((ni * h + y0) * w + x0 + 1) * c + ch] +
                                       xd[((ni * h + y0 + 1) * w + x0) * c + ch] +
                                       xd[((ni * h + y0 + 1) * w + x0 + 1) * c + ch];
                    out[((ni * oh + oy) * ow + ox) * c + ch] = acc * 0.25;
                }
            }
        }
    }
    return make_output({n, oh, ow, c}, std::move(out), {x}, [n, h, w, c, oh, ow](const Tensor& o) {
        auto& px = o.node()->parents[0];
        if (!px.requires_grad()) return;
        px.ensure_grad();
        double* gx = px.grad();
        const double* g = o.grad();
        for (std::size_t ni = 0; ni < n; ++ni) {
            for (std::size_t oy = 0; oy < oh; ++oy) {
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    for (std::size_t ch = 0; ch < c; ++ch) {
                        const double gv = g[((ni * oh + oy) * ow + ox) * c + ch] * 0.25;
                        const std::size_t y0 = 2 * oy, x0 = 2 * ox;
                        gx[((ni * h + y0) * w + x0) * c + ch] += gv;
                        gx[((ni * h + y0) * w + x0 + 1) * c + ch] += gv;
                        gx[((ni * h + y0 + 1) * w + x0) * c + ch] += gv;
                        gx[((ni * h + y0 + 1) * w + x0 + 1) * c + ch] += gv;
                    }
                }
            }
        }
    });
}

Tensor upsample_nearest2(const Tensor& x) {
    const auto& xs = x.shape();
    if (xs.size() != 4) throw DimensionError("upsample_nearest2: expects [N,H,W,C]");
    const std::size_t n = xs[0], h = xs[1], w = xs[2], c = xs[3];
    const std::size_t oh = 2 * h, ow = 2 * w;
    std::vector<double> out(n * oh * ow * c);
    const double* xd = x.data();
    for (std::size_t ni = 0; ni < n; ++ni) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                const double* src = xd + ((ni * h + oy / 2) * w + ox / 2) * c;
                double* dst = out.data() + ((ni * oh + oy) * ow + ox) * c;
                std::copy(src, src + c, dst);
            }
        }
    }
    return make_output({n, oh, ow, c}, std::move(out), {x}, [n, h, w, c, oh, ow](const Tensor& o) {
        auto& px = o.node()->parents[0];
        if (!px.requires_grad()) return;
        px.ensure_grad();
        double* gx = px.grad();
        const double* g = o.grad();
        for (std::size_t ni = 0; ni < n; ++ni) {
            for (std::size_t oy = 0; oy < oh; ++oy) {
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    const double* gsrc = g + ((ni * oh + oy) * ow + ox) * c;
                    double* gdst = gx + ((ni * h + oy / 2) * w + ox / 2) * c;
                    for (std::size_t ch = 0; ch < c; ++ch) gdst[ch] += gsrc[ch];
                }
            }
        }
    });
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
    const auto& xs = x.shape();
    const auto& bs = bias.shape();
    if (xs.size() != 4 || bs.size() != 2 || bs[0] != xs[0] || bs[1] != xs[3]) {
        throw DimensionError("add_channel_bias: " + shape_str(xs) + " with bias " + shape_str(bs));
    }
    const std::size_t n = xs[0], hw = xs[1] * xs[2], c = xs[3];
    std::vector<double> out(x.numel());
    const double* xd = x.data();
    const double* bd = bias.data();
    for (std::size_t ni = 0; ni < n; ++ni) {
        for (std::size_t s = 0; s < hw; ++s) {
            for (std::size_t ch = 0; ch < c; ++ch) {
                out[(ni * hw + s) * c + ch] = xd[(ni * hw + s) * c + ch] + bd[ni * c + ch];
            }
        }
    }
    return make_output(xs, std::move(out), {x, bias}, [n, hw, c](const Tensor& o) {
        auto& px = o.node()->parents[0];
        auto& pb = o.node()->parents[1];
        const double* g = o.grad();
        if (px.requires_grad()) accumulate(px, o.grad_values());
        if (pb.requires_grad()) {
            pb.ensure_grad();
            double* gb = pb.grad();
            for (std::size_t ni = 0; ni < n; ++ni) {
                for (std::size_t s = 0; s < hw; ++s) {
                    for (std::size_t ch = 0; ch < c; ++ch) {
                        gb[ni * c + ch] += g[(ni * hw + s) * c + ch];
                    }
                }
            }
        }
    });
}

namespace {

void adam_update(double* p, const double* g, std::vector<double>& m, std::vector<double>& v,
                 std::size_t n, long long t, const AdamConfig& cfg) {
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < n; ++i) {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        p[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}

void adam_prepare(std::size_t count, AdamState& state) {
    if (state.m.empty()) {
        state.m.resize(count);
        state.v.resize(count);
    }
    if (state.m.size() != count) {
        throw DimensionError("adam_step: state tracks " + std::to_string(state.m.size()) +
                             " tensors, got " + std::to_string(count));
    }
}

}  // namespace

void adam_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
               AdamState& state, const AdamConfig& cfg) {
    if (params.size() != grads.size()) {
        throw DimensionError("adam_step: " + std::to_string(params.size()) + " params vs " +
                             std::to_string(grads.size()) + " grads");
    }
    adam_prepare(params.size(), state);
    state.t += 1;
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->shape() != grads[i]->shape()) {
            throw DimensionError("adam_step: param " + shape_str(params[i]->shape()) +
                                 " vs grad " + shape_str(grads[i]->shape()));
        }
        auto& m = state.m[i];
        auto& v = state.v[i];
        if (m.empty()) {
            m.assign(params[i]->numel(), 0.0);
            v.assign(params[i]->numel(), 0.0);
        }
        adam_update(params[i]->data(), grads[i]->data(), m, v, params[i]->numel(), state.t, cfg);
    }
}

void adam_step(const std::vector<Tensor*>& params, AdamState& state, const AdamConfig& cfg) {
    adam_prepare(params.size(), state);
    state.t += 1;
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        p.ensure_grad();
        auto& m = state.m[i];
        auto& v = state.v[i];
        if (m.empty()) {
            m.assign(p.numel(), 0.0);
            v.assign(p.numel(), 0.0);
        }
        adam_update(p.data(), p.grad(), m, v, p.numel(), state.t, cfg);
    }
}

}  // namespace synthvit
