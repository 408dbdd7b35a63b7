#include "point3d/tape.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "point3d/error.hpp"
#include "point3d/kernels.hpp"

namespace point3d {

namespace {

Tensor transpose2d(const Tensor& a) {
    const int m = a.dim(0), n = a.dim(1);
    Tensor t({n, m});
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            t.at(j, i) = a.at(i, j);
        }
    }
    return t;
}

} // namespace

void Tape::check_open(const char* op) const {
    if (consumed_) {
        throw ContractError(std::string(op) + ": tape already consumed by backward(); reset() first");
    }
}

void Tape::check_var(Var v, const char* op) const {
    if (!v.valid() || v.id >= static_cast<int>(nodes_.size())) {
        throw ContractError(std::string(op) + ": invalid Var handle");
    }
}

Var Tape::emit(Tensor value, bool requires_grad, BackwardFn bw) {
    // Nodes outside the differentiable subgraph never receive gradients, so
    // their backward closures would be dead weight.
    if (!requires_grad) bw = nullptr;
    nodes_.push_back(Node{std::move(value), std::move(bw), requires_grad});
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::input(Tensor value) {
    check_open("input");
    return emit(std::move(value), true, nullptr);
}

Var Tape::constant(Tensor value) {
    check_open("constant");
    return emit(std::move(value), false, nullptr);
}

void Tape::accumulate(int id, const Tensor& g) {
    Tensor& slot = grads_[static_cast<size_t>(id)];
    if (slot.empty()) {
        slot = g;
        return;
    }
    double* d = slot.data();
    const double* s = g.data();
    const int64_t n = slot.numel();
    for (int64_t i = 0; i < n; ++i) d[i] += s[i];
}

const Tensor& Tape::value(Var v) const {
    check_var(v, "value");
    return nodes_[static_cast<size_t>(v.id)].value;
}

const Tensor& Tape::grad(Var v) const {
    check_var(v, "grad");
    static const Tensor empty;
    if (grads_.size() != nodes_.size()) return empty;
    return grads_[static_cast<size_t>(v.id)];
}

void Tape::reset() {
    nodes_.clear();
    grads_.clear();
    consumed_ = false;
}

void Tape::backward(Var loss) {
    check_var(loss, "backward");
    if (consumed_) {
        throw ContractError("backward: tape already consumed; reset() first");
    }
    if (value(loss).numel() != 1) {
        throw ContractError("backward: loss must be scalar, got shape " + value(loss).shape_str());
    }
    grads_.assign(nodes_.size(), Tensor{});
    grads_[static_cast<size_t>(loss.id)] = Tensor::scalar(1.0);
    for (int i = loss.id; i >= 0; --i) {
        const Node& node = nodes_[static_cast<size_t>(i)];
        if (!node.backward) continue;
        const Tensor& g = grads_[static_cast<size_t>(i)];
        if (g.empty()) continue;
        node.backward(*this, g);
    }
    consumed_ = true;
}

// ---------------------------------------------------------------------------
// elementwise

Var Tape::add(Var a, Var b) {
    check_open("add");
    check_var(a, "add");
    check_var(b, "add");
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    require_same_shape(va, vb, "add");
    Tensor out(va.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = va[i] + vb[i];
    bool rg = needs_grad(a) || needs_grad(b);
    int ia = a.id, ib = b.id;
    return emit(std::move(out), rg, [ia, ib](Tape& t, const Tensor& g) {
        if (t.needs_grad(Var{ia})) t.accumulate(ia, g);
        if (t.needs_grad(Var{ib})) t.accumulate(ib, g);
    });
}

Var Tape::sub(Var a, Var b) {
    check_open("sub");
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    require_same_shape(va, vb, "sub");
    Tensor out(va.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = va[i] - vb[i];
    bool rg = needs_grad(a) || needs_grad(b);
    int ia = a.id, ib = b.id;
    return emit(std::move(out), rg, [ia, ib](Tape& t, const Tensor& g) {
        if (t.needs_grad(Var{ia})) t.accumulate(ia, g);
        if (t.needs_grad(Var{ib})) {
            Tensor ng(g.shape());
            for (int64_t i = 0; i < g.numel(); ++i) ng[i] = -g[i];
            t.accumulate(ib, ng);
        }
    });
}

Var Tape::mul(Var a, Var b) {
    check_open("mul");
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    require_same_shape(va, vb, "mul");
    Tensor out(va.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = va[i] * vb[i];
    bool rg = needs_grad(a) || needs_grad(b);
    int ia = a.id, ib = b.id;
    return emit(std::move(out), rg, [ia, ib](Tape& t, const Tensor& g) {
        if (t.needs_grad(Var{ia})) {
            const Tensor& vb2 = t.value(Var{ib});
            Tensor ga(g.shape());
            for (int64_t i = 0; i < g.numel(); ++i) ga[i] = g[i] * vb2[i];
            t.accumulate(ia, ga);
        }
        if (t.needs_grad(Var{ib})) {
            const Tensor& va2 = t.value(Var{ia});
            Tensor gb(g.shape());
            for (int64_t i = 0; i < g.numel(); ++i) gb[i] = g[i] * va2[i];
            t.accumulate(ib, gb);
        }
    });
}

Var Tape::scale(Var a, double c) {
    check_open("scale");
    const Tensor& va = value(a);
    Tensor out(va.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = va[i] * c;
    int ia = a.id;
    return emit(std::move(out), needs_grad(a), [ia, c](Tape& t, const Tensor& g) {
        if (!t.needs_grad(Var{ia})) return;
        Tensor ga(g.shape());
        for (int64_t i = 0; i < g.numel(); ++i) ga[i] = g[i] * c;
        t.accumulate(ia, ga);
    });
}

Var Tape::rsub_scalar(double c, Var a) {
    check_open("rsub_scalar");
    const Tensor& va = value(a);
    Tensor out(va.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = c - va[i];
    int ia = a.id;
    return emit(std::move(out), needs_grad(a), [ia](Tape& t, const Tensor& g) {
        if (!t.needs_grad(Var{ia})) return;
        Tensor ga(g.shape());
        for (int64_t i = 0; i < g.numel(); ++i) ga[i] = -g[i];
        t.accumulate(ia, ga);
    });
}

Var Tape::abs(Var a) {
    check_open("abs");
    const Tensor& va = value(a);
    Tensor out(va.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::fabs(va[i]);
    int ia = a.id;
    // subgradient 0 at the kink
    return emit(std::move(out), needs_grad(a), [ia](Tape& t, const Tensor& g) {
        if (!t.needs_grad(Var{ia})) return;
        const Tensor& va2 = t.value(Var{ia});
        Tensor ga(g.shape());
        for (int64_t i = 0; i < g.numel(); ++i) {
            double s = va2[i] > 0.0 ? 1.0 : (va2[i] < 0.0 ? -1.0 : 0.0);
            ga[i] = g[i] * s;
        }
        t.accumulate(ia, ga);
    });
}

Var Tape::log(Var a) {
    check_open("log");
    const Tensor& va = value(a);
    Tensor out(va.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::log(va[i]);
    int ia = a.id;
    return emit(std::move(out), needs_grad(a), [ia](Tape& t, const Tensor& g) {
        if (!t.needs_grad(Var{ia})) return;
        const Tensor& va2 = t.value(Var{ia});
        Tensor ga(g.shape());
        for (int64_t i = 0; i < g.numel(); ++i) ga[i] = g[i] / va2[i];
        t.accumulate(ia, ga);
    });
}

Var Tape::pow_scalar(Var a, double p) {
    check_open("pow_scalar");
    const Tensor& va = value(a);
    Tensor out(va.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::pow(va[i], p);
    int ia = a.id;
    return emit(std::move(out), needs_grad(a), [ia, p](Tape& t, const Tensor& g) {
        if (!t.needs_grad(Var{ia})) return;
        const Tensor& va2 = t.value(Var{ia});
        Tensor ga(g.shape());
        for (int64_t i = 0; i < g.numel(); ++i) {
            ga[i] = g[i] * p * std::pow(va2[i], p - 1.0);
        }
        t.accumulate(ia, ga);
    });
}

Var Tape::clamp(Var a, double lo, double hi) {
    check_open("clamp");
    const Tensor& va = value(a);
    Tensor out(va.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::clamp(va[i], lo, hi);
    int ia = a.id;
    return emit(std::move(out), needs_grad(a), [ia, lo, hi](Tape& t, const Tensor& g) {
        if (!t.needs_grad(Var{ia})) return;
        const Tensor& va2 = t.value(Var{ia});
        Tensor ga(g.shape());
        for (int64_t i = 0; i < g.numel(); ++i) {
            ga[i] = (va2[i] >= lo && va2[i] <= hi) ? g[i] : 0.0;
        }
        t.accumulate(ia, ga);
    });
}

Var Tape::relu(Var a) {
    check_open("relu");
    const Tensor& va = value(a);
    Tensor out(va.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = va[i] > 0.0 ? va[i] : 0.0;
    int ia = a.id;
    return emit(std::move(out), needs_grad(a), [ia](Tape& t, const Tensor& g) {
        if (!t.needs_grad(Var{ia})) return;
        const Tensor& va2 = t.value(Var{ia});
        Tensor ga(g.shape());
        for (int64_t i = 0; i < g.numel(); ++i) ga[i] = va2[i] > 0.0 ? g[i] : 0.0;
        t.accumulate(ia, ga);
    });
}

Var Tape::sigmoid(Var a) {
    check_open("sigmoid");
    const Tensor& va = value(a);
    Tensor out(va.shape());
    for (int64_t i = 0; i < out.numel(); ++i) {
        double v = va[i];
        out[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    }
    int ia = a.id;
    int self = static_cast<int>(nodes_.size());
    return emit(std::move(out), needs_grad(a), [ia, self](Tape& t, const Tensor& g) {
        if (!t.needs_grad(Var{ia})) return;
        const Tensor& y = t.value(Var{self});
        Tensor ga(g.shape());
        for (int64_t i = 0; i < g.numel(); ++i) ga[i] = g[i] * y[i] * (1.0 - y[i]);
        t.accumulate(ia, ga);
    });
}

// ---------------------------------------------------------------------------
// shape

Var Tape::reshape(Var a, std::vector<int> shape) {
    check_open("reshape");
    const Tensor& va = value(a);
    Tensor out(std::move(shape), va.vec());
    if (out.numel() != va.numel()) {
        throw DimensionError("reshape: element count mismatch " + va.shape_str() + " vs " +
                             out.shape_str());
    }
    int ia = a.id;
    return emit(std::move(out), needs_grad(a), [ia](Tape& t, const Tensor& g) {
        if (!t.needs_grad(Var{ia})) return;
        t.accumulate(ia, Tensor(t.value(Var{ia}).shape(), g.vec()));
    });
}

Var Tape::transpose(Var a) {
    check_open("transpose");
    const Tensor& va = value(a);
    if (va.rank() != 2) {
        throw DimensionError("transpose: expected rank-2, got " + va.shape_str());
    }
    int ia = a.id;
    return emit(transpose2d(va), needs_grad(a), [ia](Tape& t, const Tensor& g) {
        if (!t.needs_grad(Var{ia})) return;
        t.accumulate(ia, transpose2d(g));
    });
}

Var Tape::concat0(std::span<const Var> parts) {
    check_open("concat0");
    if (parts.empty()) throw ContractError("concat0: no parts");
    const Tensor& first = value(parts[0]);
    std::vector<int> shape = first.shape();
    std::vector<int> ids;
    std::vector<int64_t> sizes;
    int64_t total = 0;
    int dim0 = 0;
    bool rg = false;
    for (Var p : parts) {
        const Tensor& v = value(p);
        if (v.rank() != first.rank()) {
            throw DimensionError("concat0: rank mismatch " + first.shape_str() + " vs " +
                                 v.shape_str());
        }
        for (int ax = 1; ax < v.rank(); ++ax) {
            if (v.dim(ax) != first.dim(ax)) {
                throw DimensionError("concat0: trailing shape mismatch " + first.shape_str() +
                                     " vs " + v.shape_str());
            }
        }
        ids.push_back(p.id);
        sizes.push_back(v.numel());
        total += v.numel();
        dim0 += v.dim(0);
        rg = rg || needs_grad(p);
    }
    shape[0] = dim0;
    std::vector<double> data;
    data.reserve(static_cast<size_t>(total));
    for (Var p : parts) {
        const auto& v = value(p).vec();
        data.insert(data.end(), v.begin(), v.end());
    }
    return emit(Tensor(std::move(shape), std::move(data)), rg,
                [ids, sizes](Tape& t, const Tensor& g) {
                    int64_t off = 0;
                    for (size_t i = 0; i < ids.size(); ++i) {
                        if (t.needs_grad(Var{ids[i]})) {
                            const Tensor& v = t.value(Var{ids[i]});
                            Tensor gp(v.shape());
                            std::copy(g.data() + off, g.data() + off + sizes[i], gp.data());
                            t.accumulate(ids[i], gp);
                        }
                        off += sizes[i];
                    }
                });
}

Var Tape::concat1(std::span<const Var> parts) {
    check_open("concat1");
    if (parts.empty()) throw ContractError("concat1: no parts");
    const Tensor& first = value(parts[0]);
    if (first.rank() < 2) {
        throw DimensionError("concat1: expected rank >= 2, got " + first.shape_str());
    }
    int64_t inner = 1;
    for (int ax = 2; ax < first.rank(); ++ax) inner *= first.dim(ax);
    const int outer = first.dim(0);
    std::vector<int> ids;
    std::vector<int64_t> block; // per-part elements contributed to one outer slice
    int dim1 = 0;
    bool rg = false;
    for (Var p : parts) {
        const Tensor& v = value(p);
        bool ok = v.rank() == first.rank() && v.dim(0) == outer;
        for (int ax = 2; ok && ax < v.rank(); ++ax) ok = v.dim(ax) == first.dim(ax);
        if (!ok) {
            throw DimensionError("concat1: shape mismatch " + first.shape_str() + " vs " +
                                 v.shape_str());
        }
        ids.push_back(p.id);
        block.push_back(static_cast<int64_t>(v.dim(1)) * inner);
        dim1 += v.dim(1);
        rg = rg || needs_grad(p);
    }
    std::vector<int> shape = first.shape();
    shape[1] = dim1;
    Tensor out(shape);
    double* od = out.data();
    const int64_t out_stride = static_cast<int64_t>(dim1) * inner;
    int64_t part_off = 0;
    for (size_t i = 0; i < ids.size(); ++i) {
        const double* src = value(Var{ids[i]}).data();
        for (int o = 0; o < outer; ++o) {
            std::copy(src + o * block[i], src + (o + 1) * block[i],
                      od + o * out_stride + part_off);
        }
        part_off += block[i];
    }
    return emit(std::move(out), rg, [ids, block, outer, out_stride](Tape& t, const Tensor& g) {
        int64_t off = 0;
        for (size_t i = 0; i < ids.size(); ++i) {
            if (t.needs_grad(Var{ids[i]})) {
                const Tensor& v = t.value(Var{ids[i]});
                Tensor gp(v.shape());
                for (int o = 0; o < outer; ++o) {
                    std::copy(g.data() + o * out_stride + off,
                              g.data() + o * out_stride + off + block[i],
                              gp.data() + o * block[i]);
                }
                t.accumulate(ids[i], gp);
            }
            off += block[i];
        }
    });
}

namespace {

Tensor swap_first_two(const Tensor& a) {
    const int d0 = a.dim(0), d1 = a.dim(1);
    int64_t inner = 1;
    for (int ax = 2; ax < a.rank(); ++ax) inner *= a.dim(ax);
    std::vector<int> shape = a.shape();
    std::swap(shape[0], shape[1]);
    Tensor out(shape);
    for (int i = 0; i < d0; ++i) {
        for (int j = 0; j < d1; ++j) {
            const double* src = a.data() + (static_cast<int64_t>(i) * d1 + j) * inner;
            double* dst = out.data() + (static_cast<int64_t>(j) * d0 + i) * inner;
            std::copy(src, src + inner, dst);
        }
    }
    return out;
}

} // namespace

Var Tape::swap01(Var a) {
    check_open("swap01");
    const Tensor& va = value(a);
    if (va.rank() < 2) {
        throw DimensionError("swap01: expected rank >= 2, got " + va.shape_str());
    }
    int ia = a.id;
    return emit(swap_first_two(va), needs_grad(a), [ia](Tape& t, const Tensor& g) {
        if (!t.needs_grad(Var{ia})) return;
        t.accumulate(ia, swap_first_two(g));
    });
}

// ---------------------------------------------------------------------------
// reductions / linear maps

Var Tape::sum(Var a) {
    check_open("sum");
    const Tensor& va = value(a);
    double s = std::accumulate(va.vec().begin(), va.vec().end(), 0.0);
    int ia = a.id;
    return emit(Tensor::scalar(s), needs_grad(a), [ia](Tape& t, const Tensor& g) {
        if (!t.needs_grad(Var{ia})) return;
        t.accumulate(ia, Tensor::full(t.value(Var{ia}).shape(), g[0]));
    });
}

namespace {

// c[i][j] = sum of sorted {a[i][p] * b[p][j]}: the result is invariant to
// any simultaneous permutation of the contraction axis.
void matmul_sorted(const double* a, const double* b, double* c, int m, int k, int n) {
    std::vector<double> addends(static_cast<size_t>(k));
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            for (int p = 0; p < k; ++p) {
                addends[static_cast<size_t>(p)] =
                    a[static_cast<size_t>(i) * k + p] * b[static_cast<size_t>(p) * n + j];
            }
            std::sort(addends.begin(), addends.end());
            double acc = 0.0;
            for (double v : addends) acc += v;
            c[static_cast<size_t>(i) * n + j] = acc;
        }
    }
}

} // namespace

Var Tape::matmul(Var a, Var b) {
    check_open("matmul");
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (va.rank() != 2 || vb.rank() != 2 || va.dim(1) != vb.dim(0)) {
        throw DimensionError("matmul: incompatible shapes " + va.shape_str() + " vs " +
                             vb.shape_str());
    }
    const int m = va.dim(0), k = va.dim(1), n = vb.dim(1);
    Tensor out({m, n});
    kernels::matmul(va.data(), vb.data(), out.data(), m, k, n);
    bool rg = needs_grad(a) || needs_grad(b);
    int ia = a.id, ib = b.id;
    return emit(std::move(out), rg, [ia, ib, m, k, n](Tape& t, const Tensor& g) {
        if (t.needs_grad(Var{ia})) {
            Tensor bt = transpose2d(t.value(Var{ib}));
            Tensor ga({m, k});
            kernels::matmul(g.data(), bt.data(), ga.data(), m, n, k);
            t.accumulate(ia, ga);
        }
        if (t.needs_grad(Var{ib})) {
            Tensor at = transpose2d(t.value(Var{ia}));
            Tensor gb({k, n});
            kernels::matmul(at.data(), g.data(), gb.data(), k, m, n);
            t.accumulate(ib, gb);
        }
    });
}

Var Tape::matmul_stable(Var a, Var b) {
    check_open("matmul_stable");
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (va.rank() != 2 || vb.rank() != 2 || va.dim(1) != vb.dim(0)) {
        throw DimensionError("matmul_stable: incompatible shapes " + va.shape_str() + " vs " +
                             vb.shape_str());
    }
    const int m = va.dim(0), k = va.dim(1), n = vb.dim(1);
    Tensor out({m, n});
    matmul_sorted(va.data(), vb.data(), out.data(), m, k, n);
    bool rg = needs_grad(a) || needs_grad(b);
    int ia = a.id, ib = b.id;
    return emit(std::move(out), rg, [ia, ib, m, k, n](Tape& t, const Tensor& g) {
        if (t.needs_grad(Var{ia})) {
            Tensor bt = transpose2d(t.value(Var{ib}));
            Tensor ga({m, k});
            kernels::matmul(g.data(), bt.data(), ga.data(), m, n, k);
            t.accumulate(ia, ga);
        }
        if (t.needs_grad(Var{ib})) {
            Tensor at = transpose2d(t.value(Var{ia}));
            Tensor gb({k, n});
            kernels::matmul(at.data(), g.data(), gb.data(), k, m, n);
            t.accumulate(ib, gb);
        }
    });
}

Var Tape::softmax_rows(Var a) {
    check_open("softmax_rows");
    const Tensor& va = value(a);
    if (va.rank() != 2) {
        throw DimensionError("softmax_rows: expected rank-2, got " + va.shape_str());
    }
    const int m = va.dim(0), n = va.dim(1);
    Tensor out({m, n});
    std::vector<double> exps(static_cast<size_t>(n));
    for (int i = 0; i < m; ++i) {
        double mx = va.at(i, 0);
        for (int j = 1; j < n; ++j) mx = std::max(mx, va.at(i, j));
        for (int j = 0; j < n; ++j) {
            double e = std::exp(va.at(i, j) - mx);
            out.at(i, j) = e;
            exps[static_cast<size_t>(j)] = e;
        }
        // Sorted accumulation keeps the denominator invariant under column
        // permutations (and a touch more accurate).
        std::sort(exps.begin(), exps.end());
        double denom = 0.0;
        for (double e : exps) denom += e;
        for (int j = 0; j < n; ++j) out.at(i, j) /= denom;
    }
    int ia = a.id;
    int self = static_cast<int>(nodes_.size());
    return emit(std::move(out), needs_grad(a), [ia, self, m, n](Tape& t, const Tensor& g) {
        if (!t.needs_grad(Var{ia})) return;
        const Tensor& y = t.value(Var{self});
        Tensor ga({m, n});
        for (int i = 0; i < m; ++i) {
            double dot = 0.0;
            for (int j = 0; j < n; ++j) dot += g.at(i, j) * y.at(i, j);
            for (int j = 0; j < n; ++j) ga.at(i, j) = y.at(i, j) * (g.at(i, j) - dot);
        }
        t.accumulate(ia, ga);
    });
}

Var Tape::conv2d(Var x, Var w, int stride, int pad) {
    check_open("conv2d");
    const Tensor& vx = value(x);
    const Tensor& vw = value(w);
    if (vx.rank() != 3 || vw.rank() != 4 || vw.dim(1) != vx.dim(0)) {
        throw DimensionError("conv2d: incompatible shapes " + vx.shape_str() + " vs " +
                             vw.shape_str());
    }
    kernels::Conv2dSpec s{vx.dim(0), vx.dim(1), vx.dim(2),
                          vw.dim(0), vw.dim(2), vw.dim(3), stride, pad};
    s.validate();
    Tensor out({s.cout, s.out_h(), s.out_w()});
    kernels::conv2d(vx.data(), vw.data(), out.data(), s);
    bool rg = needs_grad(x) || needs_grad(w);
    int ix = x.id, iw = w.id;
    return emit(std::move(out), rg, [ix, iw, s](Tape& t, const Tensor& g) {
        if (t.needs_grad(Var{ix})) {
            Tensor gx({s.cin, s.h, s.w});
            kernels::conv2d_grad_x(g.data(), t.value(Var{iw}).data(), gx.data(), s);
            t.accumulate(ix, gx);
        }
        if (t.needs_grad(Var{iw})) {
            Tensor gw({s.cout, s.cin, s.kh, s.kw});
            kernels::conv2d_grad_w(t.value(Var{ix}).data(), g.data(), gw.data(), s);
            t.accumulate(iw, gw);
        }
    });
}

Var Tape::conv3d(Var x, Var w, int stride, int pad) {
    check_open("conv3d");
    const Tensor& vx = value(x);
    const Tensor& vw = value(w);
    if (vx.rank() != 4 || vw.rank() != 5 || vw.dim(1) != vx.dim(0)) {
        throw DimensionError("conv3d: incompatible shapes " + vx.shape_str() + " vs " +
                             vw.shape_str());
    }
    kernels::Conv3dSpec s{vx.dim(0), vx.dim(1), vx.dim(2), vx.dim(3),
                          vw.dim(0), vw.dim(2), vw.dim(3), vw.dim(4), stride, pad};
    s.validate();
    Tensor out({s.cout, s.out_t(), s.out_h(), s.out_w()});
    kernels::conv3d(vx.data(), vw.data(), out.data(), s);
    bool rg = needs_grad(x) || needs_grad(w);
    int ix = x.id, iw = w.id;
    return emit(std::move(out), rg, [ix, iw, s](Tape& t, const Tensor& g) {
        if (t.needs_grad(Var{ix})) {
            Tensor gx({s.cin, s.t, s.h, s.w});
            kernels::conv3d_grad_x(g.data(), t.value(Var{iw}).data(), gx.data(), s);
            t.accumulate(ix, gx);
        }
        if (t.needs_grad(Var{iw})) {
            Tensor gw({s.cout, s.cin, s.kt, s.kh, s.kw});
            kernels::conv3d_grad_w(t.value(Var{ix}).data(), g.data(), gw.data(), s);
            t.accumulate(iw, gw);
        }
    });
}

Var Tape::add_channel_bias(Var x, Var b) {
    check_open("add_channel_bias");
    const Tensor& vx = value(x);
    const Tensor& vb = value(b);
    if (vb.rank() != 1 || vb.dim(0) != vx.dim(0)) {
        throw DimensionError("add_channel_bias: bias " + vb.shape_str() +
                             " does not match channels of " + vx.shape_str());
    }
    const int c = vx.dim(0);
    const int64_t inner = vx.numel() / c;
    Tensor out(vx.shape());
    for (int ch = 0; ch < c; ++ch) {
        const double bias = vb[ch];
        for (int64_t i = 0; i < inner; ++i) {
            out[ch * inner + i] = vx[ch * inner + i] + bias;
        }
    }
    bool rg = needs_grad(x) || needs_grad(b);
    int ix = x.id, ib = b.id;
    return emit(std::move(out), rg, [ix, ib, c, inner](Tape& t, const Tensor& g) {
        if (t.needs_grad(Var{ix})) t.accumulate(ix, g);
        if (t.needs_grad(Var{ib})) {
            Tensor gb({c});
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int64_t i = 0; i < inner; ++i) acc += g[ch * inner + i];
                gb[ch] = acc;
            }
            t.accumulate(ib, gb);
        }
    });
}

Var Tape::global_avg_pool(Var x) {
    check_open("global_avg_pool");
    const Tensor& vx = value(x);
    if (vx.rank() < 2) {
        throw DimensionError("global_avg_pool: expected rank >= 2, got " + vx.shape_str());
    }
    const int c = vx.dim(0);
    const int64_t inner = vx.numel() / c;
    Tensor out({c});
    for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int64_t i = 0; i < inner; ++i) acc += vx[ch * inner + i];
        out[ch] = acc / static_cast<double>(inner);
    }
    int ix = x.id;
    return emit(std::move(out), needs_grad(x), [ix, c, inner](Tape& t, const Tensor& g) {
        if (!t.needs_grad(Var{ix})) return;
        Tensor gx(t.value(Var{ix}).shape());
        const double inv = 1.0 / static_cast<double>(inner);
        for (int ch = 0; ch < c; ++ch) {
            for (int64_t i = 0; i < inner; ++i) gx[ch * inner + i] = g[ch] * inv;
        }
        t.accumulate(ix, gx);
    });
}

Var Tape::cross_entropy(Var logits, int label) {
    check_open("cross_entropy");
    const Tensor& v = value(logits);
    if (v.rank() != 1) {
        throw DimensionError("cross_entropy: expected rank-1 logits, got " + v.shape_str());
    }
    const int n = v.dim(0);
    if (label < 0 || label >= n) {
        throw ContractError("cross_entropy: label out of range");
    }
    double mx = v[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, v[j]);
    double denom = 0.0;
    for (int j = 0; j < n; ++j) denom += std::exp(v[j] - mx);
    double loss = std::log(denom) + mx - v[label];
    int il = logits.id;
    return emit(Tensor::scalar(loss), needs_grad(logits),
                [il, label, n, mx, denom](Tape& t, const Tensor& g) {
                    if (!t.needs_grad(Var{il})) return;
                    const Tensor& v2 = t.value(Var{il});
                    Tensor gl({n});
                    for (int j = 0; j < n; ++j) {
                        double p = std::exp(v2[j] - mx) / denom;
                        gl[j] = g[0] * (p - (j == label ? 1.0 : 0.0));
                    }
                    t.accumulate(il, gl);
                });
}

} // namespace point3d
