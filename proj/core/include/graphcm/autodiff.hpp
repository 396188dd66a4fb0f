// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "graphcm/array.hpp"
#include "graphcm/rng.hpp"

namespace graphcm::ad {

inline constexpr double kBceEps = 1e-7;

template <class Real>
class Var;

template <class Real>
struct Node {
    Array<Real> value;
    Array<Real> grad;
    bool requires_grad = false;
    std::vector<Var<Real>> parents;
    std::function<void(Node<Real>&)> backward_fn;
};

// Handle to a node of the implicit tape.  Copying a Var shares the node.
template <class Real>
class Var {
  public:
    Var() = default;

    static Var leaf(Array<Real> value, bool requires_grad) {
        Var v;
        v.n_ = std::make_shared<Node<Real>>();
        v.n_->value = std::move(value);
        v.n_->requires_grad = requires_grad;
        return v;
    }

    static Var constant(Array<Real> value) { return leaf(std::move(value), false); }

    bool defined() const { return n_ != nullptr; }

    const Array<Real>& value() const { return node().value; }
    Array<Real>& value() { return node().value; }

    const Array<Real>& grad() const { return node().grad; }
    Array<Real>& grad() { return node().grad; }

    bool requires_grad() const { return node().requires_grad; }
    const Shape& shape() const { return node().value.shape(); }
    std::int64_t numel() const { return node().value.numel(); }

    Node<Real>& node() const {
        if (!n_) { throw std::logic_error("Var: use of undefined variable"); }
        return *n_;
    }
    Node<Real>* raw() const { return n_.get(); }

    static Var from_node(std::shared_ptr<Node<Real>> n) {
        Var v;
        v.n_ = std::move(n);
        return v;
    }

  private:
    std::shared_ptr<Node<Real>> n_;
};

namespace detail {

template <class Real>
void ensure_grad(Node<Real>& n) {
    if (n.grad.numel() != n.value.numel()) { n.grad = Array<Real>(n.value.shape()); }
}

template <class Real>
Var<Real> make_op(Array<Real> value, std::vector<Var<Real>> parents,
                  std::function<void(Node<Real>&)> backward_fn) {
    bool req = false;
    for (const auto& p : parents) { req = req || p.requires_grad(); }
    auto n = std::make_shared<Node<Real>>();
    n->value = std::move(value);
    n->requires_grad = req;
    if (req) {
        n->parents = std::move(parents);
        n->backward_fn = std::move(backward_fn);
    }
    return Var<Real>::from_node(std::move(n));
}

// --- broadcast of b into a's shape -----------------------------------------

enum class BcKind { Same, Scalar, LastAxisOne, Suffix, General };

struct BcPlan {
    BcKind kind = BcKind::Same;
    std::int64_t outer = 0;
    std::int64_t inner = 0;
    std::vector<std::int64_t> bstride;  // per a-axis stride into b (General)
    Shape ashape;
};

inline BcPlan make_broadcast(const Shape& a, const Shape& b, const char* op) {
    BcPlan plan;
    plan.ashape = a;
    if (a == b) {
        plan.kind = BcKind::Same;
        return plan;
    }
    if (shape_numel(b) == 1) {
        plan.kind = BcKind::Scalar;
        return plan;
    }
    if (b.size() > a.size()) {
        throw std::invalid_argument(std::string(op) + ": cannot broadcast " + shape_str(b) +
                                    " into " + shape_str(a));
    }
    // b shape equal except a trailing 1
    if (b.size() == a.size()) {
        bool last_one = b.back() == 1;
        for (std::size_t i = 0; i + 1 < a.size(); ++i) { last_one = last_one && a[i] == b[i]; }
        if (last_one) {
            plan.kind = BcKind::LastAxisOne;
            plan.inner = a.back();
            plan.outer = shape_numel(a) / plan.inner;
            return plan;
        }
    }
    // b equals a trailing suffix of a
    {
        bool suffix = true;
        const std::size_t off = a.size() - b.size();
        for (std::size_t i = 0; i < b.size(); ++i) { suffix = suffix && a[off + i] == b[i]; }
        if (suffix) {
            plan.kind = BcKind::Suffix;
            plan.inner = shape_numel(b);
            plan.outer = shape_numel(a) / plan.inner;
            return plan;
        }
    }
    // general: right-aligned, each b dim equals a dim or 1
    {
        plan.bstride.assign(a.size(), 0);
        std::int64_t stride = 1;
        const std::size_t off = a.size() - b.size();
        std::vector<std::int64_t> raw(b.size(), 0);
        for (std::size_t i = b.size(); i-- > 0;) {
            raw[i] = stride;
            stride *= b[i];
        }
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (i < off) {
                plan.bstride[i] = 0;
            } else {
                const std::int64_t bd = b[i - off];
                if (bd == a[i]) {
                    plan.bstride[i] = raw[i - off];
                } else if (bd == 1) {
                    plan.bstride[i] = 0;
                } else {
                    throw std::invalid_argument(std::string(op) + ": cannot broadcast " +
                                                shape_str(b) + " into " + shape_str(a));
                }
            }
        }
        plan.kind = BcKind::General;
        return plan;
    }
}

// Calls fn(ai, bi) for every linear index ai of a, with bi the broadcast
// source index in b.
template <class Fn>
void bc_walk(const BcPlan& plan, Fn&& fn) {
    const std::int64_t n = shape_numel(plan.ashape);
    switch (plan.kind) {
        case BcKind::Same:
            for (std::int64_t i = 0; i < n; ++i) { fn(i, i); }
            break;
        case BcKind::Scalar:
            for (std::int64_t i = 0; i < n; ++i) { fn(i, 0); }
            break;
        case BcKind::LastAxisOne:
            for (std::int64_t o = 0; o < plan.outer; ++o) {
                const std::int64_t base = o * plan.inner;
                for (std::int64_t j = 0; j < plan.inner; ++j) { fn(base + j, o); }
            }
            break;
        case BcKind::Suffix:
            for (std::int64_t o = 0; o < plan.outer; ++o) {
                const std::int64_t base = o * plan.inner;
                for (std::int64_t j = 0; j < plan.inner; ++j) { fn(base + j, j); }
            }
            break;
        case BcKind::General: {
            const std::size_t rank = plan.ashape.size();
            std::vector<std::int64_t> idx(rank, 0);
            std::int64_t bi = 0;
            for (std::int64_t ai = 0; ai < n; ++ai) {
                fn(ai, bi);
                for (std::size_t d = rank; d-- > 0;) {
                    idx[d] += 1;
                    bi += plan.bstride[d];
                    if (idx[d] < plan.ashape[d]) { break; }
                    bi -= plan.bstride[d] * plan.ashape[d];
                    idx[d] = 0;
                }
            }
            break;
        }
    }
}

// --- matmul kernels (accumulating) -----------------------------------------

template <class Real>
void mm_nn(const Real* a, const Real* b, Real* c, std::int64_t m, std::int64_t k, std::int64_t n) {
    for (std::int64_t i = 0; i < m; ++i) {
        Real* crow = c + i * n;
        const Real* arow = a + i * k;
        for (std::int64_t p = 0; p < k; ++p) {
            const Real av = arow[p];
            const Real* brow = b + p * n;
            for (std::int64_t j = 0; j < n; ++j) { crow[j] += av * brow[j]; }
        }
    }
}

// z[m,k] += x[m,n] * y[k,n]^T
template <class Real>
void mm_nt(const Real* x, const Real* y, Real* z, std::int64_t m, std::int64_t n, std::int64_t k) {
    for (std::int64_t i = 0; i < m; ++i) {
        const Real* xrow = x + i * n;
        Real* zrow = z + i * k;
        for (std::int64_t p = 0; p < k; ++p) {
            const Real* yrow = y + p * n;
            Real s = 0;
            for (std::int64_t j = 0; j < n; ++j) { s += xrow[j] * yrow[j]; }
            zrow[p] += s;
        }
    }
}

// z[k,n] += x[m,k]^T * y[m,n]
template <class Real>
void mm_tn(const Real* x, const Real* y, Real* z, std::int64_t m, std::int64_t k, std::int64_t n) {
    for (std::int64_t i = 0; i < m; ++i) {
        const Real* xrow = x + i * k;
        const Real* yrow = y + i * n;
        for (std::int64_t p = 0; p < k; ++p) {
            const Real xv = xrow[p];
            Real* zrow = z + p * n;
            for (std::int64_t j = 0; j < n; ++j) { zrow[j] += xv * yrow[j]; }
        }
    }
}

}  // namespace detail

// --- elementwise binary ops (b broadcasts into a) ---------------------------

template <class Real>
Var<Real> add(const Var<Real>& a, const Var<Real>& b) {
    auto plan = detail::make_broadcast(a.shape(), b.shape(), "add");
    Array<Real> out(a.shape());
    const auto& av = a.value();
    const auto& bv = b.value();
    detail::bc_walk(plan, [&](std::int64_t ai, std::int64_t bi) { out[ai] = av[ai] + bv[bi]; });
    return detail::make_op<Real>(
        std::move(out), {a, b}, [a, b, plan](Node<Real>& self) {
            if (a.requires_grad()) {
                detail::ensure_grad(a.node());
                auto& ga = a.node().grad;
                const auto& g = self.grad;
                for (std::int64_t i = 0; i < g.numel(); ++i) { ga[i] += g[i]; }
            }
            if (b.requires_grad()) {
                detail::ensure_grad(b.node());
                auto& gb = b.node().grad;
                const auto& g = self.grad;
                detail::bc_walk(plan, [&](std::int64_t ai, std::int64_t bi) { gb[bi] += g[ai]; });
            }
        });
}

template <class Real>
Var<Real> sub(const Var<Real>& a, const Var<Real>& b) {
    auto plan = detail::make_broadcast(a.shape(), b.shape(), "sub");
    Array<Real> out(a.shape());
    const auto& av = a.value();
    const auto& bv = b.value();
    detail::bc_walk(plan, [&](std::int64_t ai, std::int64_t bi) { out[ai] = av[ai] - bv[bi]; });
    return detail::make_op<Real>(
        std::move(out), {a, b}, [a, b, plan](Node<Real>& self) {
            if (a.requires_grad()) {
                detail::ensure_grad(a.node());
                auto& ga = a.node().grad;
                const auto& g = self.grad;
                for (std::int64_t i = 0; i < g.numel(); ++i) { ga[i] += g[i]; }
            }
            if (b.requires_grad()) {
                detail::ensure_grad(b.node());
                auto& gb = b.node().grad;
                const auto& g = self.grad;
                detail::bc_walk(plan, [&](std::int64_t ai, std::int64_t bi) { gb[bi] -= g[ai]; });
            }
        });
}

template <class Real>
Var<Real> elementwise_mul(const Var<Real>& a, const Var<Real>& b) {
    auto plan = detail::make_broadcast(a.shape(), b.shape(), "elementwise_mul");
    Array<Real> out(a.shape());
    const auto& av = a.value();
    const auto& bv = b.value();
    detail::bc_walk(plan, [&](std::int64_t ai, std::int64_t bi) { out[ai] = av[ai] * bv[bi]; });
    return detail::make_op<Real>(
        std::move(out), {a, b}, [a, b, plan](Node<Real>& self) {
            const auto& g = self.grad;
            const auto& av = a.value();
            const auto& bv = b.value();
            if (a.requires_grad()) {
                detail::ensure_grad(a.node());
                auto& ga = a.node().grad;
                detail::bc_walk(plan,
                                [&](std::int64_t ai, std::int64_t bi) { ga[ai] += g[ai] * bv[bi]; });
            }
            if (b.requires_grad()) {
                detail::ensure_grad(b.node());
                auto& gb = b.node().grad;
                detail::bc_walk(plan,
                                [&](std::int64_t ai, std::int64_t bi) { gb[bi] += g[ai] * av[ai]; });
            }
        });
}

// k*x + m with scalar constants
template <class Real>
Var<Real> affine(const Var<Real>& x, Real k, Real m) {
    Array<Real> out(x.shape());
    const auto& xv = x.value();
    for (std::int64_t i = 0; i < xv.numel(); ++i) { out[i] = k * xv[i] + m; }
    return detail::make_op<Real>(std::move(out), {x}, [x, k](Node<Real>& self) {
        if (!x.requires_grad()) { return; }
        detail::ensure_grad(x.node());
        auto& gx = x.node().grad;
        const auto& g = self.grad;
        for (std::int64_t i = 0; i < g.numel(); ++i) { gx[i] += k * g[i]; }
    });
}

template <class Real>
Var<Real> neg(const Var<Real>& x) {
    return affine(x, Real(-1), Real(0));
}

// --- matmul ------------------------------------------------------------------

template <class Real>
Var<Real> matmul(const Var<Real>& a, const Var<Real>& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0]) {
        throw std::invalid_argument("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                                    shape_str(b.shape()));
    }
    const std::int64_t m = a.shape()[0];
    const std::int64_t k = a.shape()[1];
    const std::int64_t n = b.shape()[1];
    Array<Real> out({m, n});
    detail::mm_nn(a.value().data(), b.value().data(), out.data(), m, k, n);
    return detail::make_op<Real>(std::move(out), {a, b}, [a, b, m, k, n](Node<Real>& self) {
        const auto& g = self.grad;
        if (a.requires_grad()) {
            detail::ensure_grad(a.node());
            detail::mm_nt(g.data(), b.value().data(), a.node().grad.data(), m, n, k);
        }
        if (b.requires_grad()) {
            detail::ensure_grad(b.node());
            detail::mm_tn(a.value().data(), g.data(), b.node().grad.data(), m, k, n);
        }
    });
}

// --- shape ops ---------------------------------------------------------------

template <class Real>
Var<Real> reshape(const Var<Real>& x, Shape s) {
    Array<Real> out = x.value().reshaped(std::move(s));
    return detail::make_op<Real>(std::move(out), {x}, [x](Node<Real>& self) {
        if (!x.requires_grad()) { return; }
        detail::ensure_grad(x.node());
        auto& gx = x.node().grad;
        const auto& g = self.grad;
        for (std::int64_t i = 0; i < g.numel(); ++i) { gx[i] += g[i]; }
    });
}

// Concatenate along the last axis; all leading dims must match.
template <class Real>
Var<Real> concat(const std::vector<Var<Real>>& xs) {
    if (xs.empty()) { throw std::invalid_argument("concat: no inputs"); }
    const Shape& s0 = xs[0].shape();
    std::int64_t last = 0;
    for (const auto& x : xs) {
        const Shape& s = x.shape();
        if (s.size() != s0.size()) {
            throw std::invalid_argument("concat: rank mismatch " + shape_str(s0) + " vs " +
                                        shape_str(s));
        }
        for (std::size_t i = 0; i + 1 < s.size(); ++i) {
            if (s[i] != s0[i]) {
                throw std::invalid_argument("concat: leading dims differ " + shape_str(s0) +
                                            " vs " + shape_str(s));
            }
        }
        last += s.back();
    }
    Shape os = s0;
    os.back() = last;
    const std::int64_t rows = shape_numel(os) / last;
    Array<Real> out(os);
    std::vector<std::int64_t> widths;
    widths.reserve(xs.size());
    for (const auto& x : xs) { widths.push_back(x.shape().back()); }
    std::int64_t off = 0;
    for (std::size_t p = 0; p < xs.size(); ++p) {
        const auto& v = xs[p].value();
        const std::int64_t w = widths[p];
        for (std::int64_t r = 0; r < rows; ++r) {
            for (std::int64_t j = 0; j < w; ++j) { out[r * last + off + j] = v[r * w + j]; }
        }
        off += w;
    }
    return detail::make_op<Real>(std::move(out), xs, [xs, widths, rows, last](Node<Real>& self) {
        const auto& g = self.grad;
        std::int64_t off = 0;
        for (std::size_t p = 0; p < xs.size(); ++p) {
            const std::int64_t w = widths[p];
            if (xs[p].requires_grad()) {
                detail::ensure_grad(xs[p].node());
                auto& gx = xs[p].node().grad;
                for (std::int64_t r = 0; r < rows; ++r) {
                    for (std::int64_t j = 0; j < w; ++j) { gx[r * w + j] += g[r * last + off + j]; }
                }
            }
            off += w;
        }
    });
}

// Stack T arrays of shape [B,H] into [B,T,H].
template <class Real>
Var<Real> stack_steps(const std::vector<Var<Real>>& xs) {
    if (xs.empty()) { throw std::invalid_argument("stack_steps: no inputs"); }
    const Shape& s0 = xs[0].shape();
    if (s0.size() != 2) {
        throw std::invalid_argument("stack_steps: expected rank-2 inputs, got " + shape_str(s0));
    }
    for (const auto& x : xs) {
        if (x.shape() != s0) {
            throw std::invalid_argument("stack_steps: shape mismatch " + shape_str(s0) + " vs " +
                                        shape_str(x.shape()));
        }
    }
    const std::int64_t b = s0[0];
    const std::int64_t t = static_cast<std::int64_t>(xs.size());
    const std::int64_t h = s0[1];
    Array<Real> out({b, t, h});
    for (std::int64_t p = 0; p < t; ++p) {
        const auto& v = xs[static_cast<std::size_t>(p)].value();
        for (std::int64_t i = 0; i < b; ++i) {
            for (std::int64_t j = 0; j < h; ++j) { out.at3(i, p, j) = v.at2(i, j); }
        }
    }
    return detail::make_op<Real>(std::move(out), xs, [xs, b, t, h](Node<Real>& self) {
        const auto& g = self.grad;
        for (std::int64_t p = 0; p < t; ++p) {
            const auto& x = xs[static_cast<std::size_t>(p)];
            if (!x.requires_grad()) { continue; }
            detail::ensure_grad(x.node());
            auto& gx = x.node().grad;
            for (std::int64_t i = 0; i < b; ++i) {
                for (std::int64_t j = 0; j < h; ++j) {
                    gx.at2(i, j) += g[(i * t + p) * h + j];
                }
            }
        }
    });
}

// y[b,:] = x[b, idx[b], :]
template <class Real>
Var<Real> select_step(const Var<Real>& x, const IndexArray& idx) {
    if (x.shape().size() != 3) {
        throw std::invalid_argument("select_step: expected rank-3 input, got " +
                                    shape_str(x.shape()));
    }
    const std::int64_t b = x.shape()[0];
    const std::int64_t t = x.shape()[1];
    const std::int64_t h = x.shape()[2];
    if (idx.numel() != b) {
        throw std::invalid_argument("select_step: index count " + std::to_string(idx.numel()) +
                                    " does not match batch " + std::to_string(b));
    }
    Array<Real> out({b, h});
    const auto& v = x.value();
    for (std::int64_t i = 0; i < b; ++i) {
        const std::int64_t p = idx[i];
        if (p < 0 || p >= t) {
            throw std::out_of_range("select_step: index " + std::to_string(p) + " out of [0," +
                                    std::to_string(t) + ")");
        }
        for (std::int64_t j = 0; j < h; ++j) { out.at2(i, j) = v[(i * t + p) * h + j]; }
    }
    return detail::make_op<Real>(std::move(out), {x}, [x, idx, b, t, h](Node<Real>& self) {
        if (!x.requires_grad()) { return; }
        detail::ensure_grad(x.node());
        auto& gx = x.node().grad;
        const auto& g = self.grad;
        for (std::int64_t i = 0; i < b; ++i) {
            const std::int64_t p = idx[i];
            for (std::int64_t j = 0; j < h; ++j) { gx[(i * t + p) * h + j] += g.at2(i, j); }
        }
    });
}

// Gather rows of a [V,D] table; output shape = idx.shape + [D].
template <class Real>
Var<Real> embedding_lookup(const Var<Real>& table, const IndexArray& idx) {
    if (table.shape().size() != 2) {
        throw std::invalid_argument("embedding_lookup: table must be rank-2, got " +
                                    shape_str(table.shape()));
    }
    const std::int64_t v = table.shape()[0];
    const std::int64_t d = table.shape()[1];
    Shape os = idx.shape();
    os.push_back(d);
    Array<Real> out(os);
    const auto& tv = table.value();
    for (std::int64_t i = 0; i < idx.numel(); ++i) {
        const std::int64_t r = idx[i];
        if (r < 0 || r >= v) {
            throw std::out_of_range("embedding_lookup: index " + std::to_string(r) +
                                    " out of [0," + std::to_string(v) + ")");
        }
        for (std::int64_t j = 0; j < d; ++j) { out[i * d + j] = tv[r * d + j]; }
    }
    return detail::make_op<Real>(std::move(out), {table}, [table, idx, d](Node<Real>& self) {
        if (!table.requires_grad()) { return; }
        detail::ensure_grad(table.node());
        auto& gt = table.node().grad;
        const auto& g = self.grad;
        for (std::int64_t i = 0; i < idx.numel(); ++i) {
            const std::int64_t r = idx[i];
            for (std::int64_t j = 0; j < d; ++j) { gt[r * d + j] += g[i * d + j]; }
        }
    });
}

// --- reductions --------------------------------------------------------------

template <class Real>
Var<Real> sum_axis(const Var<Real>& x, std::int64_t axis) {
    const Shape& s = x.shape();
    if (axis < 0 || axis >= static_cast<std::int64_t>(s.size())) {
        throw std::invalid_argument("sum_axis: axis " + std::to_string(axis) +
                                    " out of range for " + shape_str(s));
    }
    std::int64_t outer = 1, mid = s[static_cast<std::size_t>(axis)], inner = 1;
    for (std::int64_t i = 0; i < axis; ++i) { outer *= s[static_cast<std::size_t>(i)]; }
    for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) { inner *= s[i]; }
    Shape os;
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(s.size()); ++i) {
        if (i != axis) { os.push_back(s[static_cast<std::size_t>(i)]); }
    }
    if (os.empty()) { os.push_back(1); }
    Array<Real> out(os);
    const auto& xv = x.value();
    for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t m = 0; m < mid; ++m) {
            const std::int64_t base = (o * mid + m) * inner;
            for (std::int64_t j = 0; j < inner; ++j) { out[o * inner + j] += xv[base + j]; }
        }
    }
    return detail::make_op<Real>(std::move(out), {x}, [x, outer, mid, inner](Node<Real>& self) {
        if (!x.requires_grad()) { return; }
        detail::ensure_grad(x.node());
        auto& gx = x.node().grad;
        const auto& g = self.grad;
        for (std::int64_t o = 0; o < outer; ++o) {
            for (std::int64_t m = 0; m < mid; ++m) {
                const std::int64_t base = (o * mid + m) * inner;
                for (std::int64_t j = 0; j < inner; ++j) { gx[base + j] += g[o * inner + j]; }
            }
        }
    });
}

template <class Real>
Var<Real> sum_all(const Var<Real>& x) {
    Real s = 0;
    const auto& xv = x.value();
    for (std::int64_t i = 0; i < xv.numel(); ++i) { s += xv[i]; }
    return detail::make_op<Real>(Array<Real>::scalar(s), {x}, [x](Node<Real>& self) {
        if (!x.requires_grad()) { return; }
        detail::ensure_grad(x.node());
        auto& gx = x.node().grad;
        const Real g = self.grad[0];
        for (std::int64_t i = 0; i < gx.numel(); ++i) { gx[i] += g; }
    });
}

template <class Real>
Var<Real> mean(const Var<Real>& x) {
    const std::int64_t n = x.numel();
    return affine(sum_all(x), Real(1) / static_cast<Real>(n), Real(0));
}

// --- elementwise unary ops ---------------------------------------------------

template <class Real>
Var<Real> sigmoid(const Var<Real>& x) {
    Array<Real> out(x.shape());
    const auto& xv = x.value();
    for (std::int64_t i = 0; i < xv.numel(); ++i) {
        const Real v = xv[i];
        if (v >= 0) {
            out[i] = Real(1) / (Real(1) + std::exp(-v));
        } else {
            const Real e = std::exp(v);
            out[i] = e / (Real(1) + e);
        }
    }
    auto saved = out;
    return detail::make_op<Real>(std::move(out), {x}, [x, saved](Node<Real>& self) {
        if (!x.requires_grad()) { return; }
        detail::ensure_grad(x.node());
        auto& gx = x.node().grad;
        const auto& g = self.grad;
        for (std::int64_t i = 0; i < g.numel(); ++i) {
            const Real y = saved[i];
            gx[i] += g[i] * y * (Real(1) - y);
        }
    });
}

template <class Real>
Var<Real> tanh_op(const Var<Real>& x) {
    Array<Real> out(x.shape());
    const auto& xv = x.value();
    for (std::int64_t i = 0; i < xv.numel(); ++i) { out[i] = std::tanh(xv[i]); }
    auto saved = out;
    return detail::make_op<Real>(std::move(out), {x}, [x, saved](Node<Real>& self) {
        if (!x.requires_grad()) { return; }
        detail::ensure_grad(x.node());
        auto& gx = x.node().grad;
        const auto& g = self.grad;
        for (std::int64_t i = 0; i < g.numel(); ++i) {
            const Real y = saved[i];
            gx[i] += g[i] * (Real(1) - y * y);
        }
    });
}

template <class Real>
Var<Real> exp_op(const Var<Real>& x) {
    Array<Real> out(x.shape());
    const auto& xv = x.value();
    for (std::int64_t i = 0; i < xv.numel(); ++i) { out[i] = std::exp(xv[i]); }
    auto saved = out;
    return detail::make_op<Real>(std::move(out), {x}, [x, saved](Node<Real>& self) {
        if (!x.requires_grad()) { return; }
        detail::ensure_grad(x.node());
        auto& gx = x.node().grad;
        const auto& g = self.grad;
        for (std::int64_t i = 0; i < g.numel(); ++i) { gx[i] += g[i] * saved[i]; }
    });
}

template <class Real>
Var<Real> log_op(const Var<Real>& x) {
    Array<Real> out(x.shape());
    const auto& xv = x.value();
    for (std::int64_t i = 0; i < xv.numel(); ++i) { out[i] = std::log(xv[i]); }
    return detail::make_op<Real>(std::move(out), {x}, [x](Node<Real>& self) {
        if (!x.requires_grad()) { return; }
        detail::ensure_grad(x.node());
        auto& gx = x.node().grad;
        const auto& g = self.grad;
        const auto& xv = x.value();
        for (std::int64_t i = 0; i < g.numel(); ++i) { gx[i] += g[i] / xv[i]; }
    });
}

template <class Real>
Var<Real> leaky_relu(const Var<Real>& x, Real slope) {
    Array<Real> out(x.shape());
    const auto& xv = x.value();
    for (std::int64_t i = 0; i < xv.numel(); ++i) {
        const Real v = xv[i];
        out[i] = v >= 0 ? v : slope * v;
    }
    return detail::make_op<Real>(std::move(out), {x}, [x, slope](Node<Real>& self) {
        if (!x.requires_grad()) { return; }
        detail::ensure_grad(x.node());
        auto& gx = x.node().grad;
        const auto& g = self.grad;
        const auto& xv = x.value();
        for (std::int64_t i = 0; i < g.numel(); ++i) {
            gx[i] += g[i] * (xv[i] >= 0 ? Real(1) : slope);
        }
    });
}

// Pass-through gradient inside [lo,hi], zero outside.
template <class Real>
Var<Real> clamp(const Var<Real>& x, Real lo, Real hi) {
    if (!(lo < hi)) { throw std::invalid_argument("clamp: lo must be < hi"); }
    Array<Real> out(x.shape());
    const auto& xv = x.value();
    for (std::int64_t i = 0; i < xv.numel(); ++i) { out[i] = std::min(hi, std::max(lo, xv[i])); }
    return detail::make_op<Real>(std::move(out), {x}, [x, lo, hi](Node<Real>& self) {
        if (!x.requires_grad()) { return; }
        detail::ensure_grad(x.node());
        auto& gx = x.node().grad;
        const auto& g = self.grad;
        const auto& xv = x.value();
        for (std::int64_t i = 0; i < g.numel(); ++i) {
            if (xv[i] >= lo && xv[i] <= hi) { gx[i] += g[i]; }
        }
    });
}

// --- softmax over the last axis ---------------------------------------------

template <class Real>
Var<Real> softmax(const Var<Real>& x) {
    const Shape& s = x.shape();
    const std::int64_t l = s.back();
    const std::int64_t rows = shape_numel(s) / l;
    Array<Real> out(s);
    const auto& xv = x.value();
    for (std::int64_t r = 0; r < rows; ++r) {
        const std::int64_t base = r * l;
        Real mx = xv[base];
        for (std::int64_t j = 1; j < l; ++j) { mx = std::max(mx, xv[base + j]); }
        Real z = 0;
        for (std::int64_t j = 0; j < l; ++j) {
            const Real e = std::exp(xv[base + j] - mx);
            out[base + j] = e;
            z += e;
        }
        for (std::int64_t j = 0; j < l; ++j) { out[base + j] /= z; }
    }
    auto saved = out;
    return detail::make_op<Real>(std::move(out), {x}, [x, saved, rows, l](Node<Real>& self) {
        if (!x.requires_grad()) { return; }
        detail::ensure_grad(x.node());
        auto& gx = x.node().grad;
        const auto& g = self.grad;
        for (std::int64_t r = 0; r < rows; ++r) {
            const std::int64_t base = r * l;
            Real dot = 0;
            for (std::int64_t j = 0; j < l; ++j) { dot += g[base + j] * saved[base + j]; }
            for (std::int64_t j = 0; j < l; ++j) {
                gx[base + j] += saved[base + j] * (g[base + j] - dot);
            }
        }
    });
}

// --- dropout -----------------------------------------------------------------

// Inverted dropout.  Identity (the same variable) when not training or rate==0.
template <class Real>
Var<Real> dropout(const Var<Real>& x, double rate, bool train, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) {
        throw std::invalid_argument("dropout: rate must be in [0,1), got " + std::to_string(rate));
    }
    if (!train || rate == 0.0) { return x; }
    const Real keep_inv = Real(1.0 / (1.0 - rate));
    auto mask = std::make_shared<Array<Real>>(x.shape());
    Array<Real> out(x.shape());
    const auto& xv = x.value();
    for (std::int64_t i = 0; i < xv.numel(); ++i) {
        const Real m = rng.uniform() >= rate ? keep_inv : Real(0);
        (*mask)[i] = m;
        out[i] = xv[i] * m;
    }
    return detail::make_op<Real>(std::move(out), {x}, [x, mask](Node<Real>& self) {
        if (!x.requires_grad()) { return; }
        detail::ensure_grad(x.node());
        auto& gx = x.node().grad;
        const auto& g = self.grad;
        for (std::int64_t i = 0; i < g.numel(); ++i) { gx[i] += g[i] * (*mask)[i]; }
    });
}

// --- pow pair (exponent-weighted product of two probability tensors) --------

// out = e^alpha * a^beta with learnable scalar exponents.  std::pow keeps
// pow(x, 1) == x bit-exact, which the combination layer relies on.
template <class Real>
Var<Real> pow_pair(const Var<Real>& e, const Var<Real>& a, const Var<Real>& alpha,
                   const Var<Real>& beta) {
    if (e.shape() != a.shape()) {
        throw std::invalid_argument("pow_pair: shape mismatch " + shape_str(e.shape()) + " vs " +
                                    shape_str(a.shape()));
    }
    if (alpha.numel() != 1 || beta.numel() != 1) {
        throw std::invalid_argument("pow_pair: exponents must be scalars");
    }
    const Real al = alpha.value()[0];
    const Real be = beta.value()[0];
    Array<Real> out(e.shape());
    const auto& ev = e.value();
    const auto& av = a.value();
    for (std::int64_t i = 0; i < ev.numel(); ++i) {
        out[i] = std::pow(ev[i], al) * std::pow(av[i], be);
    }
    auto saved = std::make_shared<Array<Real>>(out);
    return detail::make_op<Real>(
        std::move(out), {e, a, alpha, beta}, [e, a, alpha, beta, saved, al, be](Node<Real>& self) {
            const auto& g = self.grad;
            const auto& ev = e.value();
            const auto& av = a.value();
            const auto& pv = *saved;
            if (e.requires_grad()) {
                detail::ensure_grad(e.node());
                auto& ge = e.node().grad;
                for (std::int64_t i = 0; i < g.numel(); ++i) {
                    ge[i] += g[i] * al * pv[i] / ev[i];
                }
            }
            if (a.requires_grad()) {
                detail::ensure_grad(a.node());
                auto& ga = a.node().grad;
                for (std::int64_t i = 0; i < g.numel(); ++i) {
                    ga[i] += g[i] * be * pv[i] / av[i];
                }
            }
            if (alpha.requires_grad()) {
                detail::ensure_grad(alpha.node());
                Real s = 0;
                for (std::int64_t i = 0; i < g.numel(); ++i) {
                    s += g[i] * pv[i] * std::log(ev[i]);
                }
                alpha.node().grad[0] += s;
            }
            if (beta.requires_grad()) {
                detail::ensure_grad(beta.node());
                Real s = 0;
                for (std::int64_t i = 0; i < g.numel(); ++i) {
                    s += g[i] * pv[i] * std::log(av[i]);
                }
                beta.node().grad[0] += s;
            }
        });
}

// --- GRU cell ----------------------------------------------------------------

template <class Real>
struct GruParams {
    Var<Real> wz, uz, bz;
    Var<Real> wr, ur, br;
    Var<Real> wh, uh, bh;
};

// Standard GRU: z/r gates, tanh candidate, h' = (1-z) (.) h + z (.) hc.
template <class Real>
Var<Real> gru_cell(const Var<Real>& x, const Var<Real>& h, const GruParams<Real>& p) {
    auto z = sigmoid(add(add(matmul(x, p.wz), matmul(h, p.uz)), p.bz));
    auto r = sigmoid(add(add(matmul(x, p.wr), matmul(h, p.ur)), p.br));
    auto hc = tanh_op(add(add(matmul(x, p.wh), matmul(elementwise_mul(r, h), p.uh)), p.bh));
    return add(h, elementwise_mul(z, sub(hc, h)));
}

// --- binary cross-entropy ----------------------------------------------------

// Per-element BCE terms with the probability clamped to [eps, 1-eps].
template <class Real>
Var<Real> bce_terms(const Var<Real>& pred, const Array<Real>& clicks) {
    if (pred.shape() != clicks.shape()) {
        throw std::invalid_argument("bce_terms: shape mismatch " + shape_str(pred.shape()) +
                                    " vs " + shape_str(clicks.shape()));
    }
    auto pc = clamp(pred, Real(kBceEps), Real(1.0 - kBceEps));
    Array<Real> y = clicks;
    Array<Real> ny(clicks.shape());
    for (std::int64_t i = 0; i < ny.numel(); ++i) { ny[i] = Real(1) - y[i]; }
    auto yv = Var<Real>::constant(std::move(y));
    auto nyv = Var<Real>::constant(std::move(ny));
    auto pos = elementwise_mul(yv, log_op(pc));
    auto neg_ = elementwise_mul(nyv, log_op(affine(pc, Real(-1), Real(1))));
    return neg(add(pos, neg_));
}

template <class Real>
Var<Real> bce_loss(const Var<Real>& pred, const Array<Real>& clicks) {
    return mean(bce_terms(pred, clicks));
}

// --- backward ----------------------------------------------------------------

template <class Real>
void backward(const Var<Real>& root) {
    if (root.numel() != 1) {
        throw std::invalid_argument("backward: root must be scalar, got " +
                                    shape_str(root.shape()));
    }
    if (!root.requires_grad()) { return; }

    // Reverse post-order DFS over nodes that require gradients.
    std::vector<Node<Real>*> order;
    std::unordered_set<Node<Real>*> visited;
    struct Frame {
        Node<Real>* node;
        std::size_t next;
    };
    std::vector<Frame> stack;
    stack.push_back({root.raw(), 0});
    visited.insert(root.raw());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < f.node->parents.size()) {
            Node<Real>* p = f.node->parents[f.next].raw();
            ++f.next;
            if (p->requires_grad && visited.insert(p).second) { stack.push_back({p, 0}); }
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    detail::ensure_grad(*root.raw());
    root.raw()->grad[0] = Real(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<Real>* n = *it;
        if (n->backward_fn) {
            detail::ensure_grad(*n);
            n->backward_fn(*n);
        }
    }
}

}  // namespace graphcm::ad
