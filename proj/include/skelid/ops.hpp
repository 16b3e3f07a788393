#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "skelid/autograd.hpp"
#include "skelid/rng.hpp"
#include "skelid/tensor.hpp"

// Differentiable primitives. Every function records one tape node whose
// closure scatters the output gradient back into the inputs' gradients; all
// of them are covered by the finite-difference suite (gradcheck.hpp).

namespace skelid {

// ----------------------------- elementwise -----------------------------

inline Val add(Tape& t, Val a, Val b) {
    const Tensor& av = t.value(a);
    av.check_same_shape(t.value(b), "add");
    Tensor out = av;
    out.add_(t.value(b));
    return t.push(std::move(out), [a, b](Tape& tp, Val self) {
        tp.grad(a).add_(tp.grad(self));
        tp.grad(b).add_(tp.grad(self));
    });
}

inline Val sub(Tape& t, Val a, Val b) {
    const Tensor& av = t.value(a);
    av.check_same_shape(t.value(b), "sub");
    Tensor out = av;
    out.sub_(t.value(b));
    return t.push(std::move(out), [a, b](Tape& tp, Val self) {
        tp.grad(a).add_(tp.grad(self));
        tp.grad(b).sub_(tp.grad(self));
    });
}

inline Val mul(Tape& t, Val a, Val b) {
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    av.check_same_shape(bv, "mul");
    Tensor out(av.shape());
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = av[i] * bv[i];
    return t.push(std::move(out), [a, b](Tape& tp, Val self) {
        const Tensor& g = tp.grad(self);
        const Tensor& avv = tp.value(a);
        const Tensor& bvv = tp.value(b);
        Tensor& ga = tp.grad(a);
        Tensor& gb = tp.grad(b);
        for (std::int64_t i = 0; i < g.numel(); ++i) {
            ga[i] += g[i] * bvv[i];
            gb[i] += g[i] * avv[i];
        }
    });
}

inline Val scale(Tape& t, Val a, double c) {
    Tensor out = t.value(a);
    out.scale_(c);
    return t.push(std::move(out), [a, c](Tape& tp, Val self) {
        const Tensor& g = tp.grad(self);
        Tensor& ga = tp.grad(a);
        for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] += c * g[i];
    });
}

inline Val relu(Tape& t, Val a) {
    Tensor out = t.value(a);
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
    return t.push(std::move(out), [a](Tape& tp, Val self) {
        const Tensor& g = tp.grad(self);
        const Tensor& x = tp.value(a);
        Tensor& ga = tp.grad(a);
        for (std::int64_t i = 0; i < g.numel(); ++i)
            if (x[i] > 0.0) ga[i] += g[i];
    });
}

// x: [..., C] plus bias [C], broadcast over all leading axes.
inline Val add_bias(Tape& t, Val x, Val b) {
    const Tensor& xv = t.value(x);
    const Tensor& bv = t.value(b);
    if (bv.ndim() != 1 || xv.ndim() < 1 || xv.dim(xv.ndim() - 1) != bv.dim(0))
        throw ShapeError("add_bias: incompatible shapes " + shape_str(xv.shape()) + " and " + shape_str(bv.shape()));
    const std::int64_t c = bv.dim(0);
    Tensor out = xv;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += bv[i % c];
    return t.push(std::move(out), [x, b, c](Tape& tp, Val self) {
        const Tensor& g = tp.grad(self);
        tp.grad(x).add_(g);
        Tensor& gb = tp.grad(b);
        for (std::int64_t i = 0; i < g.numel(); ++i) gb[i % c] += g[i];
    });
}

// ----------------------------- shape movement -----------------------------

inline Val reshape(Tape& t, Val x, Shape new_shape) {
    Tensor out = t.value(x).reshaped(std::move(new_shape));
    return t.push(std::move(out), [x](Tape& tp, Val self) {
        const Tensor& g = tp.grad(self);
        Tensor& gx = tp.grad(x);
        for (std::int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
    });
}

namespace detail {

inline std::vector<std::int64_t> row_strides(const Shape& s) {
    std::vector<std::int64_t> st(s.size(), 1);
    for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
    return st;
}

// out[idx] = in[idx ∘ perm]: axis i of the output is axis perm[i] of the input.
inline Tensor permute_tensor(const Tensor& in, const std::vector<int>& perm) {
    const Shape& s = in.shape();
    const auto n = static_cast<int>(s.size());
    if (static_cast<int>(perm.size()) != n) throw ShapeError("permute: rank mismatch");
    std::vector<char> seen(perm.size(), 0);
    Shape out_shape(perm.size());
    for (int i = 0; i < n; ++i) {
        if (perm[i] < 0 || perm[i] >= n || seen[static_cast<std::size_t>(perm[i])])
            throw ShapeError("permute: invalid permutation");
        seen[static_cast<std::size_t>(perm[i])] = 1;
        out_shape[static_cast<std::size_t>(i)] = s[static_cast<std::size_t>(perm[i])];
    }
    Tensor out(out_shape);
    auto in_strides = row_strides(s);
    std::vector<std::int64_t> idx(perm.size(), 0);
    const double* src = in.data();
    double* dst = out.data();
    const std::int64_t total = out.numel();
    for (std::int64_t flat = 0; flat < total; ++flat) {
        std::int64_t src_off = 0;
        for (int i = 0; i < n; ++i) src_off += idx[static_cast<std::size_t>(i)] * in_strides[static_cast<std::size_t>(perm[i])];
        dst[flat] = src[src_off];
        for (int i = n - 1; i >= 0; --i) {
            auto ui = static_cast<std::size_t>(i);
            if (++idx[ui] < out_shape[ui]) break;
            idx[ui] = 0;
        }
    }
    return out;
}

inline std::vector<int> inverse_perm(const std::vector<int>& perm) {
    std::vector<int> inv(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) inv[static_cast<std::size_t>(perm[i])] = static_cast<int>(i);
    return inv;
}

}  // namespace detail

inline Val permute(Tape& t, Val x, std::vector<int> perm) {
    Tensor out = detail::permute_tensor(t.value(x), perm);
    return t.push(std::move(out), [x, perm](Tape& tp, Val self) {
        Tensor back = detail::permute_tensor(tp.grad(self), detail::inverse_perm(perm));
        tp.grad(x).add_(back);
    });
}

inline Val transpose_last2(Tape& t, Val x) {
    const auto n = static_cast<int>(t.value(x).ndim());
    if (n < 2) throw ShapeError("transpose_last2 requires rank >= 2, got " + shape_str(t.value(x).shape()));
    std::vector<int> perm(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
    std::swap(perm[static_cast<std::size_t>(n - 2)], perm[static_cast<std::size_t>(n - 1)]);
    return permute(t, x, perm);
}

// Concatenate along the last axis; leading shapes must match.
inline Val concat_last(Tape& t, Val a, Val b) {
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    if (av.ndim() != bv.ndim() || av.ndim() < 1)
        throw ShapeError("concat_last: rank mismatch " + shape_str(av.shape()) + " vs " + shape_str(bv.shape()));
    for (std::int64_t i = 0; i + 1 < av.ndim(); ++i)
        if (av.dim(i) != bv.dim(i))
            throw ShapeError("concat_last: leading dims differ " + shape_str(av.shape()) + " vs " + shape_str(bv.shape()));
    const std::int64_t ca = av.dim(av.ndim() - 1);
    const std::int64_t cb = bv.dim(bv.ndim() - 1);
    Shape out_shape = av.shape();
    out_shape.back() = ca + cb;
    Tensor out(out_shape);
    const std::int64_t rows = av.numel() / ca;
    for (std::int64_t r = 0; r < rows; ++r) {
        for (std::int64_t i = 0; i < ca; ++i) out[r * (ca + cb) + i] = av[r * ca + i];
        for (std::int64_t i = 0; i < cb; ++i) out[r * (ca + cb) + ca + i] = bv[r * cb + i];
    }
    return t.push(std::move(out), [a, b, ca, cb, rows](Tape& tp, Val self) {
        const Tensor& g = tp.grad(self);
        Tensor& ga = tp.grad(a);
        Tensor& gb = tp.grad(b);
        for (std::int64_t r = 0; r < rows; ++r) {
            for (std::int64_t i = 0; i < ca; ++i) ga[r * ca + i] += g[r * (ca + cb) + i];
            for (std::int64_t i = 0; i < cb; ++i) gb[r * cb + i] += g[r * (ca + cb) + ca + i];
        }
    });
}

// ----------------------------- matmul -----------------------------

// a: [*, M, K]; b: [K, N] (shared across the batch) or [*, K, N] with
// identical leading dims. Backward: dA = G·Bᵀ, dB = Aᵀ·G (summed over the
// batch when b is shared).
inline Val matmul(Tape& t, Val a, Val b) {
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    if (av.ndim() < 2 || bv.ndim() < 2)
        throw ShapeError("matmul requires rank >= 2 operands, got " + shape_str(av.shape()) + " and " + shape_str(bv.shape()));
    const std::int64_t m = av.dim(av.ndim() - 2);
    const std::int64_t k = av.dim(av.ndim() - 1);
    const std::int64_t kb = bv.dim(bv.ndim() - 2);
    const std::int64_t n = bv.dim(bv.ndim() - 1);
    if (k != kb)
        throw ShapeError("matmul: inner dimensions disagree, " + shape_str(av.shape()) + " vs " + shape_str(bv.shape()));
    const bool shared_b = bv.ndim() == 2 && av.ndim() > 2;
    if (!shared_b && av.ndim() != bv.ndim())
        throw ShapeError("matmul: rank mismatch " + shape_str(av.shape()) + " vs " + shape_str(bv.shape()));
    if (!shared_b)
        for (std::int64_t i = 0; i + 2 < av.ndim(); ++i)
            if (av.dim(i) != bv.dim(i))
                throw ShapeError("matmul: batch dims differ " + shape_str(av.shape()) + " vs " + shape_str(bv.shape()));

    const std::int64_t batch = av.numel() / (m * k);
    Shape out_shape(av.shape().begin(), av.shape().end() - 1);
    out_shape.push_back(n);
    Tensor out(out_shape);

    const double* ap = av.data();
    const double* bp = bv.data();
    double* op = out.data();
    for (std::int64_t s = 0; s < batch; ++s) {
        const double* as = ap + s * m * k;
        const double* bs = shared_b ? bp : bp + s * k * n;
        double* os = op + s * m * n;
        for (std::int64_t i = 0; i < m; ++i) {
            double* orow = os + i * n;
            const double* arow = as + i * k;
            for (std::int64_t kk = 0; kk < k; ++kk) {
                const double aa = arow[kk];
                if (aa == 0.0) continue;
                const double* brow = bs + kk * n;
                for (std::int64_t j = 0; j < n; ++j) orow[j] += aa * brow[j];
            }
        }
    }

    return t.push(std::move(out), [a, b, m, k, n, batch, shared_b](Tape& tp, Val self) {
        const Tensor& g = tp.grad(self);
        const Tensor& avv = tp.value(a);
        const Tensor& bvv = tp.value(b);
        Tensor& ga = tp.grad(a);
        Tensor& gb = tp.grad(b);
        const double* gp = g.data();
        const double* ap2 = avv.data();
        const double* bp2 = bvv.data();
        double* gap = ga.data();
        double* gbp = gb.data();
        for (std::int64_t s = 0; s < batch; ++s) {
            const double* gs = gp + s * m * n;
            const double* as = ap2 + s * m * k;
            const double* bs = shared_b ? bp2 : bp2 + s * k * n;
            double* gas = gap + s * m * k;
            double* gbs = shared_b ? gbp : gbp + s * k * n;
            // dA += G · Bᵀ
            for (std::int64_t i = 0; i < m; ++i) {
                const double* grow = gs + i * n;
                double* garow = gas + i * k;
                for (std::int64_t kk = 0; kk < k; ++kk) {
                    const double* brow = bs + kk * n;
                    double acc = 0.0;
                    for (std::int64_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                    garow[kk] += acc;
                }
            }
            // dB += Aᵀ · G
            for (std::int64_t i = 0; i < m; ++i) {
                const double* arow = as + i * k;
                const double* grow = gs + i * n;
                for (std::int64_t kk = 0; kk < k; ++kk) {
                    const double aa = arow[kk];
                    if (aa == 0.0) continue;
                    double* gbrow = gbs + kk * n;
                    for (std::int64_t j = 0; j < n; ++j) gbrow[j] += aa * grow[j];
                }
            }
        }
    });
}

// ----------------------------- reductions -----------------------------

inline Val sum_all(Tape& t, Val x) {
    const Tensor& xv = t.value(x);
    double s = 0.0;
    for (std::int64_t i = 0; i < xv.numel(); ++i) s += xv[i];
    return t.push(Tensor::scalar(s), [x](Tape& tp, Val self) {
        const double g = tp.grad(self)[0];
        Tensor& gx = tp.grad(x);
        for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += g;
    });
}

inline Val mean_all(Tape& t, Val x) {
    const Tensor& xv = t.value(x);
    const std::int64_t n = xv.numel();
    if (n == 0) throw ShapeError("mean_all of empty tensor");
    double s = 0.0;
    for (std::int64_t i = 0; i < n; ++i) s += xv[i];
    return t.push(Tensor::scalar(s / static_cast<double>(n)), [x, n](Tape& tp, Val self) {
        const double g = tp.grad(self)[0] / static_cast<double>(n);
        Tensor& gx = tp.grad(x);
        for (std::int64_t i = 0; i < n; ++i) gx[i] += g;
    });
}

// [..., N] -> [...]: mean over the last axis.
inline Val mean_last(Tape& t, Val x) {
    const Tensor& xv = t.value(x);
    if (xv.ndim() < 1) throw ShapeError("mean_last requires rank >= 1");
    const std::int64_t n = xv.dim(xv.ndim() - 1);
    if (n == 0) throw ShapeError("mean_last over empty axis");
    Shape out_shape(xv.shape().begin(), xv.shape().end() - 1);
    Tensor out(out_shape);
    const std::int64_t rows = out.numel();
    for (std::int64_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::int64_t i = 0; i < n; ++i) s += xv[r * n + i];
        out[r] = s / static_cast<double>(n);
    }
    return t.push(std::move(out), [x, n, rows](Tape& tp, Val self) {
        const Tensor& g = tp.grad(self);
        Tensor& gx = tp.grad(x);
        for (std::int64_t r = 0; r < rows; ++r) {
            const double gr = g[r] / static_cast<double>(n);
            for (std::int64_t i = 0; i < n; ++i) gx[r * n + i] += gr;
        }
    });
}

// ----------------------------- row nonlinearities -----------------------------

// Softmax over the last axis, max-subtracted for stability.
inline Val softmax_rows(Tape& t, Val x) {
    const Tensor& xv = t.value(x);
    if (xv.ndim() < 1) throw ShapeError("softmax_rows requires rank >= 1");
    const std::int64_t n = xv.dim(xv.ndim() - 1);
    if (n < 1) throw ShapeError("softmax_rows over empty axis");
    Tensor out(xv.shape());
    const std::int64_t rows = xv.numel() / n;
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* row = xv.data() + r * n;
        double* orow = out.data() + r * n;
        double mx = row[0];
        for (std::int64_t i = 1; i < n; ++i) mx = std::max(mx, row[i]);
        double z = 0.0;
        for (std::int64_t i = 0; i < n; ++i) {
            orow[i] = std::exp(row[i] - mx);
            z += orow[i];
        }
        for (std::int64_t i = 0; i < n; ++i) orow[i] /= z;
    }
    return t.push(std::move(out), [x, n, rows](Tape& tp, Val self) {
        const Tensor& g = tp.grad(self);
        const Tensor& p = tp.value(self);
        Tensor& gx = tp.grad(x);
        for (std::int64_t r = 0; r < rows; ++r) {
            const double* grow = g.data() + r * n;
            const double* prow = p.data() + r * n;
            double dot = 0.0;
            for (std::int64_t i = 0; i < n; ++i) dot += grow[i] * prow[i];
            double* gxr = gx.data() + r * n;
            for (std::int64_t i = 0; i < n; ++i) gxr[i] += prow[i] * (grow[i] - dot);
        }
    });
}

inline constexpr double kL2NormEps = 1e-12;

// Scale each slice along the last axis to unit Euclidean norm; all-zero
// slices stay zero thanks to the epsilon under the square root.
inline Val l2_normalize(Tape& t, Val x) {
    const Tensor& xv = t.value(x);
    if (xv.ndim() < 1) throw ShapeError("l2_normalize requires rank >= 1");
    const std::int64_t n = xv.dim(xv.ndim() - 1);
    Tensor out(xv.shape());
    const std::int64_t rows = xv.numel() / n;
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* row = xv.data() + r * n;
        double* orow = out.data() + r * n;
        double q = 0.0;
        for (std::int64_t i = 0; i < n; ++i) q += row[i] * row[i];
        const double s = std::sqrt(q + kL2NormEps);
        for (std::int64_t i = 0; i < n; ++i) orow[i] = row[i] / s;
    }
    return t.push(std::move(out), [x, n, rows](Tape& tp, Val self) {
        const Tensor& g = tp.grad(self);
        const Tensor& xvv = tp.value(x);
        Tensor& gx = tp.grad(x);
        for (std::int64_t r = 0; r < rows; ++r) {
            const double* grow = g.data() + r * n;
            const double* row = xvv.data() + r * n;
            double* gxr = gx.data() + r * n;
            double q = 0.0, dot = 0.0;
            for (std::int64_t i = 0; i < n; ++i) {
                q += row[i] * row[i];
                dot += grow[i] * row[i];
            }
            const double s = std::sqrt(q + kL2NormEps);
            const double s3 = s * s * s;
            for (std::int64_t i = 0; i < n; ++i) gxr[i] += grow[i] / s - row[i] * dot / s3;
        }
    });
}

// ----------------------------- dropout -----------------------------

// Training: zero each element with probability p and scale survivors by
// 1/(1-p), so the expected value matches the input. Evaluation: identity.
// The mask stream is a pure function of `key`, so runs are reproducible.
inline Val dropout(Tape& t, Val x, double p, bool training, std::uint64_t key) {
    if (p < 0.0 || p >= 1.0) throw ValidationError("dropout probability must lie in [0, 1), got " + format_double(p));
    if (!training || p == 0.0) {
        Tensor out = t.value(x);
        return t.push(std::move(out), [x](Tape& tp, Val self) { tp.grad(x).add_(tp.grad(self)); });
    }
    CounterRng rng(key);
    const Tensor& xv = t.value(x);
    Tensor out(xv.shape());
    std::vector<double> mask(static_cast<std::size_t>(xv.numel()));
    const double keep_scale = 1.0 / (1.0 - p);
    for (std::int64_t i = 0; i < xv.numel(); ++i) {
        const double m = rng.next_uniform() < p ? 0.0 : keep_scale;
        mask[static_cast<std::size_t>(i)] = m;
        out[i] = xv[i] * m;
    }
    return t.push(std::move(out), [x, mask = std::move(mask)](Tape& tp, Val self) {
        const Tensor& g = tp.grad(self);
        Tensor& gx = tp.grad(x);
        for (std::int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * mask[static_cast<std::size_t>(i)];
    });
}

// ----------------------------- batch normalization -----------------------------

inline constexpr double kBatchNormEps = 1e-8;

// Normalizes over every axis except axis 1 (the channel/feature axis).
// Training uses batch statistics and refreshes the running stats in place;
// evaluation uses the stored running stats. Training with a single sample on
// axis 0 is rejected: a one-element batch has no usable variance.
inline Val batch_norm(Tape& t, Val x, Val gamma, Val beta, Tensor& running_mean, Tensor& running_var, bool training,
                      double momentum = 0.1) {
    const Tensor& xv = t.value(x);
    if (xv.ndim() < 2) throw ShapeError("batch_norm requires rank >= 2, got " + shape_str(xv.shape()));
    const std::int64_t c = xv.dim(1);
    const Tensor& gv = t.value(gamma);
    const Tensor& bv = t.value(beta);
    if (gv.ndim() != 1 || gv.dim(0) != c || bv.ndim() != 1 || bv.dim(0) != c)
        throw ShapeError("batch_norm: scale/shift must be length-" + std::to_string(c) + " vectors");
    if (running_mean.ndim() != 1 || running_mean.dim(0) != c || running_var.ndim() != 1 || running_var.dim(0) != c)
        throw ShapeError("batch_norm: running stats must be length-" + std::to_string(c) + " vectors");
    if (training && xv.dim(0) < 2)
        throw ValidationError("batch_norm: training mode needs batch size >= 2, got " + std::to_string(xv.dim(0)));

    // Flatten to (lead, C, inner): element (l, ch, i) at ((l*C)+ch)*inner + i.
    const std::int64_t lead = xv.dim(0);
    const std::int64_t inner = xv.numel() / (lead * c);
    const std::int64_t reduce_n = lead * inner;

    Tensor mean({c}), var({c});
    if (training) {
        for (std::int64_t ch = 0; ch < c; ++ch) {
            double s = 0.0;
            for (std::int64_t l = 0; l < lead; ++l)
                for (std::int64_t i = 0; i < inner; ++i) s += xv[(l * c + ch) * inner + i];
            mean[ch] = s / static_cast<double>(reduce_n);
            double v = 0.0;
            for (std::int64_t l = 0; l < lead; ++l)
                for (std::int64_t i = 0; i < inner; ++i) {
                    const double d = xv[(l * c + ch) * inner + i] - mean[ch];
                    v += d * d;
                }
            var[ch] = v / static_cast<double>(reduce_n);
        }
        for (std::int64_t ch = 0; ch < c; ++ch) {
            running_mean[ch] = (1.0 - momentum) * running_mean[ch] + momentum * mean[ch];
            running_var[ch] = (1.0 - momentum) * running_var[ch] + momentum * var[ch];
        }
    } else {
        mean = running_mean;
        var = running_var;
    }

    Tensor out(xv.shape());
    for (std::int64_t ch = 0; ch < c; ++ch) {
        const double inv = 1.0 / std::sqrt(var[ch] + kBatchNormEps);
        const double gc = gv[ch];
        const double bc = bv[ch];
        const double mc = mean[ch];
        for (std::int64_t l = 0; l < lead; ++l)
            for (std::int64_t i = 0; i < inner; ++i) {
                const std::int64_t off = (l * c + ch) * inner + i;
                out[off] = gc * ((xv[off] - mc) * inv) + bc;
            }
    }

    return t.push(std::move(out),
                  [x, gamma, beta, c, lead, inner, reduce_n, training, mean = std::move(mean),
                   var = std::move(var)](Tape& tp, Val self) {
                      const Tensor& g = tp.grad(self);
                      const Tensor& xvv = tp.value(x);
                      const Tensor& gvv = tp.value(gamma);
                      Tensor& gx = tp.grad(x);
                      Tensor& gg = tp.grad(gamma);
                      Tensor& gb = tp.grad(beta);
                      for (std::int64_t ch = 0; ch < c; ++ch) {
                          const double inv = 1.0 / std::sqrt(var[ch] + kBatchNormEps);
                          const double mc = mean[ch];
                          double sum_g = 0.0, sum_gx = 0.0;
                          for (std::int64_t l = 0; l < lead; ++l)
                              for (std::int64_t i = 0; i < inner; ++i) {
                                  const std::int64_t off = (l * c + ch) * inner + i;
                                  const double xhat = (xvv[off] - mc) * inv;
                                  sum_g += g[off];
                                  sum_gx += g[off] * xhat;
                              }
                          gb[ch] += sum_g;
                          gg[ch] += sum_gx;
                          const double gc = gvv[ch];
                          if (training) {
                              const double n = static_cast<double>(reduce_n);
                              for (std::int64_t l = 0; l < lead; ++l)
                                  for (std::int64_t i = 0; i < inner; ++i) {
                                      const std::int64_t off = (l * c + ch) * inner + i;
                                      const double xhat = (xvv[off] - mc) * inv;
                                      gx[off] += gc * inv * (g[off] - sum_g / n - xhat * sum_gx / n);
                                  }
                          } else {
                              for (std::int64_t l = 0; l < lead; ++l)
                                  for (std::int64_t i = 0; i < inner; ++i) {
                                      const std::int64_t off = (l * c + ch) * inner + i;
                                      gx[off] += gc * inv * g[off];
                                  }
                          }
                      }
                  });
}

// ----------------------------- classification loss -----------------------------

// Mean over the batch of -log softmax(logits)[label], computed in log-sum-exp
// form so extreme margins stay finite.
inline Val cross_entropy(Tape& t, Val logits, const std::vector<std::int64_t>& labels) {
    const Tensor& zv = t.value(logits);
    if (zv.ndim() != 2) throw ShapeError("cross_entropy expects [batch, classes] logits, got " + shape_str(zv.shape()));
    const std::int64_t bsz = zv.dim(0);
    const std::int64_t k = zv.dim(1);
    if (static_cast<std::int64_t>(labels.size()) != bsz)
        throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " + std::to_string(bsz));
    for (auto y : labels)
        if (y < 0 || y >= k) throw ValidationError("cross_entropy: label " + std::to_string(y) + " outside [0, " + std::to_string(k) + ")");
    double total = 0.0;
    for (std::int64_t r = 0; r < bsz; ++r) {
        const double* row = zv.data() + r * k;
        double mx = row[0];
        for (std::int64_t i = 1; i < k; ++i) mx = std::max(mx, row[i]);
        double z = 0.0;
        for (std::int64_t i = 0; i < k; ++i) z += std::exp(row[i] - mx);
        total += std::log(z) - (row[labels[static_cast<std::size_t>(r)]] - mx);
    }
    return t.push(Tensor::scalar(total / static_cast<double>(bsz)), [logits, labels, bsz, k](Tape& tp, Val self) {
        const double gs = tp.grad(self)[0] / static_cast<double>(bsz);
        const Tensor& zvv = tp.value(logits);
        Tensor& gz = tp.grad(logits);
        for (std::int64_t r = 0; r < bsz; ++r) {
            const double* row = zvv.data() + r * k;
            double* grow = gz.data() + r * k;
            double mx = row[0];
            for (std::int64_t i = 1; i < k; ++i) mx = std::max(mx, row[i]);
            double z = 0.0;
            for (std::int64_t i = 0; i < k; ++i) z += std::exp(row[i] - mx);
            for (std::int64_t i = 0; i < k; ++i) {
                const double p = std::exp(row[i] - mx) / z;
                grow[i] += gs * (p - (labels[static_cast<std::size_t>(r)] == i ? 1.0 : 0.0));
            }
        }
    });
}

// ----------------------------- graph / temporal convolution pieces -----------------------------

// x: [B, C, T, V] times a fixed (non-learned) V×V matrix applied on the
// vertex axis: out[b,c,t,u] = Σ_v x[b,c,t,v] · m[v,u].
inline Val vertex_mix(Tape& t, Val x, const Tensor& m) {
    const Tensor& xv = t.value(x);
    if (xv.ndim() != 4) throw ShapeError("vertex_mix expects [B, C, T, V], got " + shape_str(xv.shape()));
    const std::int64_t v = xv.dim(3);
    if (m.ndim() != 2 || m.dim(0) != v || m.dim(1) != v)
        throw ShapeError("vertex_mix: matrix " + shape_str(m.shape()) + " does not match V=" + std::to_string(v));
    const std::int64_t rows = xv.numel() / v;
    Tensor out(xv.shape());
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* xr = xv.data() + r * v;
        double* orow = out.data() + r * v;
        for (std::int64_t j = 0; j < v; ++j) orow[j] = 0.0;
        for (std::int64_t i = 0; i < v; ++i) {
            const double xi = xr[i];
            if (xi == 0.0) continue;
            const double* mr = m.data() + i * v;
            for (std::int64_t j = 0; j < v; ++j) orow[j] += xi * mr[j];
        }
    }
    return t.push(std::move(out), [x, m, v, rows](Tape& tp, Val self) {
        const Tensor& g = tp.grad(self);
        Tensor& gx = tp.grad(x);
        for (std::int64_t r = 0; r < rows; ++r) {
            const double* grow = g.data() + r * v;
            double* gxr = gx.data() + r * v;
            for (std::int64_t i = 0; i < v; ++i) {
                const double* mr = m.data() + i * v;
                double acc = 0.0;
                for (std::int64_t j = 0; j < v; ++j) acc += grow[j] * mr[j];
                gxr[i] += acc;
            }
        }
    });
}

// x: [B, C, T, V] with w: [C_out, C_in]: out[b,o,t,v] = Σ_i w[o,i]·x[b,i,t,v].
inline Val channel_mix(Tape& t, Val x, Val w) {
    const Tensor& xv = t.value(x);
    const Tensor& wv = t.value(w);
    if (xv.ndim() != 4) throw ShapeError("channel_mix expects [B, C, T, V], got " + shape_str(xv.shape()));
    if (wv.ndim() != 2 || wv.dim(1) != xv.dim(1))
        throw ShapeError("channel_mix: weight " + shape_str(wv.shape()) + " does not match C=" + std::to_string(xv.dim(1)));
    const std::int64_t bsz = xv.dim(0), cin = xv.dim(1), tt = xv.dim(2), vv = xv.dim(3), cout = wv.dim(0);
    const std::int64_t plane = tt * vv;
    Tensor out({bsz, cout, tt, vv});
    for (std::int64_t b = 0; b < bsz; ++b) {
        const double* xb = xv.data() + b * cin * plane;
        double* ob = out.data() + b * cout * plane;
        for (std::int64_t o = 0; o < cout; ++o) {
            double* op = ob + o * plane;
            const double* wrow = wv.data() + o * cin;
            for (std::int64_t i = 0; i < cin; ++i) {
                const double wo = wrow[i];
                if (wo == 0.0) continue;
                const double* xp = xb + i * plane;
                for (std::int64_t p = 0; p < plane; ++p) op[p] += wo * xp[p];
            }
        }
    }
    return t.push(std::move(out), [x, w, bsz, cin, cout, plane](Tape& tp, Val self) {
        const Tensor& g = tp.grad(self);
        const Tensor& xvv = tp.value(x);
        const Tensor& wvv = tp.value(w);
        Tensor& gx = tp.grad(x);
        Tensor& gw = tp.grad(w);
        for (std::int64_t b = 0; b < bsz; ++b) {
            const double* gb = g.data() + b * cout * plane;
            const double* xb = xvv.data() + b * cin * plane;
            double* gxb = gx.data() + b * cin * plane;
            for (std::int64_t o = 0; o < cout; ++o) {
                const double* gp = gb + o * plane;
                const double* wrow = wvv.data() + o * cin;
                double* gwrow = gw.data() + o * cin;
                for (std::int64_t i = 0; i < cin; ++i) {
                    const double* xp = xb + i * plane;
                    double* gxp = gxb + i * plane;
                    const double wo = wrow[i];
                    double acc = 0.0;
                    for (std::int64_t p = 0; p < plane; ++p) {
                        acc += gp[p] * xp[p];
                        gxp[p] += wo * gp[p];
                    }
                    gwrow[i] += acc;
                }
            }
        }
    });
}

// Depthwise 1-D convolution along T, per channel and vertex, zero-padded at
// the edges. w: [C, K] with K odd. Output frames: ceil(T / stride).
inline Val temporal_conv(Tape& t, Val x, Val w, std::int64_t stride = 1) {
    const Tensor& xv = t.value(x);
    const Tensor& wv = t.value(w);
    if (xv.ndim() != 4) throw ShapeError("temporal_conv expects [B, C, T, V], got " + shape_str(xv.shape()));
    if (wv.ndim() != 2 || wv.dim(0) != xv.dim(1))
        throw ShapeError("temporal_conv: kernel " + shape_str(wv.shape()) + " does not match C=" + std::to_string(xv.dim(1)));
    const std::int64_t ktap = wv.dim(1);
    if (ktap % 2 == 0) throw ValidationError("temporal_conv: kernel width must be odd, got " + std::to_string(ktap));
    if (stride < 1) throw ValidationError("temporal_conv: stride must be >= 1");
    const std::int64_t bsz = xv.dim(0), c = xv.dim(1), tt = xv.dim(2), vv = xv.dim(3);
    const std::int64_t pad = (ktap - 1) / 2;
    const std::int64_t tout = (tt + stride - 1) / stride;
    Tensor out({bsz, c, tout, vv});
    for (std::int64_t b = 0; b < bsz; ++b)
        for (std::int64_t ch = 0; ch < c; ++ch) {
            const double* xp = xv.data() + (b * c + ch) * tt * vv;
            const double* wp = wv.data() + ch * ktap;
            double* op = out.data() + (b * c + ch) * tout * vv;
            for (std::int64_t to = 0; to < tout; ++to) {
                double* orow = op + to * vv;
                for (std::int64_t kk = 0; kk < ktap; ++kk) {
                    const std::int64_t ti = to * stride + kk - pad;
                    if (ti < 0 || ti >= tt) continue;
                    const double wk = wp[kk];
                    if (wk == 0.0) continue;
                    const double* xrow = xp + ti * vv;
                    for (std::int64_t j = 0; j < vv; ++j) orow[j] += wk * xrow[j];
                }
            }
        }
    return t.push(std::move(out), [x, w, bsz, c, tt, vv, ktap, pad, stride, tout](Tape& tp, Val self) {
        const Tensor& g = tp.grad(self);
        const Tensor& xvv = tp.value(x);
        const Tensor& wvv = tp.value(w);
        Tensor& gx = tp.grad(x);
        Tensor& gw = tp.grad(w);
        for (std::int64_t b = 0; b < bsz; ++b)
            for (std::int64_t ch = 0; ch < c; ++ch) {
                const double* gp = g.data() + (b * c + ch) * tout * vv;
                const double* xp = xvv.data() + (b * c + ch) * tt * vv;
                const double* wp = wvv.data() + ch * ktap;
                double* gxp = gx.data() + (b * c + ch) * tt * vv;
                double* gwp = gw.data() + ch * ktap;
                for (std::int64_t to = 0; to < tout; ++to) {
                    const double* grow = gp + to * vv;
                    for (std::int64_t kk = 0; kk < ktap; ++kk) {
                        const std::int64_t ti = to * stride + kk - pad;
                        if (ti < 0 || ti >= tt) continue;
                        const double* xrow = xp + ti * vv;
                        double* gxrow = gxp + ti * vv;
                        const double wk = wp[kk];
                        double acc = 0.0;
                        for (std::int64_t j = 0; j < vv; ++j) {
                            acc += grow[j] * xrow[j];
                            gxrow[j] += wk * grow[j];
                        }
                        gwp[kk] += acc;
                    }
                }
            }
    });
}

// ----------------------------- composed layers -----------------------------

// Keeps frames 0, stride, 2*stride, ... along the second-to-last axis —
// the time axis of a [B, C, T, V] tensor. Matches temporal_conv's output
// length ceil(T/stride), which is what a strided residual path needs.
inline Val temporal_subsample(Tape& t, Val x, std::int64_t stride) {
    const Tensor& xv = t.value(x);
    if (xv.ndim() < 3)
        throw ShapeError("temporal_subsample expects rank >= 3, got " + shape_str(xv.shape()));
    if (stride < 1) throw ValidationError("temporal_subsample: stride must be >= 1");
    if (stride == 1) return x;
    const std::int64_t tt = xv.dim(xv.ndim() - 2);
    const std::int64_t inner = xv.dim(xv.ndim() - 1);
    const std::int64_t outer = xv.numel() / (tt * inner);
    const std::int64_t tout = (tt + stride - 1) / stride;
    Shape oshape = xv.shape();
    oshape[oshape.size() - 2] = tout;
    Tensor out(oshape);
    for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t to = 0; to < tout; ++to) {
            const double* src = xv.data() + (o * tt + to * stride) * inner;
            double* dst = out.data() + (o * tout + to) * inner;
            for (std::int64_t j = 0; j < inner; ++j) dst[j] = src[j];
        }
    return t.push(std::move(out), [x, outer, tt, inner, tout, stride](Tape& tp, Val self) {
        const Tensor& g = tp.grad(self);
        Tensor& gx = tp.grad(x);
        for (std::int64_t o = 0; o < outer; ++o)
            for (std::int64_t to = 0; to < tout; ++to) {
                const double* src = g.data() + (o * tout + to) * inner;
                double* dst = gx.data() + (o * tt + to * stride) * inner;
                for (std::int64_t j = 0; j < inner; ++j) dst[j] += src[j];
            }
    });
}

// y = x · Wᵀ + b with x: [..., in], w: [out, in], b: [out].
inline Val linear(Tape& t, Val x, Val w, Val b) { return add_bias(t, matmul(t, x, transpose_last2(t, w)), b); }

}  // namespace skelid
