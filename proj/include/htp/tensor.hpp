#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "htp/rng.hpp"

namespace htp {

// Minimal dense tensors with reverse-mode autodiff on an explicit tape.
// Tensors are at most 2-D (rows x cols); vectors are 1 x n. Scalar is float
// for training and double for gradient verification.

template <typename T>
struct TensorT {
    int rows = 0, cols = 0;
    std::vector<T> v;

    TensorT() = default;
    TensorT(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, T(0)) {
        if (r <= 0 || c <= 0) throw std::invalid_argument("tensor: non-positive extent");
    }

    T& operator()(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    const T& operator()(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
    size_t size() const { return v.size(); }

    std::string shape_str() const {
        return "[" + std::to_string(rows) + "," + std::to_string(cols) + "]";
    }

    static TensorT row(const std::vector<T>& vals) {
        TensorT t(1, static_cast<int>(vals.size()));
        t.v = vals;
        return t;
    }

    template <typename U>
    TensorT<U> cast() const {
        TensorT<U> out;
        out.rows = rows;
        out.cols = cols;
        out.v.resize(v.size());
        for (size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
        return out;
    }
};

template <typename T>
struct ParamT {
    std::string name;
    TensorT<T> value;
    TensorT<T> grad;

    ParamT(std::string n, int r, int c) : name(std::move(n)), value(r, c), grad(r, c) {}
    void zero_grad() { std::fill(grad.v.begin(), grad.v.end(), T(0)); }
};

inline void check(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

// Computation tape. Every op appends a node holding the forward value and a
// backward closure; backward() replays the tape in reverse. Rebuilt per
// forward pass; parameter leaves accumulate into their ParamT grad buffers.
template <typename T>
class GraphT {
public:
    using Var = int;

    Var input(TensorT<T> value) { return push(std::move(value), {}); }

    Var param(ParamT<T>& p) {
        ParamT<T>* pp = &p;
        Var id = push(p.value, {});
        nodes_[id].backward = [pp](GraphT& g, Var self) {
            auto& gr = g.grad(self);
            for (size_t i = 0; i < gr.size(); ++i) pp->grad.v[i] += gr.v[i];
        };
        return id;
    }

    const TensorT<T>& value(Var id) const { return nodes_[id].value; }
    TensorT<T>& grad(Var id) { return nodes_[id].grad; }

    Var add(Var a, Var b) {
        const auto& x = value(a);
        const auto& y = value(b);
        const bool bcast = (y.rows == 1 && x.rows > 1 && y.cols == x.cols);
        check(bcast || (x.rows == y.rows && x.cols == y.cols),
              "add: shape mismatch " + x.shape_str() + " vs " + y.shape_str());
        TensorT<T> out(x.rows, x.cols);
        for (int r = 0; r < x.rows; ++r)
            for (int c = 0; c < x.cols; ++c) out(r, c) = x(r, c) + (bcast ? y(0, c) : y(r, c));
        Var id = push(std::move(out), {a, b});
        nodes_[id].backward = [a, b, bcast](GraphT& g, Var self) {
            const auto& go = g.grad(self);
            auto& ga = g.grad(a);
            auto& gb = g.grad(b);
            for (size_t i = 0; i < go.size(); ++i) ga.v[i] += go.v[i];
            if (bcast) {
                for (int r = 0; r < go.rows; ++r)
                    for (int c = 0; c < go.cols; ++c) gb(0, c) += go(r, c);
            } else {
                for (size_t i = 0; i < go.size(); ++i) gb.v[i] += go.v[i];
            }
        };
        return id;
    }

    Var mul(Var a, Var b) {
        const auto& x = value(a);
        const auto& y = value(b);
        const bool bcast = (y.rows == 1 && x.rows > 1 && y.cols == x.cols);
        check(bcast || (x.rows == y.rows && x.cols == y.cols),
              "mul: shape mismatch " + x.shape_str() + " vs " + y.shape_str());
        TensorT<T> out(x.rows, x.cols);
        for (int r = 0; r < x.rows; ++r)
            for (int c = 0; c < x.cols; ++c) out(r, c) = x(r, c) * (bcast ? y(0, c) : y(r, c));
        Var id = push(std::move(out), {a, b});
        nodes_[id].backward = [a, b, bcast](GraphT& g, Var self) {
            const auto& go = g.grad(self);
            const auto& x = g.value(a);
            const auto& y = g.value(b);
            auto& ga = g.grad(a);
            auto& gb = g.grad(b);
            for (int r = 0; r < go.rows; ++r)
                for (int c = 0; c < go.cols; ++c) {
                    const T yy = bcast ? y(0, c) : y(r, c);
                    ga(r, c) += go(r, c) * yy;
                    if (bcast)
                        gb(0, c) += go(r, c) * x(r, c);
                    else
                        gb(r, c) += go(r, c) * x(r, c);
                }
        };
        return id;
    }

    Var sub(Var a, Var b) { return add(a, scale(b, T(-1))); }

    Var matmul(Var a, Var b) {
        const auto& x = value(a);
        const auto& y = value(b);
        check(x.cols == y.rows,
              "matmul: inner dims differ " + x.shape_str() + " vs " + y.shape_str());
        TensorT<T> out(x.rows, y.cols);
        matmul_into(x, y, out, false, false);
        Var id = push(std::move(out), {a, b});
        nodes_[id].backward = [a, b](GraphT& g, Var self) {
            const auto& go = g.grad(self);
            // dA += dOut * B^T ; dB += A^T * dOut
            matmul_into(go, g.value(b), g.grad(a), false, true, true);
            matmul_into(g.value(a), go, g.grad(b), true, false, true);
        };
        return id;
    }

    Var transpose(Var a) {
        const auto& x = value(a);
        TensorT<T> out(x.cols, x.rows);
        for (int r = 0; r < x.rows; ++r)
            for (int c = 0; c < x.cols; ++c) out(c, r) = x(r, c);
        Var id = push(std::move(out), {a});
        nodes_[id].backward = [a](GraphT& g, Var self) {
            const auto& go = g.grad(self);
            auto& ga = g.grad(a);
            for (int r = 0; r < go.rows; ++r)
                for (int c = 0; c < go.cols; ++c) ga(c, r) += go(r, c);
        };
        return id;
    }

    Var scale(Var a, T s) {
        TensorT<T> out = value(a);
        for (auto& e : out.v) e *= s;
        Var id = push(std::move(out), {a});
        nodes_[id].backward = [a, s](GraphT& g, Var self) {
            const auto& go = g.grad(self);
            auto& ga = g.grad(a);
            for (size_t i = 0; i < go.size(); ++i) ga.v[i] += s * go.v[i];
        };
        return id;
    }

    Var add_const(Var a, const TensorT<T>& k) {
        const auto& x = value(a);
        check(x.rows == k.rows && x.cols == k.cols, "add_const: shape mismatch");
        TensorT<T> out = x;
        for (size_t i = 0; i < out.size(); ++i) out.v[i] += k.v[i];
        Var id = push(std::move(out), {a});
        nodes_[id].backward = [a](GraphT& g, Var self) {
            const auto& go = g.grad(self);
            auto& ga = g.grad(a);
            for (size_t i = 0; i < go.size(); ++i) ga.v[i] += go.v[i];
        };
        return id;
    }

    Var relu(Var a) {
        TensorT<T> out = value(a);
        for (auto& e : out.v) e = e > T(0) ? e : T(0);
        Var id = push(std::move(out), {a});
        nodes_[id].backward = [a](GraphT& g, Var self) {
            const auto& go = g.grad(self);
            const auto& x = g.value(a);
            auto& ga = g.grad(a);
            for (size_t i = 0; i < go.size(); ++i)
                if (x.v[i] > T(0)) ga.v[i] += go.v[i];
        };
        return id;
    }

    Var gelu(Var a) {
        TensorT<T> out = value(a);
        for (auto& e : out.v) e = gelu_fwd(e);
        Var id = push(std::move(out), {a});
        nodes_[id].backward = [a](GraphT& g, Var self) {
            const auto& go = g.grad(self);
            const auto& x = g.value(a);
            auto& ga = g.grad(a);
            for (size_t i = 0; i < go.size(); ++i) ga.v[i] += go.v[i] * gelu_bwd(x.v[i]);
        };
        return id;
    }

    Var softplus(Var a) {
        TensorT<T> out = value(a);
        for (auto& e : out.v) e = softplus_fwd(e);
        Var id = push(std::move(out), {a});
        nodes_[id].backward = [a](GraphT& g, Var self) {
            const auto& go = g.grad(self);
            const auto& x = g.value(a);
            auto& ga = g.grad(a);
            for (size_t i = 0; i < go.size(); ++i)
                ga.v[i] += go.v[i] / (T(1) + std::exp(-x.v[i]));
        };
        return id;
    }

    Var log(Var a) {
        TensorT<T> out = value(a);
        for (auto& e : out.v) e = std::log(e);
        Var id = push(std::move(out), {a});
        nodes_[id].backward = [a](GraphT& g, Var self) {
            const auto& go = g.grad(self);
            const auto& x = g.value(a);
            auto& ga = g.grad(a);
            for (size_t i = 0; i < go.size(); ++i) ga.v[i] += go.v[i] / x.v[i];
        };
        return id;
    }

    Var concat_cols(Var a, Var b) {
        const auto& x = value(a);
        const auto& y = value(b);
        check(x.rows == y.rows,
              "concat_cols: row mismatch " + x.shape_str() + " vs " + y.shape_str());
        TensorT<T> out(x.rows, x.cols + y.cols);
        for (int r = 0; r < x.rows; ++r) {
            for (int c = 0; c < x.cols; ++c) out(r, c) = x(r, c);
            for (int c = 0; c < y.cols; ++c) out(r, x.cols + c) = y(r, c);
        }
        const int xc = x.cols;
        Var id = push(std::move(out), {a, b});
        nodes_[id].backward = [a, b, xc](GraphT& g, Var self) {
            const auto& go = g.grad(self);
            auto& ga = g.grad(a);
            auto& gb = g.grad(b);
            for (int r = 0; r < go.rows; ++r) {
                for (int c = 0; c < xc; ++c) ga(r, c) += go(r, c);
                for (int c = xc; c < go.cols; ++c) gb(r, c - xc) += go(r, c);
            }
        };
        return id;
    }

    Var concat_rows(const std::vector<Var>& parts) {
        check(!parts.empty(), "concat_rows: empty");
        int rows = 0;
        const int cols = value(parts[0]).cols;
        for (Var p : parts) {
            check(value(p).cols == cols, "concat_rows: col mismatch");
            rows += value(p).rows;
        }
        TensorT<T> out(rows, cols);
        int r0 = 0;
        for (Var p : parts) {
            const auto& x = value(p);
            for (int r = 0; r < x.rows; ++r)
                for (int c = 0; c < cols; ++c) out(r0 + r, c) = x(r, c);
            r0 += x.rows;
        }
        Var id = push(std::move(out), parts);
        std::vector<Var> ps = parts;
        nodes_[id].backward = [ps](GraphT& g, Var self) {
            const auto& go = g.grad(self);
            int r0 = 0;
            for (Var p : ps) {
                auto& gp = g.grad(p);
                for (int r = 0; r < gp.rows; ++r)
                    for (int c = 0; c < go.cols; ++c) gp(r, c) += go(r0 + r, c);
                r0 += gp.rows;
            }
        };
        return id;
    }

    Var slice_rows(Var a, int r0, int r1) {
        const auto& x = value(a);
        check(0 <= r0 && r0 < r1 && r1 <= x.rows, "slice_rows: bad range");
        TensorT<T> out(r1 - r0, x.cols);
        for (int r = r0; r < r1; ++r)
            for (int c = 0; c < x.cols; ++c) out(r - r0, c) = x(r, c);
        Var id = push(std::move(out), {a});
        nodes_[id].backward = [a, r0](GraphT& g, Var self) {
            const auto& go = g.grad(self);
            auto& ga = g.grad(a);
            for (int r = 0; r < go.rows; ++r)
                for (int c = 0; c < go.cols; ++c) ga(r0 + r, c) += go(r, c);
        };
        return id;
    }

    Var slice_cols(Var a, int c0, int c1) {
        const auto& x = value(a);
        check(0 <= c0 && c0 < c1 && c1 <= x.cols, "slice_cols: bad range");
        TensorT<T> out(x.rows, c1 - c0);
        for (int r = 0; r < x.rows; ++r)
            for (int c = c0; c < c1; ++c) out(r, c - c0) = x(r, c);
        Var id = push(std::move(out), {a});
        nodes_[id].backward = [a, c0](GraphT& g, Var self) {
            const auto& go = g.grad(self);
            auto& ga = g.grad(a);
            for (int r = 0; r < go.rows; ++r)
                for (int c = 0; c < go.cols; ++c) ga(r, c0 + c) += go(r, c);
        };
        return id;
    }

    // row-wise softmax over the last axis, max-subtracted
    Var softmax(Var a) {
        const auto& x = value(a);
        check(x.cols >= 1, "softmax: empty axis");
        for (const auto& e : x.v)
            if (std::isnan(e)) throw std::invalid_argument("softmax: NaN input");
        TensorT<T> out(x.rows, x.cols);
        for (int r = 0; r < x.rows; ++r) {
            T m = x(r, 0);
            for (int c = 1; c < x.cols; ++c) m = std::max(m, x(r, c));
            T s = T(0);
            for (int c = 0; c < x.cols; ++c) {
                out(r, c) = std::exp(x(r, c) - m);
                s += out(r, c);
            }
            for (int c = 0; c < x.cols; ++c) out(r, c) /= s;
        }
        Var id = push(std::move(out), {a});
        nodes_[id].backward = [a](GraphT& g, Var self) {
            const auto& go = g.grad(self);
            const auto& y = g.value(self);
            auto& ga = g.grad(a);
            for (int r = 0; r < go.rows; ++r) {
                T dot = T(0);
                for (int c = 0; c < go.cols; ++c) dot += go(r, c) * y(r, c);
                for (int c = 0; c < go.cols; ++c) ga(r, c) += (go(r, c) - dot) * y(r, c);
            }
        };
        return id;
    }

    // row-wise layer norm (eps inside the sqrt), then gain/bias (1 x cols each)
    Var layer_norm(Var a, Var gain, Var bias) {
        const auto& x = value(a);
        check(x.cols >= 2, "layer_norm: axis length < 2");
        check(value(gain).cols == x.cols && value(bias).cols == x.cols,
              "layer_norm: gain/bias width mismatch");
        const T eps = T(1e-5);
        TensorT<T> out(x.rows, x.cols);
        TensorT<T> stats(x.rows, 2);  // mean, inv-std per row
        for (int r = 0; r < x.rows; ++r) {
            T mu = T(0);
            for (int c = 0; c < x.cols; ++c) mu += x(r, c);
            mu /= T(x.cols);
            T var = T(0);
            for (int c = 0; c < x.cols; ++c) var += (x(r, c) - mu) * (x(r, c) - mu);
            var /= T(x.cols);
            const T istd = T(1) / std::sqrt(var + eps);
            stats(r, 0) = mu;
            stats(r, 1) = istd;
            for (int c = 0; c < x.cols; ++c)
                out(r, c) = (x(r, c) - mu) * istd * value(gain)(0, c) + value(bias)(0, c);
        }
        Var id = push(std::move(out), {a, gain, bias});
        auto st = std::make_shared<TensorT<T>>(std::move(stats));
        nodes_[id].backward = [a, gain, bias, st](GraphT& g, Var self) {
            const auto& go = g.grad(self);
            const auto& x = g.value(a);
            const auto& gn = g.value(gain);
            auto& ga = g.grad(a);
            auto& gg = g.grad(gain);
            auto& gb = g.grad(bias);
            const int n = x.cols;
            for (int r = 0; r < x.rows; ++r) {
                const T mu = (*st)(r, 0), istd = (*st)(r, 1);
                T sum_gy = T(0), sum_gyx = T(0);
                for (int c = 0; c < n; ++c) {
                    const T xhat = (x(r, c) - mu) * istd;
                    const T gy = go(r, c) * gn(0, c);
                    gg(0, c) += go(r, c) * xhat;
                    gb(0, c) += go(r, c);
                    sum_gy += gy;
                    sum_gyx += gy * xhat;
                }
                for (int c = 0; c < n; ++c) {
                    const T xhat = (x(r, c) - mu) * istd;
                    const T gy = go(r, c) * gn(0, c);
                    ga(r, c) += istd * (gy - (sum_gy + xhat * sum_gyx) / T(n));
                }
            }
        };
        return id;
    }

    // Multi-head scaled dot-product attention. q, k, v are [len, d]; heads
    // split d evenly. The causal mask blocks attention to future positions.
    Var attention(Var q, Var k, Var v, int n_heads, bool causal) {
        const auto& qv = value(q);
        const auto& kv = value(k);
        check(qv.cols == kv.cols && kv.rows == value(v).rows && kv.cols == value(v).cols,
              "attention: dim mismatch q" + qv.shape_str() + " k" + kv.shape_str() + " v" +
                  value(v).shape_str());
        check(qv.cols % n_heads == 0, "attention: width not divisible by heads");
        const int dh = qv.cols / n_heads;
        TensorT<T> mask(qv.rows, kv.rows);
        if (causal) {
            check(qv.rows == kv.rows, "attention: causal mask needs square scores");
            for (int r = 0; r < qv.rows; ++r)
                for (int c = r + 1; c < kv.rows; ++c) mask(r, c) = T(-1e9);
        }
        std::vector<Var> heads;
        heads.reserve(n_heads);
        for (int h = 0; h < n_heads; ++h) {
            Var qh = slice_cols(q, h * dh, (h + 1) * dh);
            Var kh = slice_cols(k, h * dh, (h + 1) * dh);
            Var vh = slice_cols(v, h * dh, (h + 1) * dh);
            Var scores = scale(matmul(qh, transpose(kh)), T(1) / std::sqrt(T(dh)));
            if (causal) scores = add_const(scores, mask);
            heads.push_back(matmul(softmax(scores), vh));
        }
        Var out = heads[0];
        for (int h = 1; h < n_heads; ++h) out = concat_cols(out, heads[h]);
        return out;
    }

    // Inverted dropout; identity outside training.
    Var dropout(Var a, double rate, bool training, Rng& rng) {
        check(rate >= 0.0 && rate < 1.0, "dropout: rate outside [0,1)");
        if (!training || rate == 0.0) return a;
        const auto& x = value(a);
        auto keep = std::make_shared<std::vector<char>>(x.size());
        TensorT<T> out(x.rows, x.cols);
        const T inv = T(1.0 / (1.0 - rate));
        for (size_t i = 0; i < x.size(); ++i) {
            (*keep)[i] = rng.uniform() >= rate;
            out.v[i] = (*keep)[i] ? x.v[i] * inv : T(0);
        }
        Var id = push(std::move(out), {a});
        nodes_[id].backward = [a, keep, inv](GraphT& g, Var self) {
            const auto& go = g.grad(self);
            auto& ga = g.grad(a);
            for (size_t i = 0; i < go.size(); ++i)
                if ((*keep)[i]) ga.v[i] += go.v[i] * inv;
        };
        return id;
    }

    Var sum(Var a) {
        const auto& x = value(a);
        TensorT<T> out(1, 1);
        T s = T(0);
        for (const auto& e : x.v) s += e;
        out(0, 0) = s;
        Var id = push(std::move(out), {a});
        nodes_[id].backward = [a](GraphT& g, Var self) {
            const T go = g.grad(self)(0, 0);
            auto& ga = g.grad(a);
            for (auto& e : ga.v) e += go;
        };
        return id;
    }

    Var sum_sq(Var a) { return sum(mul(a, a)); }

    void backward(Var loss) {
        const auto& lv = value(loss);
        check(lv.rows == 1 && lv.cols == 1, "backward: loss must be scalar, got " + lv.shape_str());
        for (auto& n : nodes_) {
            n.grad = TensorT<T>(n.value.rows, n.value.cols);
        }
        nodes_[loss].grad(0, 0) = T(1);
        for (int id = loss; id >= 0; --id)
            if (nodes_[id].backward) nodes_[id].backward(*this, id);
    }

    size_t num_nodes() const { return nodes_.size(); }

private:
    struct Node {
        TensorT<T> value;
        TensorT<T> grad;
        std::vector<Var> parents;
        std::function<void(GraphT&, Var)> backward;
    };
    std::vector<Node> nodes_;

    Var push(TensorT<T> value, std::vector<Var> parents) {
        Node n;
        n.value = std::move(value);
        n.parents = std::move(parents);
        nodes_.push_back(std::move(n));
        return static_cast<Var>(nodes_.size() - 1);
    }

    static T gelu_fwd(T x) {
        return T(0.5) * x * (T(1) + std::erf(x * T(0.70710678118654752440)));
    }
    static T gelu_bwd(T x) {
        const T phi = std::exp(-T(0.5) * x * x) * T(0.39894228040143267794);
        return T(0.5) * (T(1) + std::erf(x * T(0.70710678118654752440))) + x * phi;
    }
    static T softplus_fwd(T x) {
        if (x > T(20)) return x;
        if (x < T(-20)) return std::exp(x);
        return std::log(T(1) + std::exp(x));
    }

    // out (+)= A(^T) * B(^T); loop order keeps the inner stride unit on B.
    static void matmul_into(const TensorT<T>& a, const TensorT<T>& b, TensorT<T>& out,
                            bool ta, bool tb, bool accumulate = false) {
        const int m = ta ? a.cols : a.rows;
        const int kk = ta ? a.rows : a.cols;
        const int n = tb ? b.rows : b.cols;
        if (!accumulate) {
            out = TensorT<T>(m, n);
        }
        for (int i = 0; i < m; ++i) {
            for (int k = 0; k < kk; ++k) {
                const T av = ta ? a(k, i) : a(i, k);
                if (av == T(0)) continue;
                if (!tb) {
                    const T* brow = &b.v[static_cast<size_t>(k) * b.cols];
                    T* orow = &out.v[static_cast<size_t>(i) * n];
                    for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
                } else {
                    T* orow = &out.v[static_cast<size_t>(i) * n];
                    for (int j = 0; j < n; ++j) orow[j] += av * b(j, k);
                }
            }
        }
    }
};

using Tensor32 = TensorT<float>;
using Tensor64 = TensorT<double>;
using Graph32 = GraphT<float>;
using Graph64 = GraphT<double>;

// Adam with bias correction. State lives alongside the caller's parameters.
template <typename T>
struct AdamStateT {
    std::vector<TensorT<T>> m, v;
    long step = 0;

    void init(const std::vector<std::unique_ptr<ParamT<T>>>& params) {
        m.clear();
        v.clear();
        for (const auto& p : params) {
            m.emplace_back(p->value.rows, p->value.cols);
            v.emplace_back(p->value.rows, p->value.cols);
        }
        step = 0;
    }
};

template <typename T>
void adam_step(std::vector<std::unique_ptr<ParamT<T>>>& params, AdamStateT<T>& state, T lr,
               T beta1 = T(0.9), T beta2 = T(0.999), T eps = T(1e-8)) {
    check(state.m.size() == params.size(), "adam_step: state/param count mismatch");
    state.step += 1;
    const T bc1 = T(1) - std::pow(beta1, T(state.step));
    const T bc2 = T(1) - std::pow(beta2, T(state.step));
    for (size_t i = 0; i < params.size(); ++i) {
        auto& p = *params[i];
        check(state.m[i].rows == p.value.rows && state.m[i].cols == p.value.cols,
              "adam_step: shape mismatch for " + p.name);
        for (size_t j = 0; j < p.value.size(); ++j) {
            const T g = p.grad.v[j];
            state.m[i].v[j] = beta1 * state.m[i].v[j] + (T(1) - beta1) * g;
            state.v[i].v[j] = beta2 * state.v[i].v[j] + (T(1) - beta2) * g * g;
            const T mhat = state.m[i].v[j] / bc1;
            const T vhat = state.v[i].v[j] / bc2;
            p.value.v[j] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

}  // namespace htp
