#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "stemgen/fft.hpp"
#include "stemgen/stft.hpp"
#include "stemgen/tensor.hpp"

namespace stemgen {

// Named parameter tensors with gradient and optimizer-state storage.
struct ParamStore {
    struct Entry {
        std::string name;
        Tensor value;
        Tensor grad;
        Tensor m;  // Adam first moment
        Tensor s;  // Adam second moment
    };
    std::vector<Entry> entries;

    int add(const std::string& name, std::vector<int> shape, double init_scale,
            std::mt19937_64& rng) {
        Entry e;
        e.name = name;
        e.value = Tensor(shape);
        e.grad = Tensor(shape);
        e.m = Tensor(shape);
        e.s = Tensor(shape);
        if (init_scale > 0.0) {
            std::normal_distribution<double> nd(0.0, init_scale);
            for (auto& x : e.value.v) x = nd(rng);
        }
        entries.push_back(std::move(e));
        return static_cast<int>(entries.size()) - 1;
    }

    int add_const(const std::string& name, Tensor value) {
        Entry e;
        e.name = name;
        e.grad = Tensor(value.shape);
        e.m = Tensor(value.shape);
        e.s = Tensor(value.shape);
        e.value = std::move(value);
        entries.push_back(std::move(e));
        return static_cast<int>(entries.size()) - 1;
    }

    Tensor& value(int id) { return entries[static_cast<size_t>(id)].value; }
    const Tensor& value(int id) const { return entries[static_cast<size_t>(id)].value; }
    Tensor& grad(int id) { return entries[static_cast<size_t>(id)].grad; }

    void zero_grad() {
        for (auto& e : entries) e.grad.fill(0.0);
    }
    size_t total_scalars() const {
        size_t n = 0;
        for (auto& e : entries) n += e.value.size();
        return n;
    }
};

// Eager reverse-mode tape. Ops compute forward immediately and record a
// backward closure; backward() replays closures in reverse creation order
// and flushes leaf gradients into the ParamStore.
class Tape {
  public:
    explicit Tape(ParamStore* store = nullptr, bool record = true)
        : store_(store), record_(record) {}

    const Tensor& val(int id) const { return nodes_[static_cast<size_t>(id)].val; }
    Tensor& grad(int id) { return nodes_[static_cast<size_t>(id)].grad; }

    int leaf(Tensor t) { return make(std::move(t), -1); }

    int param(int pid) {
        if (!store_) throw std::logic_error("tape: param op without a store");
        return make(store_->value(pid), pid);
    }

    int add(int a, int b) {
        check_same(a, b, "add");
        Tensor out = val(a);
        for (size_t i = 0; i < out.size(); ++i) out.v[i] += val(b).v[i];
        int y = make(std::move(out), -1);
        rec([this, a, b, y] {
            accum(a, grad(y));
            accum(b, grad(y));
        });
        return y;
    }

    int sub(int a, int b) {
        check_same(a, b, "sub");
        Tensor out = val(a);
        for (size_t i = 0; i < out.size(); ++i) out.v[i] -= val(b).v[i];
        int y = make(std::move(out), -1);
        rec([this, a, b, y] {
            accum(a, grad(y));
            accum_scaled(b, grad(y), -1.0);
        });
        return y;
    }

    int mul(int a, int b) {
        check_same(a, b, "mul");
        Tensor out = val(a);
        for (size_t i = 0; i < out.size(); ++i) out.v[i] *= val(b).v[i];
        int y = make(std::move(out), -1);
        rec([this, a, b, y] {
            auto& g = grad(y);
            auto& ga = grad(a);
            auto& gb = grad(b);
            const auto& va = val(a);
            const auto& vb = val(b);
            for (size_t i = 0; i < g.size(); ++i) {
                ga.v[i] += g.v[i] * vb.v[i];
                gb.v[i] += g.v[i] * va.v[i];
            }
        });
        return y;
    }

    int scale(int a, double c) {
        Tensor out = val(a);
        for (auto& x : out.v) x *= c;
        int y = make(std::move(out), -1);
        rec([this, a, y, c] { accum_scaled(a, grad(y), c); });
        return y;
    }

    int add_scalar(int a, double c) {
        Tensor out = val(a);
        for (auto& x : out.v) x += c;
        int y = make(std::move(out), -1);
        rec([this, a, y] { accum(a, grad(y)); });
        return y;
    }

    // out = a * s where s is a scalar node (residual gate)
    int scale_by(int a, int s) {
        const double sv = val(s).v[0];
        Tensor out = val(a);
        for (auto& x : out.v) x *= sv;
        int y = make(std::move(out), -1);
        rec([this, a, s, y, sv] {
            auto& g = grad(y);
            accum_scaled(a, g, sv);
            double acc = 0.0;
            const auto& va = val(a);
            for (size_t i = 0; i < g.size(); ++i) acc += g.v[i] * va.v[i];
            grad(s).v[0] += acc;
        });
        return y;
    }

    int silu(int a) {
        Tensor out = val(a);
        for (auto& x : out.v) x = x / (1.0 + std::exp(-x));
        int y = make(std::move(out), -1);
        rec([this, a, y] {
            auto& g = grad(y);
            auto& ga = grad(a);
            const auto& va = val(a);
            for (size_t i = 0; i < g.size(); ++i) {
                const double sig = 1.0 / (1.0 + std::exp(-va.v[i]));
                ga.v[i] += g.v[i] * sig * (1.0 + va.v[i] * (1.0 - sig));
            }
        });
        return y;
    }

    int relu(int a) {
        Tensor out = val(a);
        for (auto& x : out.v) x = x > 0.0 ? x : 0.0;
        int y = make(std::move(out), -1);
        rec([this, a, y] {
            auto& g = grad(y);
            auto& ga = grad(a);
            const auto& va = val(a);
            for (size_t i = 0; i < g.size(); ++i)
                if (va.v[i] > 0.0) ga.v[i] += g.v[i];
        });
        return y;
    }

    int exp_(int a) {
        Tensor out = val(a);
        for (auto& x : out.v) x = std::exp(x);
        int y = make(std::move(out), -1);
        rec([this, a, y] {
            auto& g = grad(y);
            auto& ga = grad(a);
            const auto& vy = val(y);
            for (size_t i = 0; i < g.size(); ++i) ga.v[i] += g.v[i] * vy.v[i];
        });
        return y;
    }

    int log_(int a) {
        Tensor out = val(a);
        for (auto& x : out.v) x = std::log(x);
        int y = make(std::move(out), -1);
        rec([this, a, y] {
            auto& g = grad(y);
            auto& ga = grad(a);
            const auto& va = val(a);
            for (size_t i = 0; i < g.size(); ++i) ga.v[i] += g.v[i] / va.v[i];
        });
        return y;
    }

    int rsqrt(int a) {
        Tensor out = val(a);
        for (auto& x : out.v) x = 1.0 / std::sqrt(x);
        int y = make(std::move(out), -1);
        rec([this, a, y] {
            auto& g = grad(y);
            auto& ga = grad(a);
            const auto& vy = val(y);
            for (size_t i = 0; i < g.size(); ++i)
                ga.v[i] += g.v[i] * -0.5 * vy.v[i] * vy.v[i] * vy.v[i];
        });
        return y;
    }

    int square(int a) {
        Tensor out = val(a);
        for (auto& x : out.v) x *= x;
        int y = make(std::move(out), -1);
        rec([this, a, y] {
            auto& g = grad(y);
            auto& ga = grad(a);
            const auto& va = val(a);
            for (size_t i = 0; i < g.size(); ++i) ga.v[i] += 2.0 * g.v[i] * va.v[i];
        });
        return y;
    }

    int abs_(int a) {
        Tensor out = val(a);
        for (auto& x : out.v) x = std::abs(x);
        int y = make(std::move(out), -1);
        rec([this, a, y] {
            auto& g = grad(y);
            auto& ga = grad(a);
            const auto& va = val(a);
            for (size_t i = 0; i < g.size(); ++i)
                ga.v[i] += g.v[i] * (va.v[i] > 0.0 ? 1.0 : (va.v[i] < 0.0 ? -1.0 : 0.0));
        });
        return y;
    }

    int matmul(int a, int b) {
        const auto& A = val(a);
        const auto& B = val(b);
        if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(0))
            throw std::invalid_argument("matmul: shape mismatch " + shape_str(A.shape) + "x" +
                                        shape_str(B.shape));
        const int m = A.dim(0), k = A.dim(1), n = B.dim(1);
        Tensor out({m, n});
        for (int i = 0; i < m; ++i)
            for (int p = 0; p < k; ++p) {
                const double av = A.at(i, p);
                if (av == 0.0) continue;
                for (int j = 0; j < n; ++j) out.at(i, j) += av * B.at(p, j);
            }
        int y = make(std::move(out), -1);
        rec([this, a, b, y, m, k, n] {
            const auto& g = grad(y);
            const auto& A2 = val(a);
            const auto& B2 = val(b);
            auto& ga = grad(a);
            auto& gb = grad(b);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) {
                    const double gv = g.at(i, j);
                    if (gv == 0.0) continue;
                    for (int p = 0; p < k; ++p) {
                        ga.at(i, p) += gv * B2.at(p, j);
                        gb.at(p, j) += gv * A2.at(i, p);
                    }
                }
        });
        return y;
    }

    int transpose(int a) {
        const auto& A = val(a);
        if (A.rank() != 2) throw std::invalid_argument("transpose: rank != 2");
        const int m = A.dim(0), n = A.dim(1);
        Tensor out({n, m});
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) out.at(j, i) = A.at(i, j);
        int y = make(std::move(out), -1);
        rec([this, a, y, m, n] {
            const auto& g = grad(y);
            auto& ga = grad(a);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) ga.at(i, j) += g.at(j, i);
        });
        return y;
    }

    // Row-wise softmax with max subtraction.
    int softmax_rows(int a) {
        const auto& A = val(a);
        if (A.rank() != 2) throw std::invalid_argument("softmax_rows: rank != 2");
        const int m = A.dim(0), n = A.dim(1);
        Tensor out({m, n});
        for (int i = 0; i < m; ++i) {
            double mx = A.at(i, 0);
            for (int j = 1; j < n; ++j) mx = std::max(mx, A.at(i, j));
            double z = 0.0;
            for (int j = 0; j < n; ++j) {
                out.at(i, j) = std::exp(A.at(i, j) - mx);
                z += out.at(i, j);
            }
            for (int j = 0; j < n; ++j) out.at(i, j) /= z;
        }
        int y = make(std::move(out), -1);
        rec([this, a, y, m, n] {
            const auto& g = grad(y);
            const auto& s = val(y);
            auto& ga = grad(a);
            for (int i = 0; i < m; ++i) {
                double dot = 0.0;
                for (int j = 0; j < n; ++j) dot += g.at(i, j) * s.at(i, j);
                for (int j = 0; j < n; ++j) ga.at(i, j) += s.at(i, j) * (g.at(i, j) - dot);
            }
        });
        return y;
    }

    int mean_all(int a) {
        const auto& A = val(a);
        double acc = 0.0;
        for (double x : A.v) acc += x;
        const double inv = 1.0 / static_cast<double>(A.size());
        int y = make(Tensor::scalar(acc * inv), -1);
        rec([this, a, y, inv] {
            const double g = grad(y).v[0] * inv;
            auto& ga = grad(a);
            for (auto& x : ga.v) x += g;
        });
        return y;
    }

    int sum_all(int a) {
        const auto& A = val(a);
        double acc = 0.0;
        for (double x : A.v) acc += x;
        int y = make(Tensor::scalar(acc), -1);
        rec([this, a, y] {
            const double g = grad(y).v[0];
            auto& ga = grad(a);
            for (auto& x : ga.v) x += g;
        });
        return y;
    }

    // Channel concatenation of (C_i, L) feature maps.
    int concat_ch(const std::vector<int>& xs) {
        if (xs.empty()) throw std::invalid_argument("concat_ch: empty");
        const int L = val(xs[0]).dim(1);
        int ctot = 0;
        for (int x : xs) {
            if (val(x).rank() != 2 || val(x).dim(1) != L)
                throw std::invalid_argument("concat_ch: length mismatch");
            ctot += val(x).dim(0);
        }
        Tensor out({ctot, L});
        int off = 0;
        for (int x : xs) {
            const auto& X = val(x);
            for (int c = 0; c < X.dim(0); ++c)
                for (int l = 0; l < L; ++l) out.at(off + c, l) = X.at(c, l);
            off += X.dim(0);
        }
        int y = make(std::move(out), -1);
        std::vector<int> ins = xs;
        rec([this, ins, y, L] {
            const auto& g = grad(y);
            int off2 = 0;
            for (int x : ins) {
                auto& gx = grad(x);
                for (int c = 0; c < gx.dim(0); ++c)
                    for (int l = 0; l < L; ++l) gx.at(c, l) += g.at(off2 + c, l);
                off2 += gx.dim(0);
            }
        });
        return y;
    }

    int slice_ch(int a, int from, int count) {
        const auto& A = val(a);
        if (A.rank() != 2 || from < 0 || from + count > A.dim(0))
            throw std::invalid_argument("slice_ch: out of range");
        const int L = A.dim(1);
        Tensor out({count, L});
        for (int c = 0; c < count; ++c)
            for (int l = 0; l < L; ++l) out.at(c, l) = A.at(from + c, l);
        int y = make(std::move(out), -1);
        rec([this, a, y, from, count, L] {
            const auto& g = grad(y);
            auto& ga = grad(a);
            for (int c = 0; c < count; ++c)
                for (int l = 0; l < L; ++l) ga.at(from + c, l) += g.at(c, l);
        });
        return y;
    }

    // Broadcast a length-C vector across L columns -> (C, L).
    int broadcast_cols(int a, int L) {
        const auto& A = val(a);
        const int C = static_cast<int>(A.size());
        Tensor out({C, L});
        for (int c = 0; c < C; ++c)
            for (int l = 0; l < L; ++l) out.at(c, l) = A.v[static_cast<size_t>(c)];
        int y = make(std::move(out), -1);
        rec([this, a, y, C, L] {
            const auto& g = grad(y);
            auto& ga = grad(a);
            for (int c = 0; c < C; ++c) {
                double acc = 0.0;
                for (int l = 0; l < L; ++l) acc += g.at(c, l);
                ga.v[static_cast<size_t>(c)] += acc;
            }
        });
        return y;
    }

    // 1D convolution, zero padding (K-1)/2, stride 1 or 2.
    // x: (Cin, L), w: (Cout, Cin, K), b: (Cout) -> (Cout, Lout)
    int conv1d(int x, int w, int b, int stride) {
        const auto& X = val(x);
        const auto& W = val(w);
        const auto& Bv = val(b);
        if (X.rank() != 2 || W.rank() != 3 || X.dim(0) != W.dim(1))
            throw std::invalid_argument("conv1d: shape mismatch");
        const int cin = X.dim(0), L = X.dim(1);
        const int cout = W.dim(0), K = W.dim(2);
        const int pad = (K - 1) / 2;
        const int lout = (L + 2 * pad - K) / stride + 1;
        Tensor out({cout, lout});
        for (int o = 0; o < cout; ++o) {
            const double bias = Bv.v[static_cast<size_t>(o)];
            for (int l = 0; l < lout; ++l) {
                double acc = bias;
                const int base = l * stride - pad;
                for (int ci = 0; ci < cin; ++ci)
                    for (int k = 0; k < K; ++k) {
                        const int t = base + k;
                        if (t >= 0 && t < L) acc += W.at(o, ci, k) * X.at(ci, t);
                    }
                out.at(o, l) = acc;
            }
        }
        int y = make(std::move(out), -1);
        rec([this, x, w, b, y, stride, cin, L, cout, K, pad, lout] {
            const auto& g = grad(y);
            const auto& X2 = val(x);
            const auto& W2 = val(w);
            auto& gx = grad(x);
            auto& gw = grad(w);
            auto& gb = grad(b);
            for (int o = 0; o < cout; ++o)
                for (int l = 0; l < lout; ++l) {
                    const double gv = g.at(o, l);
                    if (gv == 0.0) continue;
                    gb.v[static_cast<size_t>(o)] += gv;
                    const int base = l * stride - pad;
                    for (int ci = 0; ci < cin; ++ci)
                        for (int k = 0; k < K; ++k) {
                            const int t = base + k;
                            if (t < 0 || t >= L) continue;
                            gx.at(ci, t) += gv * W2.at(o, ci, k);
                            gw.at(o, ci, k) += gv * X2.at(ci, t);
                        }
                }
        });
        return y;
    }

    // Nearest-neighbor x2 upsampling along time: (C, L) -> (C, 2L)
    int upsample2(int a) {
        const auto& A = val(a);
        if (A.rank() != 2) throw std::invalid_argument("upsample2: rank != 2");
        const int C = A.dim(0), L = A.dim(1);
        Tensor out({C, 2 * L});
        for (int c = 0; c < C; ++c)
            for (int l = 0; l < L; ++l) {
                out.at(c, 2 * l) = A.at(c, l);
                out.at(c, 2 * l + 1) = A.at(c, l);
            }
        int y = make(std::move(out), -1);
        rec([this, a, y, C, L] {
            const auto& g = grad(y);
            auto& ga = grad(a);
            for (int c = 0; c < C; ++c)
                for (int l = 0; l < L; ++l)
                    ga.at(c, l) += g.at(c, 2 * l) + g.at(c, 2 * l + 1);
        });
        return y;
    }

    // Expand a diagonal table d (length Lq+Lk-1, indexed by (i-j)+Lk-1)
    // into the Toeplitz matrix B[i,j] = d[(i-j) + Lk - 1].
    int toeplitz(int d, int lq, int lk) {
        const auto& D = val(d);
        if (static_cast<int>(D.size()) != lq + lk - 1)
            throw std::invalid_argument("toeplitz: diagonal table size mismatch");
        Tensor out({lq, lk});
        for (int i = 0; i < lq; ++i)
            for (int j = 0; j < lk; ++j) out.at(i, j) = D.v[static_cast<size_t>(i - j + lk - 1)];
        int y = make(std::move(out), -1);
        rec([this, d, y, lq, lk] {
            const auto& g = grad(y);
            auto& gd = grad(d);
            for (int i = 0; i < lq; ++i)
                for (int j = 0; j < lk; ++j) gd.v[static_cast<size_t>(i - j + lk - 1)] += g.at(i, j);
        });
        return y;
    }

    // Windowed real STFT of a 1D signal as a (2, F, B) tensor (re, im).
    // Linear in the input; backward is the adjoint transform.
    int stft_ri(int x, const StftConfig& cfg) {
        const auto& X = val(x);
        const int T = static_cast<int>(X.size());
        if (T < cfg.win_len) throw std::invalid_argument("stft_ri: input shorter than window");
        const int F = (T + cfg.hop_len - 1) / cfg.hop_len;
        const int B = cfg.bins();
        const int half = cfg.win_len / 2;
        const auto win = make_window(cfg);
        Tensor out({2, F, B});
        std::vector<double> buf(static_cast<size_t>(cfg.win_len));
        for (int f = 0; f < F; ++f) {
            const int start = f * cfg.hop_len - half;
            for (int n = 0; n < cfg.win_len; ++n) {
                const int idx = start + n;
                buf[static_cast<size_t>(n)] =
                    (idx >= 0 && idx < T) ? X.v[static_cast<size_t>(idx)] * win[static_cast<size_t>(n)] : 0.0;
            }
            auto bins = rfft(buf);
            for (int b = 0; b < B; ++b) {
                out.at(0, f, b) = bins[static_cast<size_t>(b)].real();
                out.at(1, f, b) = bins[static_cast<size_t>(b)].imag();
            }
        }
        int y = make(std::move(out), -1);
        rec([this, x, y, cfg, T, F, B, half, win] {
            const auto& g = grad(y);
            auto& gx = grad(x);
            const int W = cfg.win_len;
            std::vector<cplx> a(static_cast<size_t>(W));
            for (int f = 0; f < F; ++f) {
                std::fill(a.begin(), a.end(), cplx(0.0));
                for (int b = 0; b < B; ++b) a[static_cast<size_t>(b)] = cplx(g.at(0, f, b), g.at(1, f, b));
                fft(a, true);  // (1/W) * sum with e^{+i...}
                const int start = f * cfg.hop_len - half;
                for (int n = 0; n < W; ++n) {
                    const int idx = start + n;
                    if (idx < 0 || idx >= T) continue;
                    gx.v[static_cast<size_t>(idx)] +=
                        a[static_cast<size_t>(n)].real() * W * win[static_cast<size_t>(n)];
                }
            }
        });
        return y;
    }

    // Normalized overlap-add inverse of a (2, F, B) complex spectrogram.
    int istft_ri(int z, const StftConfig& cfg, int T) {
        const auto& Z = val(z);
        if (Z.rank() != 3 || Z.dim(0) != 2 || Z.dim(2) != cfg.bins())
            throw std::invalid_argument("istft_ri: shape mismatch");
        const int F = Z.dim(1);
        const int B = Z.dim(2);
        const int W = cfg.win_len;
        const int half = W / 2;
        const auto win = make_window(cfg);

        std::vector<double> norm(static_cast<size_t>(T), 0.0);
        for (int f = 0; f < F; ++f) {
            const int start = f * cfg.hop_len - half;
            for (int n = 0; n < W; ++n) {
                const int idx = start + n;
                if (idx >= 0 && idx < T)
                    norm[static_cast<size_t>(idx)] += win[static_cast<size_t>(n)] * win[static_cast<size_t>(n)];
            }
        }
        for (auto& x : norm) x = x > 1e-12 ? 1.0 / x : 0.0;

        Tensor out({T});
        std::vector<cplx> bins(static_cast<size_t>(B));
        for (int f = 0; f < F; ++f) {
            for (int b = 0; b < B; ++b) bins[static_cast<size_t>(b)] = cplx(Z.at(0, f, b), Z.at(1, f, b));
            auto seg = irfft(bins, W);
            const int start = f * cfg.hop_len - half;
            for (int n = 0; n < W; ++n) {
                const int idx = start + n;
                if (idx >= 0 && idx < T)
                    out.v[static_cast<size_t>(idx)] +=
                        seg[static_cast<size_t>(n)] * win[static_cast<size_t>(n)] * norm[static_cast<size_t>(idx)];
            }
        }
        int y = make(std::move(out), -1);
        rec([this, z, y, cfg, T, F, B, W, half, win, norm] {
            const auto& g = grad(y);
            auto& gz = grad(z);
            std::vector<double> gseg(static_cast<size_t>(W));
            for (int f = 0; f < F; ++f) {
                const int start = f * cfg.hop_len - half;
                for (int n = 0; n < W; ++n) {
                    const int idx = start + n;
                    gseg[static_cast<size_t>(n)] =
                        (idx >= 0 && idx < T)
                            ? g.v[static_cast<size_t>(idx)] * win[static_cast<size_t>(n)] * norm[static_cast<size_t>(idx)]
                            : 0.0;
                }
                auto gb = rfft(gseg);
                for (int b = 0; b < B; ++b) {
                    const double mult = (b == 0 || b == B - 1) ? 1.0 : 2.0;
                    gz.at(0, f, b) += mult / W * gb[static_cast<size_t>(b)].real();
                    gz.at(1, f, b) += mult / W * gb[static_cast<size_t>(b)].imag();
                }
            }
        });
        return y;
    }

    // (2, F, B) -> (F, B): re^2 + im^2
    int magsq(int z) {
        const auto& Z = val(z);
        if (Z.rank() != 3 || Z.dim(0) != 2) throw std::invalid_argument("magsq: shape mismatch");
        const int F = Z.dim(1), B = Z.dim(2);
        Tensor out({F, B});
        for (int f = 0; f < F; ++f)
            for (int b = 0; b < B; ++b)
                out.at(f, b) = Z.at(0, f, b) * Z.at(0, f, b) + Z.at(1, f, b) * Z.at(1, f, b);
        int y = make(std::move(out), -1);
        rec([this, z, y, F, B] {
            const auto& g = grad(y);
            const auto& Z2 = val(z);
            auto& gz = grad(z);
            for (int f = 0; f < F; ++f)
                for (int b = 0; b < B; ++b) {
                    gz.at(0, f, b) += 2.0 * g.at(f, b) * Z2.at(0, f, b);
                    gz.at(1, f, b) += 2.0 * g.at(f, b) * Z2.at(1, f, b);
                }
        });
        return y;
    }

    int reshape(int a, std::vector<int> shape) {
        Tensor out = val(a);
        if (Tensor::count(shape) != static_cast<long long>(out.size()))
            throw std::invalid_argument("reshape: element count mismatch");
        out.shape = std::move(shape);
        int y = make(std::move(out), -1);
        rec([this, a, y] {
            auto& ga = grad(a);
            const auto& g = grad(y);
            for (size_t i = 0; i < ga.size(); ++i) ga.v[i] += g.v[i];
        });
        return y;
    }

    // Seeds d(loss)/d(loss) = 1 and runs all recorded closures in reverse,
    // then flushes leaf gradients into the ParamStore.
    void backward(int loss) {
        if (val(loss).size() != 1) throw std::invalid_argument("backward: loss must be scalar");
        grad(loss).v[0] = 1.0;
        for (size_t i = back_.size(); i-- > 0;)
            if (back_[i]) back_[i]();
        if (store_) {
            for (const auto& n : nodes_) {
                if (n.param < 0) continue;
                auto& g = store_->grad(n.param);
                for (size_t i = 0; i < g.size(); ++i) g.v[i] += n.grad.v[i];
            }
        }
    }

    size_t num_nodes() const { return nodes_.size(); }

  private:
    struct Node {
        Tensor val;
        Tensor grad;
        int param;
    };

    int make(Tensor val, int param) {
        Node n;
        n.grad = Tensor(val.shape);
        n.val = std::move(val);
        n.param = param;
        nodes_.push_back(std::move(n));
        back_.emplace_back();
        return static_cast<int>(nodes_.size()) - 1;
    }

    void rec(std::function<void()> fn) {
        if (record_) back_.back() = std::move(fn);
    }

    void check_same(int a, int b, const char* op) const {
        if (!val(a).same_shape(val(b)))
            throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                        shape_str(val(a).shape) + " vs " + shape_str(val(b).shape));
    }

    void accum(int a, const Tensor& g) {
        auto& ga = grad(a);
        for (size_t i = 0; i < ga.size(); ++i) ga.v[i] += g.v[i];
    }
    void accum_scaled(int a, const Tensor& g, double c) {
        auto& ga = grad(a);
        for (size_t i = 0; i < ga.size(); ++i) ga.v[i] += c * g.v[i];
    }

    ParamStore* store_;
    bool record_;
    std::vector<Node> nodes_;
    std::vector<std::function<void()>> back_;
};

}  // namespace stemgen
