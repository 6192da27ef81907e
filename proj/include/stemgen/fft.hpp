#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace stemgen {

using cplx = std::complex<double>;

inline bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 Cooley-Tukey. All window sizes used by the
// pipeline are powers of two (win = 4*hop, hop a power of two).
inline void fft_pow2(std::vector<cplx>& a, bool inverse) {
    const int n = static_cast<int>(a.size());
    if (!is_pow2(n)) throw std::invalid_argument("fft_pow2: size not a power of two");
    for (int i = 1, j = 0; i < n; ++i) {
        int bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (int len = 2; len <= n; len <<= 1) {
        const double ang = 2.0 * std::numbers::pi / len * (inverse ? 1.0 : -1.0);
        const cplx wl(std::cos(ang), std::sin(ang));
        for (int i = 0; i < n; i += len) {
            cplx w(1.0);
            for (int k = 0; k < len / 2; ++k) {
                cplx u = a[i + k];
                cplx t = a[i + k + len / 2] * w;
                a[i + k] = u + t;
                a[i + k + len / 2] = u - t;
                w *= wl;
            }
        }
    }
    if (inverse)
        for (auto& x : a) x /= n;
}

// Naive DFT fallback for non power-of-two sizes.
inline void dft_naive(std::vector<cplx>& a, bool inverse) {
    const int n = static_cast<int>(a.size());
    std::vector<cplx> out(static_cast<size_t>(n));
    const double sgn = inverse ? 1.0 : -1.0;
    for (int k = 0; k < n; ++k) {
        cplx acc(0.0);
        for (int j = 0; j < n; ++j) {
            const double ang = sgn * 2.0 * std::numbers::pi * k * j / n;
            acc += a[static_cast<size_t>(j)] * cplx(std::cos(ang), std::sin(ang));
        }
        out[static_cast<size_t>(k)] = inverse ? acc / static_cast<double>(n) : acc;
    }
    a = std::move(out);
}

inline void fft(std::vector<cplx>& a, bool inverse = false) {
    if (is_pow2(static_cast<int>(a.size())))
        fft_pow2(a, inverse);
    else
        dft_naive(a, inverse);
}

// Real-input forward transform returning the n/2+1 non-redundant bins.
inline std::vector<cplx> rfft(const std::vector<double>& x) {
    std::vector<cplx> a(x.begin(), x.end());
    fft(a, false);
    a.resize(x.size() / 2 + 1);
    return a;
}

// Inverse of rfft: reconstructs a real signal of length n from n/2+1 bins.
inline std::vector<double> irfft(const std::vector<cplx>& bins, int n) {
    std::vector<cplx> a(static_cast<size_t>(n));
    const int nb = static_cast<int>(bins.size());
    for (int k = 0; k < nb && k < n; ++k) a[static_cast<size_t>(k)] = bins[static_cast<size_t>(k)];
    for (int k = 1; k < nb; ++k) {
        const int m = n - k;
        if (m > k && m < n) a[static_cast<size_t>(m)] = std::conj(bins[static_cast<size_t>(k)]);
    }
    fft(a, true);
    std::vector<double> out(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) out[static_cast<size_t>(i)] = a[static_cast<size_t>(i)].real();
    return out;
}

}  // namespace stemgen
