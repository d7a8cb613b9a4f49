#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "wfsim/field.hpp"

namespace wfsim::fft {

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 transform. Forward uses e^{-2pi i jk/n};
// inverse uses e^{+2pi i jk/n} and divides by n.
inline void transform(std::span<cplx> a, bool inverse = false) {
    const std::size_t n = a.size();
    if (!is_power_of_two(n)) throw std::invalid_argument("fft: length must be a power of two");
    if (n == 1) return;

    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }

    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = (inverse ? 2.0 : -2.0) * std::numbers::pi / static_cast<double>(len);
        const cplx wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            cplx w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const cplx u = a[i + k];
                const cplx t = a[i + k + len / 2] * w;
                a[i + k] = u + t;
                a[i + k + len / 2] = u - t;
                w *= wlen;
            }
        }
    }
    if (inverse) {
        const double inv = 1.0 / static_cast<double>(n);
        for (auto& x : a) x *= inv;
    }
}

// 2D transform over a square image, rows then columns.
inline void transform_2d(ComplexImage& img, bool inverse = false) {
    const std::size_t s = img.side;
    for (std::size_t r = 0; r < s; ++r)
        transform(std::span<cplx>(img.v.data() + r * s, s), inverse);
    std::vector<cplx> col(s);
    for (std::size_t c = 0; c < s; ++c) {
        for (std::size_t r = 0; r < s; ++r) col[r] = img.at(r, c);
        transform(std::span<cplx>(col), inverse);
        for (std::size_t r = 0; r < s; ++r) img.at(r, c) = col[r];
    }
}

// Swap quadrants so that frequency (0,0) lands at (side/2, side/2).
inline void shift_center(ComplexImage& img) {
    const std::size_t s = img.side, h = s / 2;
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < s; ++c)
            std::swap(img.at(r, c), img.at((r + h) % s, (c + h) % s));
}

// Orthonormal DCT-II (forward) / DCT-III (inverse) pair for power-of-two
// lengths, computed through a single complex FFT (even/odd folding).
class Dct {
public:
    explicit Dct(std::size_t n) : n_(n) {
        if (!is_power_of_two(n) || n < 2)
            throw std::invalid_argument("Dct: length must be a power of two >= 2");
        twiddle_.resize(n);
        for (std::size_t k = 0; k < n; ++k) {
            const double ang = -std::numbers::pi * static_cast<double>(k) / (2.0 * static_cast<double>(n));
            twiddle_[k] = cplx(std::cos(ang), std::sin(ang));
        }
        scale0_ = std::sqrt(1.0 / static_cast<double>(n));
        scale_ = std::sqrt(2.0 / static_cast<double>(n));
    }

    std::size_t size() const { return n_; }

    // out_k = sigma_k * sum_j x_j cos(pi (2j+1) k / (2n)),  sigma_0 = sqrt(1/n), sigma_k = sqrt(2/n)
    void forward(std::span<const double> x, std::span<double> out) const {
        check(x.size(), out.size());
        std::vector<cplx> v(n_);
        fold(x, v);
        transform(std::span<cplx>(v));
        out[0] = v[0].real() * scale0_;
        for (std::size_t k = 1; k < n_; ++k)
            out[k] = (v[k] * twiddle_[k]).real() * scale_;
    }

    // Exact inverse of forward (orthonormal pair).
    void inverse(std::span<const double> s, std::span<double> out) const {
        check(s.size(), out.size());
        std::vector<cplx> w(n_);
        // Undo the orthonormal scaling, then invert the even/odd-folded FFT:
        // V_0 = T_0, V_k = (T_k - i T_{n-k}) e^{+i pi k/(2n)}, v = IFFT(V).
        const double c0 = static_cast<double>(n_) * scale0_;
        const double ck = 0.5 * static_cast<double>(n_) * scale_;
        w[0] = cplx(s[0] * c0, 0.0);
        for (std::size_t k = 1; k < n_; ++k)
            w[k] = cplx(s[k] * ck, -s[n_ - k] * ck) * std::conj(twiddle_[k]);
        transform(std::span<cplx>(w), true);
        for (std::size_t j = 0; j < n_ / 2; ++j) {
            out[2 * j] = w[j].real();
            out[2 * j + 1] = w[n_ - 1 - j].real();
        }
    }

private:
    void check(std::size_t a, std::size_t b) const {
        if (a != n_ || b != n_) throw std::invalid_argument("Dct: size mismatch");
    }
    static void fold(std::span<const double> x, std::vector<cplx>& v) {
        const std::size_t n = x.size();
        for (std::size_t j = 0; j < n / 2; ++j) {
            v[j] = cplx(x[2 * j], 0.0);
            v[n - 1 - j] = cplx(x[2 * j + 1], 0.0);
        }
    }

    std::size_t n_;
    std::vector<cplx> twiddle_;
    double scale0_, scale_;
};

} // namespace wfsim::fft
