#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "wfsim/rng.hpp"

namespace wfsim {

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline bool is_power_of_four(std::size_t n) {
    return is_power_of_two(n) && (std::countr_zero(n) % 2 == 0) && n >= 4;
}

inline std::size_t isqrt_exact(std::size_t n) {
    std::size_t s = static_cast<std::size_t>(1) << (std::countr_zero(n) / 2);
    return s;
}

// ---------------------------------------------------------------------------
// Ordering of Hadamard rows

enum class OrderingKind { Natural, Walsh, CakeCutting, Random };

struct Ordering {
    OrderingKind kind = OrderingKind::Natural;
    std::uint64_t seed = 0; // used by Random only

    std::string name() const {
        switch (kind) {
            case OrderingKind::Natural: return "natural";
            case OrderingKind::Walsh: return "walsh";
            case OrderingKind::CakeCutting: return "cake";
            case OrderingKind::Random: return "random:" + std::to_string(seed);
        }
        return "natural";
    }

    // Accepts "natural|walsh|cake|random:<seed>".
    static Ordering parse(const std::string& s) {
        if (s == "natural") return {OrderingKind::Natural, 0};
        if (s == "walsh") return {OrderingKind::Walsh, 0};
        if (s == "cake") return {OrderingKind::CakeCutting, 0};
        if (s.rfind("random:", 0) == 0) {
            const std::string tail = s.substr(7);
            if (tail.empty()) throw std::invalid_argument("ordering: random needs a seed, e.g. random:42");
            return {OrderingKind::Random, std::stoull(tail)};
        }
        if (s == "random") throw std::invalid_argument("ordering: random needs a seed, e.g. random:42");
        throw std::invalid_argument("unknown ordering '" + s + "' (want natural|walsh|cake|random:<seed>)");
    }
};

// ---------------------------------------------------------------------------
// Fast Walsh-Hadamard transform (unnormalized, natural/Sylvester order).
// In place, O(n log n); fwht(fwht(v)) == n * v.

inline void fwht(std::span<double> v) {
    const std::size_t n = v.size();
    if (!is_power_of_two(n)) throw std::invalid_argument("fwht: length must be a power of two");
    for (std::size_t len = 1; len < n; len <<= 1) {
        for (std::size_t i = 0; i < n; i += len << 1) {
            for (std::size_t j = i; j < i + len; ++j) {
                const double a = v[j];
                const double b = v[j + len];
                v[j] = a + b;
                v[j + len] = a - b;
            }
        }
    }
}

inline std::vector<double> fwht_copy(std::span<const double> v) {
    std::vector<double> out(v.begin(), v.end());
    fwht(std::span<double>(out));
    return out;
}

// Sylvester Hadamard entry, O(1): H(i,j) = (-1)^popcount(i & j).
inline int hadamard_entry(std::size_t i, std::size_t j) {
    return (std::popcount(i & j) & 1) ? -1 : 1;
}

// Number of adjacent sign flips in a +-1 row (the sequency).
inline std::size_t sign_changes(std::span<const int> row) {
    std::size_t c = 0;
    for (std::size_t i = 1; i < row.size(); ++i)
        if (row[i] != row[i - 1]) ++c;
    return c;
}

// Connected "+1" regions (4-connectivity) of a row-major side x side grid of
// +-1 entries. Iterative flood fill.
inline std::size_t connected_plus_regions(std::span<const int> cells, std::size_t side) {
    if (cells.size() != side * side) throw std::invalid_argument("connected_plus_regions: bad grid");
    std::vector<char> seen(cells.size(), 0);
    std::vector<std::size_t> stack;
    std::size_t regions = 0;
    for (std::size_t start = 0; start < cells.size(); ++start) {
        if (cells[start] != 1 || seen[start]) continue;
        ++regions;
        seen[start] = 1;
        stack.push_back(start);
        while (!stack.empty()) {
            const std::size_t p = stack.back();
            stack.pop_back();
            const std::size_t r = p / side, c = p % side;
            const std::size_t nbr[4] = {
                r > 0 ? p - side : p,
                r + 1 < side ? p + side : p,
                c > 0 ? p - 1 : p,
                c + 1 < side ? p + 1 : p,
            };
            for (std::size_t q : nbr) {
                if (q != p && cells[q] == 1 && !seen[q]) {
                    seen[q] = 1;
                    stack.push_back(q);
                }
            }
        }
    }
    return regions;
}

// ---------------------------------------------------------------------------
// BasisMatrix: canonical (identity) or Hadamard rows under a row permutation.
// Entries are generated on demand; only the permutation is stored.

enum class BasisKind { Canonical, Hadamard };

class BasisMatrix {
public:
    static BasisMatrix canonical(std::size_t n) { return BasisMatrix(n, BasisKind::Canonical); }
    static BasisMatrix hadamard(std::size_t n) { return BasisMatrix(n, BasisKind::Hadamard); }

    std::size_t size() const { return n_; }
    BasisKind kind() const { return kind_; }
    const std::vector<std::uint32_t>& perm() const { return perm_; }
    const Ordering& ordering() const { return ordering_; }

    // Entry of the *ordered* matrix: row i is natural row perm[i].
    int entry(std::size_t i, std::size_t j) const {
        if (i >= n_ || j >= n_) throw std::out_of_range("BasisMatrix::entry");
        const std::size_t nat = perm_[i];
        if (kind_ == BasisKind::Canonical) return nat == j ? 1 : 0;
        return hadamard_entry(nat, j);
    }

    std::vector<int> row(std::size_t i) const {
        std::vector<int> r(n_);
        const std::size_t nat = perm_[i];
        if (kind_ == BasisKind::Canonical) {
            std::fill(r.begin(), r.end(), 0);
            r[nat] = 1;
        } else {
            for (std::size_t j = 0; j < n_; ++j) r[j] = hadamard_entry(nat, j);
        }
        return r;
    }

    // y = Phi v. Hadamard path is perm-gather of the fast transform.
    void apply(std::span<const double> v, std::span<double> out) const {
        require_dims(v.size(), out.size());
        if (kind_ == BasisKind::Canonical) {
            for (std::size_t i = 0; i < n_; ++i) out[i] = v[perm_[i]];
            return;
        }
        std::vector<double> h(v.begin(), v.end());
        fwht(std::span<double>(h));
        for (std::size_t i = 0; i < n_; ++i) out[i] = h[perm_[i]];
    }

    // v = Phi^{-1} y, using H^{-1} = H/n for the symmetric Sylvester matrix.
    void solve(std::span<const double> y, std::span<double> out) const {
        require_dims(y.size(), out.size());
        if (kind_ == BasisKind::Canonical) {
            for (std::size_t i = 0; i < n_; ++i) out[perm_[i]] = y[i];
            return;
        }
        std::vector<double> w(n_, 0.0);
        for (std::size_t i = 0; i < n_; ++i) w[perm_[i]] = y[i];
        fwht(std::span<double>(w));
        const double inv = 1.0 / static_cast<double>(n_);
        for (std::size_t i = 0; i < n_; ++i) out[i] = w[i] * inv;
    }

    BasisMatrix with_perm(std::vector<std::uint32_t> p, Ordering o) const {
        BasisMatrix b = *this;
        if (p.size() != n_) throw std::invalid_argument("BasisMatrix: bad permutation size");
        std::vector<char> hit(n_, 0);
        for (auto x : p) {
            if (x >= n_ || hit[x]) throw std::invalid_argument("BasisMatrix: permutation is not a bijection");
            hit[x] = 1;
        }
        b.perm_ = std::move(p);
        b.ordering_ = o;
        return b;
    }

private:
    BasisMatrix(std::size_t n, BasisKind k) : n_(n), kind_(k) {
        if (!is_power_of_four(n))
            throw std::invalid_argument("basis size must be a power of 4 (got " + std::to_string(n) + ")");
        perm_.resize(n);
        std::iota(perm_.begin(), perm_.end(), 0u);
    }

    void require_dims(std::size_t a, std::size_t b) const {
        if (a != n_ || b != n_) throw std::invalid_argument("BasisMatrix: dimension mismatch");
    }

    std::size_t n_;
    BasisKind kind_;
    std::vector<std::uint32_t> perm_;
    Ordering ordering_{OrderingKind::Natural, 0};
};

// ---------------------------------------------------------------------------
// Orderings

inline BasisMatrix hadamard_natural(std::size_t n) { return BasisMatrix::hadamard(n); }

inline void require_natural_hadamard(const BasisMatrix& h, const char* who) {
    if (h.kind() != BasisKind::Hadamard)
        throw std::invalid_argument(std::string(who) + ": needs a Hadamard basis");
    for (std::size_t i = 0; i < h.size(); ++i)
        if (h.perm()[i] != i) throw std::invalid_argument(std::string(who) + ": needs natural order input");
}

// Rows sorted by ascending number of sign changes. For Sylvester matrices the
// result has exactly k sign changes in row k; that property is asserted.
inline BasisMatrix walsh_order(const BasisMatrix& h) {
    require_natural_hadamard(h, "walsh_order");
    const std::size_t n = h.size();
    std::vector<std::size_t> seq(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::vector<int> r = h.row(i);
        seq[i] = sign_changes(r);
    }
    std::vector<std::uint32_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0u);
    std::stable_sort(perm.begin(), perm.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return seq[a] < seq[b]; });
    for (std::size_t k = 0; k < n; ++k)
        if (seq[perm[k]] != k)
            throw std::logic_error("walsh_order: sequency ladder broken (expected row k to have k sign changes)");
    return h.with_perm(std::move(perm), {OrderingKind::Walsh, 0});
}

// Rows sorted by the number of 4-connected +1 regions in their 2d reshape
// (stable: ties keep natural order).
inline BasisMatrix cake_cutting_order(const BasisMatrix& h) {
    require_natural_hadamard(h, "cake_cutting_order");
    const std::size_t n = h.size();
    const std::size_t side = isqrt_exact(n);
    std::vector<std::size_t> blocks(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::vector<int> r = h.row(i);
        blocks[i] = connected_plus_regions(r, side);
    }
    std::vector<std::uint32_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0u);
    std::stable_sort(perm.begin(), perm.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return blocks[a] < blocks[b]; });
    return h.with_perm(std::move(perm), {OrderingKind::CakeCutting, 0});
}

// Seeded Fisher-Yates permutation of the rows.
inline BasisMatrix random_order(const BasisMatrix& h, std::uint64_t seed) {
    require_natural_hadamard(h, "random_order");
    const std::size_t n = h.size();
    std::vector<std::uint32_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0u);
    rng::Stream st = rng::Stream::keyed(seed, {0x6f7264u /* "ord" */});
    for (std::size_t i = n - 1; i > 0; --i) {
        const std::size_t j = st.next_below(i + 1);
        std::swap(perm[i], perm[j]);
    }
    return h.with_perm(std::move(perm), {OrderingKind::Random, seed});
}

inline BasisMatrix ordered_hadamard(std::size_t n, const Ordering& o) {
    BasisMatrix h = hadamard_natural(n);
    switch (o.kind) {
        case OrderingKind::Natural: return h;
        case OrderingKind::Walsh: return walsh_order(h);
        case OrderingKind::CakeCutting: return cake_cutting_order(h);
        case OrderingKind::Random: return random_order(h, o.seed);
    }
    return h;
}

// ---------------------------------------------------------------------------
// 2D representation

struct Grid2D {
    std::size_t side = 0;
    std::vector<double> values; // row-major

    double at(std::size_t r, std::size_t c) const { return values[r * side + c]; }
    std::vector<double> flatten() const { return values; }
};

inline Grid2D reshape_2d(std::span<const double> v) {
    if (!is_power_of_four(v.size()))
        throw std::invalid_argument("reshape_2d: length must be a power of 4");
    Grid2D g;
    g.side = isqrt_exact(v.size());
    g.values.assign(v.begin(), v.end());
    return g;
}

} // namespace wfsim
