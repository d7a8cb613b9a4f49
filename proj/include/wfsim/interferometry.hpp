#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "wfsim/basis.hpp"
#include "wfsim/optics.hpp"

namespace wfsim {

using ComplexField = std::vector<cplx>;

// The three interferometric shifts: 0, 2pi/3, 4pi/3.
struct PhaseShifts {
    static constexpr std::size_t count = 3;
    static constexpr std::array<double, 3> deltas{0.0, two_pi / 3.0, 2.0 * two_pi / 3.0};
};

// 3N intensity measurements, stored column-major by shift (three length-n
// vectors) to mirror the linear systems Phi x_m = I_m.
struct InterferogramSet {
    std::size_t n = 0;
    std::array<std::vector<double>, 3> by_shift;
    double exposure_ms = 0.0;
    std::string basis;    // "canonical" | "hadamard"
    std::string ordering; // storage order of the elements
    double saturation_fraction = 0.0;

    double& at(std::size_t element, std::size_t shift) { return by_shift[shift][element]; }
    double at(std::size_t element, std::size_t shift) const { return by_shift[shift][element]; }

    void write_csv(std::ostream& os) const {
        os << "element,shift_index,intensity\n";
        char buf[64];
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t m = 0; m < 3; ++m) {
                std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g\n", i, m, by_shift[m][i]);
                os << buf;
            }
    }

    static InterferogramSet read_csv(std::istream& is) {
        InterferogramSet set;
        std::string line;
        if (!std::getline(is, line) || line.rfind("element,shift_index,intensity", 0) != 0)
            throw std::runtime_error("interferogram csv: bad header");
        std::vector<std::array<double, 3>> rows;
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            std::istringstream ss(line);
            std::size_t e = 0, m = 0;
            double v = 0.0;
            char comma;
            if (!(ss >> e >> comma >> m >> comma >> v) || m > 2)
                throw std::runtime_error("interferogram csv: bad row '" + line + "'");
            if (e >= rows.size()) rows.resize(e + 1, {0.0, 0.0, 0.0});
            rows[e][m] = v;
        }
        set.n = rows.size();
        for (std::size_t m = 0; m < 3; ++m) {
            set.by_shift[m].resize(set.n);
            for (std::size_t i = 0; i < set.n; ++i) set.by_shift[m][i] = rows[i][m];
        }
        return set;
    }
};

// ---------------------------------------------------------------------------
// Measurement: for each basis element and each shift, add the reference beam
// to the element's focal amplitude and detect the intensity at the single
// detection pixel. Noise streams are keyed by (natural element id, shift), so
// results do not depend on measurement order.

inline InterferogramSet measure(const BenchState& bench, const CellSums& cs,
                                const BasisMatrix& basis, double exposure_ms,
                                std::uint64_t noise_key = 0) {
    const std::size_t n = basis.size();
    if (cs.n != n) throw std::invalid_argument("measure: basis size does not match cell sums");
    if (exposure_ms <= 0.0) throw std::invalid_argument("measure: exposure must be positive");

    InterferogramSet set;
    set.n = n;
    set.exposure_ms = exposure_ms;
    set.basis = basis.kind() == BasisKind::Canonical ? "canonical" : "hadamard";
    set.ordering = basis.ordering().name();
    for (auto& v : set.by_shift) v.resize(n);

    const DetectorModel& det = bench.detector();
    const cplx ref = bench.reference_amp();
    const double k = bench.rate_scale();

    // cis of the (possibly SLM-quantized) shifts
    std::array<cplx, 3> shift_cis;
    for (std::size_t m = 0; m < 3; ++m) {
        const double q = bench.quantize_phase(PhaseShifts::deltas[m]);
        shift_cis[m] = cplx(std::cos(q), std::sin(q));
    }

    // Per-element amplitudes. The vector of Hadamard row sums over the cell
    // contributions is H*c, i.e. one fast transform per quadrature.
    std::vector<double> hre, him;
    if (basis.kind() == BasisKind::Hadamard) {
        hre.resize(n);
        him.resize(n);
        for (std::size_t j = 0; j < n; ++j) {
            hre[j] = cs.with_prism[j].real();
            him[j] = cs.with_prism[j].imag();
        }
        fwht(std::span<double>(hre));
        fwht(std::span<double>(him));
    }

    std::size_t saturated = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t nat = basis.perm()[i];
        // Element amplitude before the shift; the +-pi cell offsets of a
        // Hadamard row commute with the global shift, so the shift is a
        // scalar factor on the row sum.
        cplx elem(0.0, 0.0);
        cplx static_leak(0.0, 0.0);
        if (basis.kind() == BasisKind::Hadamard) {
            elem = cplx(hre[nat], him[nat]);
        } else {
            elem = cs.with_prism[nat];
            static_leak = cs.flat_total - cs.flat[nat]; // undiffracted remainder
        }
        for (std::size_t m = 0; m < 3; ++m) {
            const cplx amp = ref + static_leak + shift_cis[m] * elem;
            const double rate = std::norm(amp) * k;
            rng::Stream st = rng::Stream::keyed(det.rng_seed, {0x6d656173u /* "meas" */, noise_key, nat, m});
            double raw = rate * exposure_ms;
            set.at(i, m) = detect_value(rate, det, exposure_ms, st);
            if (raw >= det.full_scale) ++saturated;
        }
    }
    set.saturation_fraction = static_cast<double>(saturated) / static_cast<double>(3 * n);
    return set;
}

// ---------------------------------------------------------------------------
// Three-step recombination, x = -(1/3)(x2 + x3 - 2 x1) + (i/sqrt 3)(x2 - x3).
// Any shift-independent additive constant cancels.

inline ComplexField combine_three_step(std::span<const double> x1, std::span<const double> x2,
                                       std::span<const double> x3) {
    if (x1.size() != x2.size() || x2.size() != x3.size())
        throw std::invalid_argument("combine_three_step: length mismatch");
    ComplexField out(x1.size());
    const double inv_sqrt3 = 1.0 / std::sqrt(3.0);
    for (std::size_t i = 0; i < x1.size(); ++i) {
        const double re = -(x2[i] + x3[i] - 2.0 * x1[i]) / 3.0;
        const double im = inv_sqrt3 * (x2[i] - x3[i]);
        out[i] = cplx(re, im);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Full reconstruction: invert the basis per shift, recombine, and fix the
// gauge. With e^{+i delta} shifts on the modulated arm the recombination
// yields the conjugate field, so the result is conjugated once here; the
// returned field is proportional to the ground-truth cell contributions and
// the correction to project is minus its argument.

inline ComplexField reconstruct_full(const BasisMatrix& basis, const InterferogramSet& igrams) {
    if (igrams.n != basis.size())
        throw std::invalid_argument("reconstruct_full: size mismatch");
    const std::size_t n = basis.size();
    std::array<std::vector<double>, 3> xm;
    for (std::size_t m = 0; m < 3; ++m) {
        xm[m].resize(n);
        basis.solve(std::span<const double>(igrams.by_shift[m]), std::span<double>(xm[m]));
    }
    ComplexField f = combine_three_step(xm[0], xm[1], xm[2]);
    for (auto& z : f) z = std::conj(z);
    return f;
}

// Normalized complex correlation |<a,b>| / (||a|| ||b||); the gauge-invariant
// reconstruction quality metric.
inline double field_correlation(std::span<const cplx> a, std::span<const cplx> b) {
    if (a.size() != b.size()) throw std::invalid_argument("field_correlation: length mismatch");
    cplx dot(0.0, 0.0);
    double na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * std::conj(b[i]);
        na += std::norm(a[i]);
        nb += std::norm(b[i]);
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::abs(dot) / std::sqrt(na * nb);
}

} // namespace wfsim
