#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "wfsim/basis.hpp"
#include "wfsim/fft.hpp"
#include "wfsim/field.hpp"
#include "wfsim/rng.hpp"

namespace wfsim {

constexpr double two_pi = 2.0 * std::numbers::pi;

inline double wrap_phase(double p) {
    p = std::fmod(p, two_pi);
    return p < 0 ? p + two_pi : p;
}

// ---------------------------------------------------------------------------
// Blazed prism: linear ramp along both axes, 2pi per period.
// The period must divide the screen side so the first order sits exactly on a
// detection bin; otherwise every super-pixel picks up a residual tilt.

struct PrismPhase {
    std::size_t period_px = 16;

    double at(std::size_t r, std::size_t c) const {
        const std::size_t m = (r + c) % period_px;
        return two_pi * static_cast<double>(m) / static_cast<double>(period_px);
    }
};

// ---------------------------------------------------------------------------
// Perturbations placed in the modulated arm.

struct GlassSlide {
    double edge_angle_rad = std::numbers::pi / 6.0; // edge through the aperture
    double phase_step = std::numbers::pi;
    double edge_offset_px = 0.0;                    // along the edge normal
};

struct RandomScreen {
    std::uint64_t seed = 1;
    std::size_t correlation_px = 4;
};

struct Perturbation {
    enum class Kind { None, Glass, Random };
    Kind kind = Kind::None;
    GlassSlide glass{};
    RandomScreen random{};

    static Perturbation none() { return {}; }
    static Perturbation glass_slide(GlassSlide g = {}) {
        Perturbation p;
        p.kind = Kind::Glass;
        p.glass = g;
        return p;
    }
    static Perturbation random_screen(RandomScreen r = {}) {
        Perturbation p;
        p.kind = Kind::Random;
        p.random = r;
        return p;
    }

    std::string tag() const {
        switch (kind) {
            case Kind::None: return "none";
            case Kind::Glass: return "glass";
            case Kind::Random: return "scatterer";
        }
        return "none";
    }

    // Phase screen in [0,2pi).
    Image render(std::size_t side) const {
        Image s(side, 0.0);
        if (kind == Kind::None) return s;
        if (kind == Kind::Glass) {
            const double ctr = 0.5 * static_cast<double>(side - 1);
            const double nr = -std::sin(glass.edge_angle_rad);
            const double nc = std::cos(glass.edge_angle_rad);
            for (std::size_t r = 0; r < side; ++r)
                for (std::size_t c = 0; c < side; ++c) {
                    const double d = (static_cast<double>(r) - ctr) * nr +
                                     (static_cast<double>(c) - ctr) * nc - glass.edge_offset_px;
                    if (d > 0) s.at(r, c) = wrap_phase(glass.phase_step);
                }
            return s;
        }
        // RandomScreen: i.i.d. uniform phases on a coarse grid of
        // correlation_px cells, nearest-neighbor upsampled.
        const std::size_t corr = std::max<std::size_t>(1, random.correlation_px);
        const std::size_t cells = (side + corr - 1) / corr;
        std::vector<double> grid(cells * cells);
        rng::Stream st = rng::Stream::keyed(random.seed, {0x70657274u /* "pert" */});
        for (auto& g : grid) g = st.next_unit() * two_pi;
        for (std::size_t r = 0; r < side; ++r)
            for (std::size_t c = 0; c < side; ++c)
                s.at(r, c) = grid[(r / corr) * cells + (c / corr)];
        return s;
    }
};

// ---------------------------------------------------------------------------
// Detector: exposure scaling, shot + read noise, clipping, quantization.

struct DetectorModel {
    double exposure_ms = 1.0;     // default; measurement ops pass their own
    unsigned quant_bits = 8;
    double full_scale = 1.0;
    bool shot_noise = true;
    double read_noise_sigma = 5e-4;   // intensity units, post-exposure
    double shot_noise_scale = 1e-4;   // shot variance = scale * full_scale * signal
    std::uint64_t rng_seed = 0;
    bool quantize = true;
    bool clip = true;

    static DetectorModel noiseless() {
        DetectorModel d;
        d.shot_noise = false;
        d.read_noise_sigma = 0.0;
        d.quantize = false;
        d.clip = false;
        return d;
    }
};

// One detected sample from a noiseless intensity rate (per-ms units).
inline double detect_value(double rate, const DetectorModel& det, double exposure_ms,
                           rng::Stream& noise) {
    double s = rate * exposure_ms;
    if (det.shot_noise)
        s += noise.next_gaussian() * std::sqrt(std::max(0.0, det.shot_noise_scale * det.full_scale * s));
    if (det.read_noise_sigma > 0.0)
        s += noise.next_gaussian() * det.read_noise_sigma;
    if (det.clip) s = std::clamp(s, 0.0, det.full_scale);
    if (det.quantize && det.quant_bits > 0) {
        const double levels = static_cast<double>((1u << det.quant_bits) - 1u);
        s = std::round(s / det.full_scale * levels) * det.full_scale / levels;
    }
    return s;
}

// Detected frame from a complex focal image. rate_scale converts |field|^2 to
// intensity rate per ms.
inline Image detect(const ComplexImage& field, const DetectorModel& det, double exposure_ms,
                    double rate_scale = 1.0, std::uint64_t noise_tag = 0) {
    if (exposure_ms <= 0.0) throw std::invalid_argument("detect: exposure must be positive");
    Image out(field.side);
    rng::Stream st = rng::Stream::keyed(det.rng_seed, {0x70686f74u /* "phot" */, noise_tag});
    for (std::size_t i = 0; i < field.v.size(); ++i)
        out.v[i] = detect_value(std::norm(field.v[i]) * rate_scale, det, exposure_ms, st);
    return out;
}

// ---------------------------------------------------------------------------
// SLM plane and encoded patterns

struct SlmConfig {
    std::size_t side_px = 512;
    double gauss_waist_px = 256.0;  // incident Gaussian envelope
    PrismPhase prism{};
    unsigned phase_quant_bits = 8;  // 0 = continuous phase
};

struct SlmPlane {
    std::size_t side_px = 0;
    std::vector<double> phase;      // [0,2pi)
    std::vector<double> amplitude;  // >= 0
};

// One displayed pattern, described per super-pixel: cells either carry the
// prism plus a constant offset or sit flat (undiffracting). The grid side is
// sqrt(n); 1 means the plain full-aperture prism.
struct Pattern {
    std::size_t cells_per_side = 1;
    std::vector<std::uint8_t> has_prism; // per cell
    std::vector<double> offset;          // per cell, radians
    double global_shift = 0.0;           // interferometric shift on prism cells

    std::size_t cells() const { return cells_per_side * cells_per_side; }

    Pattern shifted(double delta) const {
        Pattern p = *this;
        p.global_shift = delta;
        return p;
    }
};

inline std::size_t cells_side_for(std::size_t n) {
    if (n == 1) return 1;
    if (!is_power_of_four(n)) throw std::invalid_argument("basis size must be a power of 4");
    return isqrt_exact(n);
}

inline Pattern pattern_plain() {
    Pattern p;
    p.cells_per_side = 1;
    p.has_prism.assign(1, 1);
    p.offset.assign(1, 0.0);
    return p;
}

inline Pattern pattern_canonical(std::size_t n, std::size_t element) {
    if (element >= n) throw std::out_of_range("pattern_canonical: element index");
    Pattern p;
    p.cells_per_side = cells_side_for(n);
    p.has_prism.assign(n, 0);
    p.offset.assign(n, 0.0);
    p.has_prism[element] = 1;
    return p;
}

// +-1 row encoded as a pi offset on the -1 cells (single-step subtraction).
inline Pattern pattern_hadamard(std::span<const int> row) {
    Pattern p;
    p.cells_per_side = cells_side_for(row.size());
    p.has_prism.assign(row.size(), 1);
    p.offset.resize(row.size());
    for (std::size_t j = 0; j < row.size(); ++j) {
        if (row[j] != 1 && row[j] != -1)
            throw std::invalid_argument("pattern_hadamard: entries must be +-1");
        p.offset[j] = row[j] == 1 ? 0.0 : std::numbers::pi;
    }
    return p;
}

// Per-super-pixel correction phases on top of the prism.
inline Pattern pattern_correction(const Grid2D& phase_grid) {
    Pattern p;
    p.cells_per_side = phase_grid.side;
    const std::size_t n = phase_grid.side * phase_grid.side;
    p.has_prism.assign(n, 1);
    p.offset.resize(n);
    for (std::size_t j = 0; j < n; ++j) p.offset[j] = wrap_phase(phase_grid.values[j]);
    return p;
}

// ---------------------------------------------------------------------------
// Bench

// Per-super-pixel focal-plane contributions at the detection pixel, for a
// fixed (perturbation, n): with_prism[j] is the field from cell j alone when
// it carries the prism (dark elsewhere); flat[j] the same with the cell left
// flat. Any displayed pattern's amplitude at the detection pixel is an O(n)
// combination of these.
struct CellSums {
    std::size_t n = 0;
    std::vector<cplx> with_prism;
    std::vector<cplx> flat;
    cplx flat_total{0.0, 0.0};
};

class BenchState {
public:
    BenchState(SlmConfig slm, Perturbation pert, DetectorModel det)
        : slm_(slm), pert_(pert), det_(det) {
        const std::size_t s = slm_.side_px;
        if (!is_power_of_two(s)) throw std::invalid_argument("BenchState: side_px must be a power of two");
        if (slm_.prism.period_px < 2) throw std::invalid_argument("BenchState: prism period < 2 px");
        if (s % slm_.prism.period_px != 0)
            throw std::invalid_argument("BenchState: prism period must divide side_px");

        envelope_.resize(s * s);
        const double ctr = 0.5 * static_cast<double>(s - 1);
        const double w2 = slm_.gauss_waist_px * slm_.gauss_waist_px;
        for (std::size_t r = 0; r < s; ++r)
            for (std::size_t c = 0; c < s; ++c) {
                const double dr = static_cast<double>(r) - ctr;
                const double dc = static_cast<double>(c) - ctr;
                envelope_[r * s + c] = std::exp(-(dr * dr + dc * dc) / w2);
            }

        prism_q_.resize(s * s);
        for (std::size_t r = 0; r < s; ++r)
            for (std::size_t c = 0; c < s; ++c)
                prism_q_[r * s + c] = quantize_phase(slm_.prism.at(r, c));

        screen_ = pert_.render(s);

        // Locate the first-order spot on the clean bench and freeze it, then
        // normalize intensity rates so the unperturbed plain-prism peak is
        // 10 * full_scale per ms (a 0.1 ms exposure fills 100% of range).
        locate_detection_pixel();
        rate_scale_ = 10.0 * det_.full_scale / peak_unperturbed_;

        // Reference amplitude: balanced for fringe visibility at the first
        // basis size (n=64) and then held fixed, like the physical bench.
        const CellSums cs = cell_sums(64);
        double acc = 0.0;
        for (const cplx& x : cs.with_prism) acc += std::norm(x);
        reference_amp_ = cplx(std::sqrt(acc / 64.0), 0.0);
    }

    const SlmConfig& slm() const { return slm_; }
    const Perturbation& perturbation() const { return pert_; }
    const Image& perturbation_screen() const { return screen_; }
    const DetectorModel& detector() const { return det_; }
    DetectorModel& detector() { return det_; }

    std::size_t side() const { return slm_.side_px; }
    std::pair<std::size_t, std::size_t> detect_px() const { return {det_r_, det_c_}; }
    double rate_scale() const { return rate_scale_; }

    cplx reference_amp() const { return reference_amp_; }
    void set_reference_amp(cplx r) { reference_amp_ = r; }

    double quantize_phase(double p) const {
        p = wrap_phase(p);
        if (slm_.phase_quant_bits == 0) return p;
        const double levels = static_cast<double>(1u << slm_.phase_quant_bits);
        double q = std::round(p / two_pi * levels);
        if (q >= levels) q = 0.0;
        return q * two_pi / levels;
    }

    // Full pixel maps for a displayed pattern (the slow, photographic path).
    SlmPlane render(const Pattern& pat) const {
        const std::size_t s = slm_.side_px;
        const std::size_t cps = pat.cells_per_side;
        if (s % cps != 0)
            throw std::invalid_argument("render: side_px not divisible by sqrt(n)");
        const std::size_t w = s / cps;
        SlmPlane plane;
        plane.side_px = s;
        plane.amplitude = envelope_;
        plane.phase.resize(s * s);
        std::vector<double> cell_phase(pat.cells());
        for (std::size_t j = 0; j < pat.cells(); ++j)
            cell_phase[j] = quantize_phase(pat.offset[j] + pat.global_shift);
        for (std::size_t r = 0; r < s; ++r) {
            const std::size_t cr = r / w;
            for (std::size_t c = 0; c < s; ++c) {
                const std::size_t j = cr * cps + c / w;
                plane.phase[r * s + c] =
                    pat.has_prism[j] ? wrap_phase(prism_q_[r * s + c] + cell_phase[j]) : 0.0;
            }
        }
        return plane;
    }

    // Per-cell focal contributions at the detection pixel (one pass over the
    // screen; everything downstream is O(n) per displayed pattern).
    CellSums cell_sums(std::size_t n) const {
        const std::size_t s = slm_.side_px;
        const std::size_t cps = cells_side_for(n);
        if (s % cps != 0)
            throw std::invalid_argument("cell_sums: side_px not divisible by sqrt(n)");
        const std::size_t w = s / cps;
        CellSums cs;
        cs.n = n;
        cs.with_prism.assign(n, cplx(0.0, 0.0));
        cs.flat.assign(n, cplx(0.0, 0.0));
        const double fr = static_cast<double>(det_r_) - static_cast<double>(s) / 2.0;
        const double fc = static_cast<double>(det_c_) - static_cast<double>(s) / 2.0;
        for (std::size_t r = 0; r < s; ++r) {
            const std::size_t cr = (r / w) * cps;
            const double ar = -two_pi * fr * static_cast<double>(r) / static_cast<double>(s);
            for (std::size_t c = 0; c < s; ++c) {
                const double ang = ar - two_pi * fc * static_cast<double>(c) / static_cast<double>(s);
                const cplx k(std::cos(ang), std::sin(ang));
                const double a = envelope_[r * s + c];
                const double pp = screen_.v[r * s + c];
                const cplx flat = a * cplx(std::cos(pp), std::sin(pp)) * k;
                const double withp = pp + prism_q_[r * s + c];
                const cplx prism = a * cplx(std::cos(withp), std::sin(withp)) * k;
                const std::size_t j = cr + c / w;
                cs.with_prism[j] += prism;
                cs.flat[j] += flat;
            }
        }
        for (const cplx& f : cs.flat) cs.flat_total += f;
        return cs;
    }

    // Field at the detection pixel for a displayed pattern; exact (same DFT
    // coefficient the full propagation computes, cell-factorized).
    cplx focal_amplitude(const CellSums& cs, const Pattern& pat) const {
        if (pat.cells() != cs.n)
            throw std::invalid_argument("focal_amplitude: pattern/cell-sum size mismatch");
        cplx acc(0.0, 0.0);
        for (std::size_t j = 0; j < cs.n; ++j) {
            if (pat.has_prism[j]) {
                const double ph = quantize_phase(pat.offset[j] + pat.global_shift);
                acc += cplx(std::cos(ph), std::sin(ph)) * cs.with_prism[j];
            } else {
                acc += cs.flat[j];
            }
        }
        return acc;
    }

private:
    void locate_detection_pixel();

    SlmConfig slm_;
    Perturbation pert_;
    DetectorModel det_;
    std::vector<double> envelope_;
    std::vector<double> prism_q_;
    Image screen_;
    std::size_t det_r_ = 0, det_c_ = 0;
    double peak_unperturbed_ = 1.0;
    double rate_scale_ = 1.0;
    cplx reference_amp_{0.0, 0.0};
};

// ---------------------------------------------------------------------------
// Propagation: single Fraunhofer step, centered layout, unnormalized (so
// sum |in|^2 == sum |out|^2 / side^2).

inline ComplexImage propagate(const SlmPlane& slm, const Image* perturbation_screen = nullptr) {
    const std::size_t s = slm.side_px;
    if (perturbation_screen && perturbation_screen->side != s)
        throw std::invalid_argument("propagate: screen size mismatch");
    ComplexImage f(s);
    for (std::size_t i = 0; i < s * s; ++i) {
        const double ph = slm.phase[i] + (perturbation_screen ? perturbation_screen->v[i] : 0.0);
        f.v[i] = slm.amplitude[i] * cplx(std::cos(ph), std::sin(ph));
    }
    fft::transform_2d(f);
    fft::shift_center(f);
    return f;
}

inline void BenchState::locate_detection_pixel() {
    SlmPlane plain = render(pattern_plain());
    ComplexImage f = propagate(plain, nullptr); // unperturbed by construction
    double best = -1.0;
    for (std::size_t r = 0; r < f.side; ++r)
        for (std::size_t c = 0; c < f.side; ++c) {
            const double p = std::norm(f.at(r, c));
            if (p > best) {
                best = p;
                det_r_ = r;
                det_c_ = c;
            }
        }
    peak_unperturbed_ = best;
}

// ---------------------------------------------------------------------------
// Spec-named encode operations (full pixel maps).

inline SlmPlane encode_canonical(const BenchState& bench, std::size_t element, std::size_t n) {
    return bench.render(pattern_canonical(n, element));
}

inline SlmPlane encode_hadamard(const BenchState& bench, std::span<const int> row) {
    return bench.render(pattern_hadamard(row));
}

inline SlmPlane encode_correction(const BenchState& bench, const Grid2D& phase_grid) {
    return bench.render(pattern_correction(phase_grid));
}

// Perturbed photograph of a displayed pattern (no reference beam).
inline Image photograph(const BenchState& bench, const Pattern& pat, double exposure_ms,
                        std::uint64_t noise_tag) {
    SlmPlane slm = bench.render(pat);
    ComplexImage f = propagate(slm, &bench.perturbation_screen());
    return detect(f, bench.detector(), exposure_ms, bench.rate_scale(), noise_tag);
}

// Per-super-pixel complex contributions at the detection pixel: the ground
// truth the interferometric pipeline tries to recover (up to global scale).
inline std::vector<cplx> ground_truth_field(const BenchState& bench, std::size_t n) {
    return bench.cell_sums(n).with_prism;
}

} // namespace wfsim
