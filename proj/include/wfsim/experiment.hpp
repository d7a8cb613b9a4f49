#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "wfsim/basis.hpp"
#include "wfsim/interferometry.hpp"
#include "wfsim/io.hpp"
#include "wfsim/optics.hpp"
#include "wfsim/solver.hpp"

namespace wfsim {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

struct ExposurePolicy {
    double cap_ms = 65.0;      // global maximum for interferometric exposures
    double spot_ms = 0.07;     // spot photographs (unperturbed peak -> 70% FS)
    double target_fill = 0.9;  // auto-exposure: brightest regular element -> 90% FS
    double hadamard_ms = -1.0; // explicit override; <= 0 means auto
    double canonical_ms = -1.0;
};

struct CsSettings {
    double sigma = -1.0; // residual tolerance; < 0 means noise-floor estimate
    SolverOptions solver{};
    Sparsifier sparsifier = Sparsifier::Dct1d;
};

struct ExperimentConfig {
    SlmConfig slm{};
    Perturbation perturbation = Perturbation::glass_slide();
    DetectorModel detector{};
    ExposurePolicy exposures{};
    std::vector<std::size_t> n_list{64, 256, 1024, 4096};
    std::vector<BasisKind> bases{BasisKind::Canonical, BasisKind::Hadamard};
    std::vector<Ordering> orderings{
        {OrderingKind::Natural, 0}, {OrderingKind::Walsh, 0}, {OrderingKind::CakeCutting, 0},
        {OrderingKind::Random, 1}};
    std::vector<double> cr_grid{0.02, 0.05, 0.10, 0.20, 0.40, 0.80};
    CsSettings cs{};
    std::size_t roi_px = 64;
    std::uint64_t master_seed = 1;
    std::string output_dir; // empty: keep everything in memory (tests)

    void validate() const {
        if (n_list.empty()) throw std::invalid_argument("config: n_list is empty");
        for (std::size_t n : n_list) {
            if (!is_power_of_four(n))
                throw std::invalid_argument("config: n=" + std::to_string(n) + " is not a power of 4");
            if (slm.side_px % isqrt_exact(n) != 0)
                throw std::invalid_argument("config: side_px not divisible by sqrt(n)");
        }
        for (double cr : cr_grid)
            if (!(cr > 0.0) || cr > 1.0)
                throw std::invalid_argument("config: cr values must lie in (0,1]");
    }
};

// ---------------------------------------------------------------------------
// One experiment outcome (a row of results.csv plus diagnostics).

struct RunRecord {
    std::string perturbation;
    std::size_t n = 0;
    std::string basis;
    std::string ordering;
    double cr = 1.0;
    std::uint64_t seed = 0;
    double exposure_ms = 0.0;
    double snr = 0.0;
    double max_corr = 0.0;
    double mean_uncorr = 0.0;
    std::size_t solver_iters = 0;
    bool converged = true;

    // diagnostics (JSON sidecars only, not part of the CSV schema)
    double correlation_vs_truth = 0.0;
    double saturation_fraction = 0.0;
    std::string uncorrected_image, corrected_image, phase_image;
    CsDiagnostics cs_diag{};
};

// ---------------------------------------------------------------------------
// SNR (max corrected over mean uncorrected inside a fixed window)

struct Roi {
    std::size_t r0 = 0, c0 = 0, rows = 0, cols = 0;
};

inline Roi roi_around(std::pair<std::size_t, std::size_t> center, std::size_t window,
                      std::size_t side) {
    const std::size_t half = window / 2;
    Roi roi;
    roi.r0 = center.first >= half ? center.first - half : 0;
    roi.c0 = center.second >= half ? center.second - half : 0;
    roi.rows = std::min(window, side - roi.r0);
    roi.cols = std::min(window, side - roi.c0);
    return roi;
}

inline double roi_max(const Image& img, const Roi& roi) {
    double m = 0.0;
    for (std::size_t r = roi.r0; r < roi.r0 + roi.rows; ++r)
        for (std::size_t c = roi.c0; c < roi.c0 + roi.cols; ++c)
            m = std::max(m, img.at(r, c));
    return m;
}

inline double roi_mean(const Image& img, const Roi& roi) {
    double acc = 0.0;
    for (std::size_t r = roi.r0; r < roi.r0 + roi.rows; ++r)
        for (std::size_t c = roi.c0; c < roi.c0 + roi.cols; ++c)
            acc += img.at(r, c);
    return acc / (static_cast<double>(roi.rows) * static_cast<double>(roi.cols));
}

inline double snr(const Image& corrected, const Image& uncorrected, const Roi& roi) {
    if (corrected.side != uncorrected.side) throw std::invalid_argument("snr: frame size mismatch");
    if (roi.r0 + roi.rows > corrected.side || roi.c0 + roi.cols > corrected.side || roi.rows == 0)
        throw std::invalid_argument("snr: roi out of bounds");
    const double mean = roi_mean(uncorrected, roi);
    if (mean <= 0.0) throw std::domain_error("snr: uncorrected mean is zero (degenerate baseline)");
    return roi_max(corrected, roi) / mean;
}

// ---------------------------------------------------------------------------
// Correction phase: with this pipeline's shift convention the reconstruction
// is proportional to the true cell field, so projecting minus its argument
// (the conjugate phase) aligns the cells.

inline Grid2D correction_phase(const ComplexField& field) {
    Grid2D g;
    g.side = isqrt_exact(field.size());
    if (g.side * g.side != field.size())
        throw std::invalid_argument("correction_phase: field length is not a square");
    g.values.resize(field.size());
    for (std::size_t j = 0; j < field.size(); ++j)
        g.values[j] = wrap_phase(-std::arg(field[j]));
    return g;
}

// Fails loudly if the recombination/projection sign convention is broken:
// on a tiny noiseless bench the conjugate-phase correction must beat both the
// opposite sign and the uncorrected spot.
inline void correction_sign_self_check() {
    SlmConfig slm;
    slm.side_px = 64;
    slm.gauss_waist_px = 32.0;
    slm.prism.period_px = 16;
    slm.phase_quant_bits = 0;
    GlassSlide g;
    g.edge_angle_rad = 0.35;
    g.phase_step = 1.9; // deliberately not pi: +-arg must differ
    g.edge_offset_px = 3.0;
    BenchState bench(slm, Perturbation::glass_slide(g), DetectorModel::noiseless());
    const std::size_t n = 16;
    const CellSums cs = bench.cell_sums(n);
    BasisMatrix basis = hadamard_natural(n);
    InterferogramSet ig = measure(bench, cs, basis, 1.0, 0);
    ComplexField f = reconstruct_full(basis, ig);

    auto corrected_power = [&](double sign) {
        Grid2D grid;
        grid.side = isqrt_exact(n);
        grid.values.resize(n);
        for (std::size_t j = 0; j < n; ++j) grid.values[j] = wrap_phase(sign * std::arg(f[j]));
        return std::norm(bench.focal_amplitude(cs, pattern_correction(grid)));
    };
    Grid2D zero;
    zero.side = isqrt_exact(n);
    zero.values.assign(n, 0.0);
    const double uncorr = std::norm(bench.focal_amplitude(cs, pattern_correction(zero)));
    const double with_conj = corrected_power(-1.0);
    const double with_plain = corrected_power(+1.0);
    if (!(with_conj > with_plain && with_conj > uncorr))
        throw std::logic_error("three-step sign convention self-check failed: "
                               "conjugate-phase correction did not win");
}

// ---------------------------------------------------------------------------
// Exposure schedule: explicit per-basis override or auto-calibration that
// puts the brightest regular element near target_fill of full scale, always
// capped. The cap is what starves the canonical basis at large n.

inline double interferometric_exposure(const BenchState& bench, const CellSums& cs,
                                       BasisKind kind, const ExposurePolicy& policy) {
    const double override_ms =
        kind == BasisKind::Hadamard ? policy.hadamard_ms : policy.canonical_ms;
    if (override_ms > 0.0) return std::min(policy.cap_ms, override_ms);

    const std::size_t n = cs.n;
    const double ref = std::abs(bench.reference_amp());
    double peak_amp = 0.0;
    if (kind == BasisKind::Hadamard) {
        std::vector<double> re(n), im(n);
        for (std::size_t j = 0; j < n; ++j) {
            re[j] = cs.with_prism[j].real();
            im[j] = cs.with_prism[j].imag();
        }
        fwht(std::span<double>(re));
        fwht(std::span<double>(im));
        for (std::size_t i = 1; i < n; ++i) // row 0 is the plain prism; let it saturate
            peak_amp = std::max(peak_amp, std::hypot(re[i], im[i]));
    } else {
        for (std::size_t j = 0; j < n; ++j) {
            const double leak = std::abs(cs.flat_total - cs.flat[j]);
            peak_amp = std::max(peak_amp, std::abs(cs.with_prism[j]) + leak);
        }
    }
    const double peak_rate = (ref + peak_amp) * (ref + peak_amp) * bench.rate_scale();
    if (peak_rate <= 0.0) return policy.cap_ms;
    const double fill = policy.target_fill * bench.detector().full_scale;
    return std::max(1e-9, std::min(policy.cap_ms, fill / peak_rate));
}

// Noise floor for basis-pursuit denoising: per-sample additive floor (read
// noise or the quantization step, whichever dominates) times sqrt(3M).
inline double cs_noise_floor(const DetectorModel& det, std::size_t m_rows) {
    double sample = det.read_noise_sigma;
    if (det.quantize && det.quant_bits > 0) {
        const double step = det.full_scale / static_cast<double>((1u << det.quant_bits) - 1u);
        sample = std::max(sample, step / std::sqrt(12.0));
    }
    if (!det.shot_noise && det.read_noise_sigma <= 0.0 && !det.quantize) return 0.0;
    return std::sqrt(3.0 * static_cast<double>(m_rows)) * sample;
}

// ---------------------------------------------------------------------------
// Output sink: writes images during a run; inert when no directory is set.

class OutputSink {
public:
    explicit OutputSink(std::string dir) : dir_(std::move(dir)) {
        if (!dir_.empty()) {
            io::ensure_dir(dir_);
            io::ensure_dir(dir_ + "/images");
            io::ensure_dir(dir_ + "/runs");
        }
    }

    bool active() const { return !dir_.empty(); }
    const std::string& dir() const { return dir_; }

    std::string write_intensity(const std::string& stem, const Image& img, double full_scale) {
        if (!active()) return {};
        const std::string rel = "images/" + stem + ".pgm";
        io::write_pgm(dir_ + "/" + rel, img, full_scale, 8);
        return rel;
    }

    std::string write_phase(const std::string& stem, const Grid2D& grid) {
        if (!active()) return {};
        Image img(grid.side);
        img.v = grid.values;
        const std::string rel = "images/" + stem + ".pgm";
        io::write_pgm(dir_ + "/" + rel, img, two_pi, 8);
        return rel;
    }

    void write_text(const std::string& rel, const std::string& content) {
        if (!active()) return;
        io::write_text_file(dir_ + "/" + rel, content);
    }

private:
    std::string dir_;
};

inline std::string sanitize_token(std::string s) {
    for (char& c : s)
        if (c == ':' || c == '/' || c == ' ') c = '-';
    return s;
}

inline std::string run_stem(const std::string& pert, std::size_t n, const std::string& basis,
                            const std::string& ordering, double cr) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%06.2f", cr * 100.0);
    return pert + "_n" + std::to_string(n) + "_" + basis + "_" + sanitize_token(ordering) +
           "_cr" + buf;
}

namespace detail {

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t job_seed(std::uint64_t master, const std::string& pert, std::size_t n,
                              const std::string& basis, const std::string& ordering, double cr) {
    return rng::mix_key(master, {fnv1a(pert), n, fnv1a(basis), fnv1a(ordering),
                                 static_cast<std::uint64_t>(std::llround(cr * 1e6))});
}

} // namespace detail

// ---------------------------------------------------------------------------
// Sweeps

// Baseline, 3N measurement, full reconstruction, correction, SNR; one record
// per (n, basis).
inline std::vector<RunRecord> run_full(const ExperimentConfig& cfg) {
    cfg.validate();
    correction_sign_self_check();

    DetectorModel det = cfg.detector;
    det.rng_seed = cfg.master_seed;
    BenchState bench(cfg.slm, cfg.perturbation, det);
    OutputSink sink(cfg.output_dir);
    const std::string pert = cfg.perturbation.tag();

    std::vector<RunRecord> records;
    for (std::size_t n : cfg.n_list) {
        const CellSums cs = bench.cell_sums(n);
        const Image uncorr = photograph(bench, pattern_plain(), cfg.exposures.spot_ms,
                                        rng::mix_key(cfg.master_seed, {detail::fnv1a("uncorr"), n}));
        const Roi roi = roi_around(bench.detect_px(), cfg.roi_px, bench.side());
        const std::string uncorr_path = sink.write_intensity(
            pert + "_n" + std::to_string(n) + "_uncorrected", uncorr, det.full_scale);

        for (BasisKind kind : cfg.bases) {
            const std::string basis_name = kind == BasisKind::Canonical ? "canonical" : "hadamard";
            BasisMatrix basis =
                kind == BasisKind::Canonical ? BasisMatrix::canonical(n) : hadamard_natural(n);
            const double exposure = interferometric_exposure(bench, cs, kind, cfg.exposures);
            const std::uint64_t seed =
                detail::job_seed(cfg.master_seed, pert, n, basis_name, "natural", 1.0);

            InterferogramSet ig = measure(bench, cs, basis, exposure, seed);
            ComplexField field = reconstruct_full(basis, ig);
            Grid2D grid = correction_phase(field);
            const Image corr = photograph(bench, pattern_correction(grid), cfg.exposures.spot_ms,
                                          rng::mix_key(seed, {detail::fnv1a("corr")}));

            RunRecord rec;
            rec.perturbation = pert;
            rec.n = n;
            rec.basis = basis_name;
            rec.ordering = "natural";
            rec.cr = 1.0;
            rec.seed = seed;
            rec.exposure_ms = exposure;
            rec.max_corr = roi_max(corr, roi);
            rec.mean_uncorr = roi_mean(uncorr, roi);
            if (rec.mean_uncorr <= 0.0)
                throw std::domain_error("run_full: uncorrected mean is zero (degenerate baseline)");
            rec.snr = rec.max_corr / rec.mean_uncorr;
            rec.correlation_vs_truth = field_correlation(field, cs.with_prism);
            rec.saturation_fraction = ig.saturation_fraction;
            rec.uncorrected_image = uncorr_path;
            const std::string stem = run_stem(pert, n, basis_name, "natural", 1.0);
            rec.corrected_image = sink.write_intensity(stem + "_corrected", corr, det.full_scale);
            rec.phase_image = sink.write_phase(stem + "_phase", grid);
            records.push_back(std::move(rec));
        }
    }
    return records;
}

// Measure the natural Hadamard basis once per n, then reorder in post for
// every (ordering, cr) and reconstruct by basis pursuit.
inline std::vector<RunRecord> run_cs_sweep(const ExperimentConfig& cfg) {
    cfg.validate();
    correction_sign_self_check();
    if (cfg.cr_grid.empty()) throw std::invalid_argument("run_cs_sweep: empty cr grid");

    DetectorModel det = cfg.detector;
    det.rng_seed = cfg.master_seed;
    BenchState bench(cfg.slm, cfg.perturbation, det);
    OutputSink sink(cfg.output_dir);
    const std::string pert = cfg.perturbation.tag();

    std::vector<RunRecord> records;
    for (std::size_t n : cfg.n_list) {
        const CellSums cs = bench.cell_sums(n);
        const Image uncorr = photograph(bench, pattern_plain(), cfg.exposures.spot_ms,
                                        rng::mix_key(cfg.master_seed, {detail::fnv1a("uncorr"), n}));
        const Roi roi = roi_around(bench.detect_px(), cfg.roi_px, bench.side());
        const std::string uncorr_path = sink.write_intensity(
            pert + "_n" + std::to_string(n) + "_uncorrected", uncorr, det.full_scale);

        BasisMatrix natural = hadamard_natural(n);
        const double exposure =
            interferometric_exposure(bench, cs, BasisKind::Hadamard, cfg.exposures);
        const std::uint64_t measure_seed =
            detail::job_seed(cfg.master_seed, pert, n, "hadamard", "natural", 1.0);
        InterferogramSet ig = measure(bench, cs, natural, exposure, measure_seed);

        if (sink.active()) {
            std::ostringstream csv;
            ig.write_csv(csv);
            sink.write_text("runs/" + pert + "_n" + std::to_string(n) + "_interferograms.csv",
                            csv.str());
        }

        for (const Ordering& ord : cfg.orderings) {
            BasisMatrix basis = ordered_hadamard(n, ord);
            for (double cr : cfg.cr_grid) {
                const std::size_t m_rows = std::max<std::size_t>(
                    1, static_cast<std::size_t>(std::llround(cr * static_cast<double>(n))));
                const double sigma = cfg.cs.sigma >= 0.0 ? cfg.cs.sigma : cs_noise_floor(det, m_rows);
                CsDiagnostics diag;
                ComplexField field = cs_reconstruct(ig, basis, cr, sigma, cfg.cs.solver, &diag,
                                                    cfg.cs.sparsifier);
                Grid2D grid = correction_phase(field);
                const std::uint64_t seed =
                    detail::job_seed(cfg.master_seed, pert, n, "hadamard", ord.name(), cr);
                const Image corr = photograph(bench, pattern_correction(grid), cfg.exposures.spot_ms,
                                              rng::mix_key(seed, {detail::fnv1a("corr")}));

                RunRecord rec;
                rec.perturbation = pert;
                rec.n = n;
                rec.basis = "hadamard";
                rec.ordering = ord.name();
                rec.cr = cr;
                rec.seed = seed;
                rec.exposure_ms = exposure;
                rec.max_corr = roi_max(corr, roi);
                rec.mean_uncorr = roi_mean(uncorr, roi);
                if (rec.mean_uncorr <= 0.0)
                    throw std::domain_error("run_cs_sweep: degenerate uncorrected baseline");
                rec.snr = rec.max_corr / rec.mean_uncorr;
                rec.correlation_vs_truth = field_correlation(field, cs.with_prism);
                rec.saturation_fraction = ig.saturation_fraction;
                rec.solver_iters = diag.iterations;
                rec.converged = diag.converged;
                rec.cs_diag = std::move(diag);
                rec.uncorrected_image = uncorr_path;
                const std::string stem = run_stem(pert, n, "hadamard", ord.name(), cr);
                rec.corrected_image = sink.write_intensity(stem + "_corrected", corr, det.full_scale);
                rec.phase_image = sink.write_phase(stem + "_phase", grid);
                records.push_back(std::move(rec));
            }
        }
    }
    return records;
}

// ---------------------------------------------------------------------------
// Emission

inline std::string records_to_csv(const std::vector<RunRecord>& records) {
    std::string out = "perturbation,n,basis,ordering,cr,seed,exposure_ms,snr,max_corr,"
                      "mean_uncorr,solver_iters,converged\n";
    char buf[256];
    for (const RunRecord& r : records) {
        std::snprintf(buf, sizeof buf, "%s,%zu,%s,%s,%.6g,%llu,%.6g,%.10g,%.10g,%.10g,%zu,%d\n",
                      r.perturbation.c_str(), r.n, r.basis.c_str(), r.ordering.c_str(), r.cr,
                      static_cast<unsigned long long>(r.seed), r.exposure_ms, r.snr, r.max_corr,
                      r.mean_uncorr, r.solver_iters, r.converged ? 1 : 0);
        out += buf;
    }
    return out;
}

inline json record_to_json(const RunRecord& r) {
    json j{{"perturbation", r.perturbation},
           {"n", r.n},
           {"basis", r.basis},
           {"ordering", r.ordering},
           {"cr", r.cr},
           {"seed", r.seed},
           {"exposure_ms", r.exposure_ms},
           {"snr", r.snr},
           {"max_corr", r.max_corr},
           {"mean_uncorr", r.mean_uncorr},
           {"solver_iters", r.solver_iters},
           {"converged", r.converged},
           {"correlation_vs_truth", r.correlation_vs_truth},
           {"saturation_fraction", r.saturation_fraction},
           {"images",
            {{"uncorrected", r.uncorrected_image},
             {"corrected", r.corrected_image},
             {"phase", r.phase_image}}}};
    if (r.solver_iters > 0) {
        j["solver"] = {{"residual_norm", r.cs_diag.residual_norm},
                       {"tau_final", r.cs_diag.tau_final},
                       {"tau_path", r.cs_diag.tau_path},
                       {"residual_path", r.cs_diag.residual_path}};
    }
    return j;
}

// results.csv (written through a .partial marker), one JSON per run.
inline void emit(const std::vector<RunRecord>& records, const std::string& dir) {
    io::ensure_dir(dir);
    io::ensure_dir(dir + "/runs");
    const std::string partial = dir + "/results.csv.partial";
    io::write_text_file(partial, records_to_csv(records));
    std::error_code ec;
    std::filesystem::rename(partial, dir + "/results.csv", ec);
    if (ec) throw std::runtime_error("emit: cannot finalize results.csv: " + ec.message());
    for (const RunRecord& r : records) {
        const std::string stem = run_stem(r.perturbation, r.n, r.basis, r.ordering, r.cr);
        io::write_text_file(dir + "/runs/" + stem + ".json", record_to_json(r).dump(2) + "\n");
    }
}

// ---------------------------------------------------------------------------
// Config serialization

inline json config_to_json(const ExperimentConfig& c) {
    json pert;
    switch (c.perturbation.kind) {
        case Perturbation::Kind::None: pert = {{"type", "none"}}; break;
        case Perturbation::Kind::Glass:
            pert = {{"type", "glass"},
                    {"edge_angle_deg", c.perturbation.glass.edge_angle_rad * 180.0 / std::numbers::pi},
                    {"phase_step_rad", c.perturbation.glass.phase_step},
                    {"edge_offset_px", c.perturbation.glass.edge_offset_px}};
            break;
        case Perturbation::Kind::Random:
            pert = {{"type", "scatterer"},
                    {"seed", c.perturbation.random.seed},
                    {"correlation_px", c.perturbation.random.correlation_px}};
            break;
    }
    std::vector<std::string> bases;
    for (BasisKind k : c.bases) bases.push_back(k == BasisKind::Canonical ? "canonical" : "hadamard");
    std::vector<std::string> orderings;
    for (const Ordering& o : c.orderings) orderings.push_back(o.name());
    return json{
        {"slm",
         {{"side_px", c.slm.side_px},
          {"gauss_waist_px", c.slm.gauss_waist_px},
          {"prism_period_px", c.slm.prism.period_px},
          {"phase_quant_bits", c.slm.phase_quant_bits}}},
        {"perturbation", pert},
        {"detector",
         {{"quant_bits", c.detector.quant_bits},
          {"full_scale", c.detector.full_scale},
          {"shot_noise", c.detector.shot_noise},
          {"read_noise_sigma", c.detector.read_noise_sigma},
          {"shot_noise_scale", c.detector.shot_noise_scale},
          {"quantize", c.detector.quantize},
          {"clip", c.detector.clip}}},
        {"exposures",
         {{"cap_ms", c.exposures.cap_ms},
          {"spot_ms", c.exposures.spot_ms},
          {"target_fill", c.exposures.target_fill},
          {"hadamard_ms", c.exposures.hadamard_ms},
          {"canonical_ms", c.exposures.canonical_ms}}},
        {"n_list", c.n_list},
        {"bases", bases},
        {"orderings", orderings},
        {"cr_grid", c.cr_grid},
        {"cs",
         {{"sigma", c.cs.sigma},
          {"max_iters", c.cs.solver.max_iters},
          {"opt_tol", c.cs.solver.opt_tol},
          {"pareto_tol", c.cs.solver.pareto_tol},
          {"ls_memory", c.cs.solver.ls_memory},
          {"sparsifier", c.cs.sparsifier == Sparsifier::Dct1d ? "dct1d" : "dct2d"}}},
        {"roi_px", c.roi_px},
        {"master_seed", c.master_seed},
        {"output_dir", c.output_dir}};
}

inline ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig c;
    if (j.contains("slm")) {
        const json& s = j.at("slm");
        c.slm.side_px = s.value("side_px", c.slm.side_px);
        c.slm.gauss_waist_px = s.value("gauss_waist_px", c.slm.gauss_waist_px);
        c.slm.prism.period_px = s.value("prism_period_px", c.slm.prism.period_px);
        c.slm.phase_quant_bits = s.value("phase_quant_bits", c.slm.phase_quant_bits);
    }
    if (j.contains("perturbation")) {
        const json& p = j.at("perturbation");
        const std::string type = p.value("type", "glass");
        if (type == "none") {
            c.perturbation = Perturbation::none();
        } else if (type == "glass") {
            GlassSlide g;
            g.edge_angle_rad = p.value("edge_angle_deg", 30.0) * std::numbers::pi / 180.0;
            g.phase_step = p.value("phase_step_rad", g.phase_step);
            g.edge_offset_px = p.value("edge_offset_px", g.edge_offset_px);
            c.perturbation = Perturbation::glass_slide(g);
        } else if (type == "scatterer" || type == "random") {
            RandomScreen r;
            r.seed = p.value("seed", r.seed);
            r.correlation_px = p.value("correlation_px", r.correlation_px);
            c.perturbation = Perturbation::random_screen(r);
        } else {
            throw std::invalid_argument("config: unknown perturbation type '" + type + "'");
        }
    }
    if (j.contains("detector")) {
        const json& d = j.at("detector");
        c.detector.quant_bits = d.value("quant_bits", c.detector.quant_bits);
        c.detector.full_scale = d.value("full_scale", c.detector.full_scale);
        c.detector.shot_noise = d.value("shot_noise", c.detector.shot_noise);
        c.detector.read_noise_sigma = d.value("read_noise_sigma", c.detector.read_noise_sigma);
        c.detector.shot_noise_scale = d.value("shot_noise_scale", c.detector.shot_noise_scale);
        c.detector.quantize = d.value("quantize", c.detector.quantize);
        c.detector.clip = d.value("clip", c.detector.clip);
    }
    if (j.contains("exposures")) {
        const json& e = j.at("exposures");
        c.exposures.cap_ms = e.value("cap_ms", c.exposures.cap_ms);
        c.exposures.spot_ms = e.value("spot_ms", c.exposures.spot_ms);
        c.exposures.target_fill = e.value("target_fill", c.exposures.target_fill);
        c.exposures.hadamard_ms = e.value("hadamard_ms", c.exposures.hadamard_ms);
        c.exposures.canonical_ms = e.value("canonical_ms", c.exposures.canonical_ms);
    }
    if (j.contains("n_list")) c.n_list = j.at("n_list").get<std::vector<std::size_t>>();
    if (j.contains("bases")) {
        c.bases.clear();
        for (const auto& b : j.at("bases")) {
            const std::string s = b.get<std::string>();
            if (s == "canonical") c.bases.push_back(BasisKind::Canonical);
            else if (s == "hadamard") c.bases.push_back(BasisKind::Hadamard);
            else throw std::invalid_argument("config: unknown basis '" + s + "'");
        }
    }
    if (j.contains("orderings")) {
        c.orderings.clear();
        for (const auto& o : j.at("orderings")) c.orderings.push_back(Ordering::parse(o.get<std::string>()));
    }
    if (j.contains("cr_grid")) c.cr_grid = j.at("cr_grid").get<std::vector<double>>();
    if (j.contains("cs")) {
        const json& s = j.at("cs");
        c.cs.sigma = s.value("sigma", c.cs.sigma);
        c.cs.solver.max_iters = s.value("max_iters", c.cs.solver.max_iters);
        c.cs.solver.opt_tol = s.value("opt_tol", c.cs.solver.opt_tol);
        c.cs.solver.pareto_tol = s.value("pareto_tol", c.cs.solver.pareto_tol);
        c.cs.solver.ls_memory = s.value("ls_memory", c.cs.solver.ls_memory);
        const std::string sp = s.value("sparsifier", "dct1d");
        if (sp == "dct1d") c.cs.sparsifier = Sparsifier::Dct1d;
        else if (sp == "dct2d") c.cs.sparsifier = Sparsifier::Dct2d;
        else throw std::invalid_argument("config: unknown sparsifier '" + sp + "'");
    }
    c.roi_px = j.value("roi_px", c.roi_px);
    c.master_seed = j.value("master_seed", c.master_seed);
    c.output_dir = j.value("output_dir", c.output_dir);
    return c;
}

// ---------------------------------------------------------------------------
// Replay: rebuild the bench from a resolved config and reconstruct from saved
// interferograms instead of re-simulating the measurements.

inline std::vector<RunRecord> run_replay(const ExperimentConfig& cfg, const InterferogramSet& ig,
                                         std::size_t n) {
    cfg.validate();
    if (ig.n != n) throw std::invalid_argument("run_replay: interferogram size mismatch");
    DetectorModel det = cfg.detector;
    det.rng_seed = cfg.master_seed;
    BenchState bench(cfg.slm, cfg.perturbation, det);
    OutputSink sink(cfg.output_dir);
    const std::string pert = cfg.perturbation.tag();
    const CellSums cs = bench.cell_sums(n);
    const Image uncorr = photograph(bench, pattern_plain(), cfg.exposures.spot_ms,
                                    rng::mix_key(cfg.master_seed, {detail::fnv1a("uncorr"), n}));
    const Roi roi = roi_around(bench.detect_px(), cfg.roi_px, bench.side());
    const std::string uncorr_path =
        sink.write_intensity(pert + "_n" + std::to_string(n) + "_replay_uncorrected", uncorr,
                             det.full_scale);

    std::vector<RunRecord> records;
    auto push_record = [&](const std::string& basis_name, const std::string& ordering, double cr,
                           const ComplexField& field, const CsDiagnostics* diag) {
        Grid2D grid = correction_phase(field);
        const std::uint64_t seed = detail::job_seed(cfg.master_seed, pert, n, basis_name, ordering, cr);
        const Image corr = photograph(bench, pattern_correction(grid), cfg.exposures.spot_ms,
                                      rng::mix_key(seed, {detail::fnv1a("corr")}));
        RunRecord rec;
        rec.perturbation = pert;
        rec.n = n;
        rec.basis = basis_name;
        rec.ordering = ordering;
        rec.cr = cr;
        rec.seed = seed;
        rec.exposure_ms = ig.exposure_ms;
        rec.max_corr = roi_max(corr, roi);
        rec.mean_uncorr = roi_mean(uncorr, roi);
        if (rec.mean_uncorr <= 0.0) throw std::domain_error("run_replay: degenerate baseline");
        rec.snr = rec.max_corr / rec.mean_uncorr;
        rec.correlation_vs_truth = field_correlation(field, cs.with_prism);
        if (diag) {
            rec.solver_iters = diag->iterations;
            rec.converged = diag->converged;
            rec.cs_diag = *diag;
        }
        rec.uncorrected_image = uncorr_path;
        const std::string stem = "replay_" + run_stem(pert, n, basis_name, ordering, cr);
        rec.corrected_image = sink.write_intensity(stem + "_corrected", corr, det.full_scale);
        rec.phase_image = sink.write_phase(stem + "_phase", grid);
        records.push_back(std::move(rec));
    };

    if (ig.basis == "canonical") {
        BasisMatrix basis = BasisMatrix::canonical(n);
        push_record("canonical", "natural", 1.0, reconstruct_full(basis, ig), nullptr);
        return records;
    }
    BasisMatrix natural = hadamard_natural(n);
    push_record("hadamard", "natural", 1.0, reconstruct_full(natural, ig), nullptr);
    for (const Ordering& ord : cfg.orderings) {
        BasisMatrix basis = ordered_hadamard(n, ord);
        for (double cr : cfg.cr_grid) {
            const std::size_t m_rows = std::max<std::size_t>(
                1, static_cast<std::size_t>(std::llround(cr * static_cast<double>(n))));
            const double sigma = cfg.cs.sigma >= 0.0 ? cfg.cs.sigma : cs_noise_floor(det, m_rows);
            CsDiagnostics diag;
            ComplexField field =
                cs_reconstruct(ig, basis, cr, sigma, cfg.cs.solver, &diag, cfg.cs.sparsifier);
            push_record("hadamard", ord.name(), cr, field, &diag);
        }
    }
    return records;
}

} // namespace wfsim
