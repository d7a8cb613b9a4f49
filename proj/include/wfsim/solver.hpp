#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "wfsim/basis.hpp"
#include "wfsim/fft.hpp"
#include "wfsim/interferometry.hpp"
#include "wfsim/rng.hpp"

namespace wfsim {

// ---------------------------------------------------------------------------
// Matrix-free linear operator with adjoint.

class LinearOperator {
public:
    using Fn = std::function<void(std::span<const double>, std::span<double>)>;

    LinearOperator(std::size_t rows, std::size_t cols, Fn apply, Fn adjoint)
        : rows_(rows), cols_(cols), apply_(std::move(apply)), adjoint_(std::move(adjoint)) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    void apply(std::span<const double> in, std::span<double> out) const {
        if (in.size() != cols_ || out.size() != rows_)
            throw std::invalid_argument("LinearOperator::apply: dimension mismatch");
        apply_(in, out);
    }
    void adjoint(std::span<const double> in, std::span<double> out) const {
        if (in.size() != rows_ || out.size() != cols_)
            throw std::invalid_argument("LinearOperator::adjoint: dimension mismatch");
        adjoint_(in, out);
    }

private:
    std::size_t rows_, cols_;
    Fn apply_, adjoint_;
};

// <Theta u, v> == <u, Theta^T v> on random pairs, within rel_tol.
inline bool adjoint_test(const LinearOperator& op, std::size_t trials = 20, double rel_tol = 1e-8,
                         std::uint64_t seed = 7) {
    rng::Stream st = rng::Stream::keyed(seed, {0x61646au /* "adj" */});
    std::vector<double> u(op.cols()), v(op.rows()), au(op.rows()), atv(op.cols());
    for (std::size_t t = 0; t < trials; ++t) {
        for (auto& x : u) x = st.next_gaussian();
        for (auto& x : v) x = st.next_gaussian();
        op.apply(u, au);
        op.adjoint(v, atv);
        const double lhs = std::inner_product(au.begin(), au.end(), v.begin(), 0.0);
        const double rhs = std::inner_product(u.begin(), u.end(), atv.begin(), 0.0);
        const double scale = std::max({1e-300, std::abs(lhs), std::abs(rhs)});
        if (std::abs(lhs - rhs) > rel_tol * scale) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Sparsifying transform: orthonormal 1-D DCT over the length-N vector by
// default; optionally the separable 2-D DCT over the sqrt(N) x sqrt(N)
// reshape.

enum class Sparsifier { Dct1d, Dct2d };

class SparsifyingBasis {
public:
    SparsifyingBasis(std::size_t n, Sparsifier kind = Sparsifier::Dct1d)
        : n_(n), kind_(kind), side_(kind == Sparsifier::Dct2d ? isqrt_exact(n) : n),
          dct_(std::make_shared<fft::Dct>(side_)) {
        if (kind == Sparsifier::Dct2d && !is_power_of_four(n))
            throw std::invalid_argument("SparsifyingBasis: 2-D DCT needs n = 4^k");
    }

    std::size_t size() const { return n_; }

    // s = dct(x)
    void forward(std::span<const double> x, std::span<double> s) const {
        if (kind_ == Sparsifier::Dct1d) {
            dct_->forward(x, s);
            return;
        }
        separable(x, s, true);
    }

    // x = idct(s)
    void inverse(std::span<const double> s, std::span<double> x) const {
        if (kind_ == Sparsifier::Dct1d) {
            dct_->inverse(s, x);
            return;
        }
        separable(s, x, false);
    }

private:
    void separable(std::span<const double> in, std::span<double> out, bool fwd) const {
        const std::size_t m = side_;
        std::vector<double> tmp(n_), row(m), col(m), res(m);
        for (std::size_t r = 0; r < m; ++r) {
            std::copy(in.begin() + r * m, in.begin() + (r + 1) * m, row.begin());
            fwd ? dct_->forward(row, std::span<double>(res)) : dct_->inverse(row, std::span<double>(res));
            std::copy(res.begin(), res.end(), tmp.begin() + r * m);
        }
        for (std::size_t c = 0; c < m; ++c) {
            for (std::size_t r = 0; r < m; ++r) col[r] = tmp[r * m + c];
            fwd ? dct_->forward(col, std::span<double>(res)) : dct_->inverse(col, std::span<double>(res));
            for (std::size_t r = 0; r < m; ++r) out[r * m + c] = res[r];
        }
    }

    std::size_t n_;
    Sparsifier kind_;
    std::size_t side_;
    std::shared_ptr<fft::Dct> dct_;
};

// ---------------------------------------------------------------------------
// Sensing problem: minimize ||s||_1 s.t. ||Theta s - b||_2 <= sigma with
// Theta = Phi' Psi applied matrix-free.

struct SensingProblem {
    LinearOperator theta;
    std::vector<double> b;
    double sigma = 0.0;
};

// Theta rows are the first m_rows rows of the ordered Hadamard basis.
inline SensingProblem make_sensing_problem(const BasisMatrix& basis, std::size_t m_rows,
                                           std::vector<double> b, double sigma,
                                           Sparsifier sparsifier = Sparsifier::Dct1d) {
    if (basis.kind() != BasisKind::Hadamard)
        throw std::invalid_argument("make_sensing_problem: needs a Hadamard basis");
    const std::size_t n = basis.size();
    if (m_rows == 0 || m_rows > n) throw std::invalid_argument("make_sensing_problem: bad row count");
    if (b.size() != m_rows) throw std::invalid_argument("make_sensing_problem: rhs size mismatch");

    auto psi = std::make_shared<SparsifyingBasis>(n, sparsifier);
    auto perm = std::make_shared<std::vector<std::uint32_t>>(basis.perm());

    LinearOperator::Fn apply = [psi, perm, n, m_rows](std::span<const double> s, std::span<double> out) {
        std::vector<double> x(n);
        psi->inverse(s, x);
        fwht(std::span<double>(x));
        for (std::size_t i = 0; i < m_rows; ++i) out[i] = x[(*perm)[i]];
    };
    LinearOperator::Fn adjoint = [psi, perm, n, m_rows](std::span<const double> y, std::span<double> out) {
        std::vector<double> w(n, 0.0);
        for (std::size_t i = 0; i < m_rows; ++i) w[(*perm)[i]] = y[i];
        fwht(std::span<double>(w));
        psi->forward(w, out);
    };

    return SensingProblem{LinearOperator(m_rows, n, std::move(apply), std::move(adjoint)),
                          std::move(b), sigma};
}

// ---------------------------------------------------------------------------
// Euclidean projection onto the l1 ball of radius tau (sort-based threshold).

inline std::vector<double> project_l1_ball(std::span<const double> v, double tau) {
    if (tau < 0.0) throw std::invalid_argument("project_l1_ball: tau must be >= 0");
    std::vector<double> out(v.begin(), v.end());
    double l1 = 0.0;
    for (double x : out) l1 += std::abs(x);
    if (l1 <= tau) return out;
    if (tau == 0.0) {
        std::fill(out.begin(), out.end(), 0.0);
        return out;
    }
    std::vector<double> mag(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) mag[i] = std::abs(out[i]);
    std::sort(mag.begin(), mag.end(), std::greater<double>());
    double cumsum = 0.0, theta = 0.0;
    for (std::size_t k = 0; k < mag.size(); ++k) {
        cumsum += mag[k];
        const double t = (cumsum - tau) / static_cast<double>(k + 1);
        if (t >= mag[k] - 0.0) {
            cumsum -= mag[k];
            theta = (cumsum - tau) / static_cast<double>(k);
            break;
        }
        theta = t;
    }
    for (auto& x : out) {
        const double m = std::abs(x) - theta;
        x = m > 0.0 ? (x > 0.0 ? m : -m) : 0.0;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Basis pursuit (denoise): Pareto-curve Newton root finding over LASSO
// subproblems solved by nonmonotone spectral projected gradient.

struct SolverOptions {
    std::size_t max_iters = 0;  // total SPG iterations; 0 means 10*N
    double opt_tol = 1e-6;      // relative duality gap for subproblems
    double pareto_tol = 1e-4;   // relative residual tolerance at the root
    std::size_t ls_memory = 3;  // nonmonotone line-search history
};

struct SolverResult {
    std::vector<double> s;
    double residual_norm = 0.0;
    double tau_final = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
    std::vector<double> tau_path;
    std::vector<double> residual_path; // phi(tau) recorded at each Newton step
};

namespace detail {

inline double norm2(std::span<const double> v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc);
}

inline double norm_inf(std::span<const double> v) {
    double acc = 0.0;
    for (double x : v) acc = std::max(acc, std::abs(x));
    return acc;
}

} // namespace detail

inline SolverResult basis_pursuit(const SensingProblem& problem, const SolverOptions& opts = {}) {
    const LinearOperator& A = problem.theta;
    const std::size_t n = A.cols();
    const std::size_t m = A.rows();
    const double sigma = problem.sigma;
    if (sigma < 0.0) throw std::invalid_argument("basis_pursuit: sigma must be >= 0");
    if (problem.b.size() != m) throw std::invalid_argument("basis_pursuit: rhs size mismatch");

    const std::size_t max_iters = opts.max_iters ? opts.max_iters : 10 * n;
    const std::size_t ls_mem = std::max<std::size_t>(1, opts.ls_memory);
    constexpr double step_min = 1e-10, step_max = 1e10, armijo = 1e-4;

    SolverResult res;
    res.s.assign(n, 0.0);
    const double bnorm = detail::norm2(problem.b);

    auto at_root = [&](double rnorm) {
        return sigma > 0.0 ? rnorm <= sigma * (1.0 + opts.pareto_tol)
                           : rnorm <= opts.pareto_tol * bnorm;
    };

    if (bnorm == 0.0 || sigma >= bnorm) { // trivial solution
        res.residual_norm = bnorm;
        res.converged = true;
        res.tau_path.push_back(0.0);
        res.residual_path.push_back(bnorm);
        return res;
    }

    std::vector<double> r(problem.b);          // r = b - A s
    std::vector<double> atr(n);                // A^T r
    std::vector<double> g(n);                  // gradient of 0.5||As-b||^2 = -A^T r
    std::vector<double> s_try(n), r_try(m), atr_try(n);
    std::vector<double> fmem(ls_mem, 0.0);

    A.adjoint(r, atr);
    double f = 0.5 * bnorm * bnorm;
    for (std::size_t i = 0; i < n; ++i) g[i] = -atr[i];
    std::fill(fmem.begin(), fmem.end(), f);

    double tau = 0.0;
    double bb_step = 1.0;
    {
        const double gmax = detail::norm_inf(g);
        bb_step = gmax > 0.0 ? std::clamp(1.0 / gmax, step_min, step_max) : 1.0;
    }

    std::size_t iter = 0;
    bool out_of_budget = false;
    std::size_t stalls = 0;
    double prev_rnorm = -1.0;

    for (std::size_t newton = 0; newton < 200; ++newton) {
        const double rnorm = detail::norm2(r);
        res.tau_path.push_back(tau);
        res.residual_path.push_back(rnorm);
        if (at_root(rnorm)) {
            res.converged = true;
            break;
        }
        if (out_of_budget || iter >= max_iters) break;
        // no measurable progress since the last Newton step: the requested
        // tolerance is below what this arithmetic can deliver
        if (prev_rnorm >= 0.0 && rnorm >= prev_rnorm * (1.0 - 1e-12)) {
            if (++stalls >= 3) break;
        } else {
            stalls = 0;
        }
        prev_rnorm = rnorm;

        const double lambda = detail::norm_inf(atr);
        if (lambda <= 1e-14 * std::max(1.0, rnorm)) {
            // residual is orthogonal to the range: phi can't decrease further
            res.converged = at_root(rnorm);
            break;
        }
        const double dtau = (rnorm - sigma) * rnorm / lambda;
        if (!(dtau > 0.0) || dtau <= 1e-12 * std::max(tau, 1.0)) {
            res.converged = at_root(rnorm);
            break;
        }
        tau += dtau;

        // --- LASSO(tau) by nonmonotone SPG, warm-started from s ---
        f = 0.5 * rnorm * rnorm;
        std::fill(fmem.begin(), fmem.end(), f);
        while (iter < max_iters) {
            // subproblem optimality: duality gap of min 0.5||As-b||^2 on the tau-ball
            const double lam = detail::norm_inf(atr);
            double rdotrb = 0.0; // r . (r - b) = -r . (A s)
            for (std::size_t i = 0; i < m; ++i) rdotrb += r[i] * (r[i] - problem.b[i]);
            const double gap = std::abs(rdotrb + tau * lam);
            if (gap <= opts.opt_tol * std::max(1.0, f)) break;
            const double rn = detail::norm2(r);
            if (at_root(rn)) break; // global root reached inside subproblem

            ++iter;

            // projected backtracking along P(s - a g); gd carries the step
            // through the projection, so the Armijo test uses it directly
            const double fmax = *std::max_element(fmem.begin(), fmem.end());
            double step = bb_step;
            bool accepted = false;
            double fnew = f;
            for (int tries = 0; tries < 20; ++tries) {
                for (std::size_t i = 0; i < n; ++i) s_try[i] = res.s[i] - step * g[i];
                std::vector<double> proj = project_l1_ball(s_try, tau);
                A.apply(proj, r_try);
                for (std::size_t i = 0; i < m; ++i) r_try[i] = problem.b[i] - r_try[i];
                fnew = 0.0;
                for (double x : r_try) fnew += x * x;
                fnew *= 0.5;
                double gd = 0.0;
                for (std::size_t i = 0; i < n; ++i) gd += g[i] * (proj[i] - res.s[i]);
                if (gd < 0.0 && fnew <= fmax + armijo * gd) {
                    s_try = std::move(proj);
                    accepted = true;
                    break;
                }
                step *= 0.5;
                if (step < step_min) break;
            }
            if (!accepted) break; // stationary or stalled; Newton step re-evaluates

            // BB scaling from the accepted move
            A.adjoint(r_try, atr_try);
            double sts = 0.0, sty = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double ds = s_try[i] - res.s[i];
                const double dg = (-atr_try[i]) - g[i];
                sts += ds * ds;
                sty += ds * dg;
            }
            bb_step = sty <= 0.0 ? step_max : std::clamp(sts / sty, step_min, step_max);

            res.s.swap(s_try);
            r.swap(r_try);
            atr.swap(atr_try);
            for (std::size_t i = 0; i < n; ++i) g[i] = -atr[i];
            f = fnew;
            fmem[iter % ls_mem] = f;
        }
        if (iter >= max_iters) out_of_budget = true;
    }

    res.residual_norm = detail::norm2(r);
    res.tau_final = tau;
    res.iterations = iter;
    if (!res.converged) res.converged = at_root(res.residual_norm);
    return res;
}

// ---------------------------------------------------------------------------
// Compressive reconstruction: take the first M rows in the basis ordering,
// basis-pursue each quadrature, map back through the sparsifying transform
// and recombine.

struct CsDiagnostics {
    std::size_t iterations = 0;           // summed over the three solves
    bool converged = true;
    std::array<double, 3> residual_norm{0.0, 0.0, 0.0};
    std::array<double, 3> tau_final{0.0, 0.0, 0.0};
    std::array<std::vector<double>, 3> tau_path{};
    std::array<std::vector<double>, 3> residual_path{};
};

inline ComplexField cs_reconstruct(const InterferogramSet& igrams, const BasisMatrix& basis,
                                   double cr, double sigma, const SolverOptions& opts = {},
                                   CsDiagnostics* diag = nullptr,
                                   Sparsifier sparsifier = Sparsifier::Dct1d) {
    if (basis.kind() != BasisKind::Hadamard)
        throw std::invalid_argument("cs_reconstruct: needs a Hadamard basis");
    const std::size_t n = basis.size();
    if (igrams.n != n) throw std::invalid_argument("cs_reconstruct: size mismatch");
    if (igrams.ordering != "natural")
        throw std::invalid_argument("cs_reconstruct: interferograms must be stored in natural order");
    if (!(cr > 0.0) || cr > 1.0) throw std::invalid_argument("cs_reconstruct: cr must be in (0,1]");
    const std::size_t m_rows = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cr * static_cast<double>(n))));

    SparsifyingBasis psi(n, sparsifier);
    std::array<std::vector<double>, 3> xm;
    CsDiagnostics local;
    for (std::size_t m = 0; m < 3; ++m) {
        std::vector<double> b(m_rows);
        for (std::size_t i = 0; i < m_rows; ++i) b[i] = igrams.by_shift[m][basis.perm()[i]];
        SensingProblem prob = make_sensing_problem(basis, m_rows, std::move(b), sigma, sparsifier);
        SolverResult r = basis_pursuit(prob, opts);
        local.iterations += r.iterations;
        local.converged = local.converged && r.converged;
        local.residual_norm[m] = r.residual_norm;
        local.tau_final[m] = r.tau_final;
        local.tau_path[m] = std::move(r.tau_path);
        local.residual_path[m] = std::move(r.residual_path);
        xm[m].resize(n);
        psi.inverse(r.s, xm[m]);
    }
    if (diag) *diag = std::move(local);
    ComplexField f = combine_three_step(xm[0], xm[1], xm[2]);
    for (auto& z : f) z = std::conj(z);
    return f;
}

} // namespace wfsim
