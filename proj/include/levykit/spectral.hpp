#ifndef LEVYKIT_SPECTRAL_HPP
#define LEVYKIT_SPECTRAL_HPP

// Krein spectral representation of the reflected diffusion and of the
// diffusion killed at 0.  Eigenfunctions are power series in gamma,
//
//   A(x;g) = sum (-g)^n A_n(x),   C(x;g) = sum (-g)^n C_n(x),
//
// with A_0 = 1, C_0 = S and A_{n+1}(x) = int_0^x dS(y) int_0^y A_n dm (same for C).
// Both satisfy  C_n <= S(x) B(x)^n / n!,  A_n <= B(x)^n / n!,  B = int_0^x M dS,
// which is what makes truncation rigorous.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "levykit/diffusion.hpp"
#include "levykit/errors.hpp"
#include "levykit/quadrature.hpp"

namespace levykit {

enum class EigenKind { A, C };

/// Closed uses the Bessel-preset formulas; Quadrature always runs the nested recursion.
enum class CoefficientMethod { Auto, Closed, Quadrature };

struct EigenSeries {
    double x = 0.0;
    EigenKind kind = EigenKind::C;
    std::vector<double> coefficients;      // may underflow to 0 for large n
    std::vector<double> log_coefficients;  // -inf where the coefficient is exactly 0
    double bound_base = 0.0;               // B(x)
    double scale_at_x = 0.0;               // S(x)
    double coefficient_rel_error = 0.0;    // relative accuracy of the stored coefficients
    std::vector<long double> ratios;       // C_0, then C_n / C_{n-1}; filled by eigen_coefficients

    std::size_t terms() const { return coefficients.size(); }
    std::size_t order() const { return coefficients.empty() ? 0 : coefficients.size() - 1; }
    double bound_prefactor() const { return kind == EigenKind::C ? scale_at_x : 1.0; }
};

namespace detail {

inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();

// log of the bound on sum_{n>N} P (gB)^n / n!, using the geometric majorant of the
// remaining terms once gB < N + 2.  +inf when the majorant does not apply yet.
inline double log_tail_bound(double log_prefactor, double gb, std::size_t n) {
    if (gb <= 0.0) return neg_inf;
    const double next = static_cast<double>(n) + 2.0;
    if (gb >= next) return std::numeric_limits<double>::infinity();
    const double first = log_prefactor + (next - 1.0) * std::log(gb) - std::lgamma(next);
    return first - std::log1p(-gb / next);
}

// Smallest n with log_tail_bound < log(tol).  The bound is decreasing in n once
// n >= gB - 1, so a doubling search followed by bisection is enough.
inline std::size_t minimal_order(double prefactor, double gb, double tol, std::size_t cap = 50'000'000) {
    if (!(prefactor > 0.0) || gb <= 0.0) return 0;
    const double lp = std::log(prefactor);
    const double lt = std::log(tol);
    std::size_t lo = gb > 2.0 ? static_cast<std::size_t>(gb) - 1 : 0;
    if (log_tail_bound(lp, gb, lo) < lt) {
        // only possible in the small-gB regime; walk down
        while (lo > 0 && log_tail_bound(lp, gb, lo - 1) < lt) --lo;
        return lo;
    }
    std::size_t step = 1;
    std::size_t hi = lo + step;
    while (!(log_tail_bound(lp, gb, hi) < lt)) {
        if (hi >= cap) return cap;
        lo = hi;
        step *= 2;
        hi = std::min(lo + step, cap);
    }
    while (hi - lo > 1) {
        const std::size_t mid = lo + (hi - lo) / 2;
        if (log_tail_bound(lp, gb, mid) < lt) hi = mid;
        else lo = mid;
    }
    return hi;
}

inline void fill_ratios(EigenSeries& s) {
    s.ratios.assign(s.coefficients.size(), 0.0L);
    if (s.coefficients.empty()) return;
    s.ratios[0] = s.log_coefficients[0] == neg_inf ? 0.0L : std::exp(static_cast<long double>(s.log_coefficients[0]));
    for (std::size_t n = 1; n < s.coefficients.size(); ++n) {
        const double a = s.log_coefficients[n - 1];
        const double b = s.log_coefficients[n];
        s.ratios[n] = (a == neg_inf || b == neg_inf) ? 0.0L : std::exp(static_cast<long double>(b) - a);
    }
}

inline void closed_form_coefficients(EigenSeries& s, double a, std::size_t N) {
    s.coefficients.assign(N + 1, 0.0);
    s.log_coefficients.assign(N + 1, neg_inf);
    if (s.x == 0.0) {
        if (s.kind == EigenKind::A) {
            s.coefficients[0] = 1.0;
            s.log_coefficients[0] = 0.0;
        }
        return;
    }
    const double lx = std::log(s.x);
    const double ln2 = std::log(2.0);
    for (std::size_t i = 0; i <= N; ++i) {
        const double n = static_cast<double>(i);
        double lc;
        if (s.kind == EigenKind::C) {
            lc = std::lgamma(a) + (2.0 * a + 2.0 * n) * lx - (n + 1.0) * ln2 - std::lgamma(n + 1.0) - std::lgamma(n + 1.0 + a);
        } else {
            lc = std::lgamma(1.0 - a) + 2.0 * n * lx - n * ln2 - std::lgamma(n + 1.0) - std::lgamma(n + 1.0 - a);
        }
        s.log_coefficients[i] = lc;
        s.coefficients[i] = std::exp(lc);
    }
    // The ratios come straight from the recursion in long double; ratios derived
    // from the double-precision logs would lose |log C_n| ulps per term, which
    // is fatal once the partial sums cancel.
    s.ratios.assign(N + 1, 0.0L);
    const long double x2 = static_cast<long double>(s.x) * s.x;
    const long double al = a;
    s.ratios[0] = s.kind == EigenKind::C ? std::pow(static_cast<long double>(s.x), 2.0L * al) / (2.0L * al) : 1.0L;
    for (std::size_t i = 1; i <= N; ++i) {
        const long double n = static_cast<long double>(i);
        s.ratios[i] = s.kind == EigenKind::C ? x2 / (2.0L * n * (n + al)) : x2 / (2.0L * n * (n - al));
    }
    s.coefficient_rel_error = 0.0;
}

// One pass of the nested recursion on a geometric grid with K cells above
// y0 = x 10^-decades.  Between nodes the integrands are interpolated as power
// laws (log-log linear), which is exact for the Bessel family at every order
// and second order in the log-spacing otherwise; the cell integrals against dm
// and dS then go to 15-point Gauss-Legendre.  Below y0 the same power law is
// continued down to 0.  Returns the order-n coefficients at x, n = 0..N.
inline std::vector<double> nested_pass(const DiffusionSpec& spec, double x, EigenKind kind, std::size_t N,
                                       std::size_t K, double decades) {
    const auto& gl_x = boost::math::quadrature::gauss<double, 15>::abscissa();
    const auto& gl_w = boost::math::quadrature::gauss<double, 15>::weights();
    // full symmetric node set on [-1, 1]
    std::vector<double> nx, nw;
    for (std::size_t k = 0; k < gl_x.size(); ++k) {
        nx.push_back(gl_x[k]);
        nw.push_back(gl_w[k]);
        if (gl_x[k] != 0.0) {
            nx.push_back(-gl_x[k]);
            nw.push_back(gl_w[k]);
        }
    }
    const std::size_t Q = nx.size();

    const double y0 = x * std::pow(10.0, -decades);
    std::vector<double> y(K + 1), S(K + 1);
    for (std::size_t j = 0; j <= K; ++j) y[j] = y0 * std::pow(x / y0, static_cast<double>(j) / K);
    y[K] = x;
    for (std::size_t j = 0; j <= K; ++j) S[j] = spec.scale(y[j]);

    // per cell and node: weight * m'(z), weight * S(z) / z, log(z / y_j)
    std::vector<double> wm(K * Q), ws(K * Q), lr(K * Q), cell_log(K);
    for (std::size_t j = 0; j < K; ++j) {
        const double half = 0.5 * (y[j + 1] - y[j]);
        const double mid = 0.5 * (y[j + 1] + y[j]);
        cell_log[j] = std::log(y[j + 1] / y[j]);
        for (std::size_t k = 0; k < Q; ++k) {
            const double z = mid + half * nx[k];
            wm[j * Q + k] = half * nw[k] * spec.speed_density(z);
            ws[j * Q + k] = half * nw[k] * spec.scale(z) / z;
            lr[j * Q + k] = std::log(z / y[j]);
        }
    }
    const double M0 = cumulative_speed(spec, y0);
    const double q0 = std::log(cumulative_speed(spec, y[1]) / M0) / cell_log[0];  // local exponent of M at 0
    const double r0 = std::log(S[1] / S[0]) / cell_log[0];                          // same for S

    auto exponent = [&](const std::vector<double>& f, std::size_t j) {
        return (f[j] > 0.0 && f[j + 1] > 0.0) ? std::log(f[j + 1] / f[j]) / cell_log[j] : 0.0;
    };

    std::vector<double> out(N + 1);
    std::vector<double> cur(K + 1), inner(K + 1);
    for (std::size_t j = 0; j <= K; ++j) cur[j] = kind == EigenKind::A ? 1.0 : S[j];
    out[0] = cur[K];
    for (std::size_t n = 1; n <= N; ++n) {
        // inner(y) = int_0^y cur dM
        double p = exponent(cur, 0);
        inner[0] = cur[0] * M0 * q0 / (p + q0);
        for (std::size_t j = 0; j < K; ++j) {
            p = exponent(cur, j);
            double acc = 0.0;
            for (std::size_t k = 0; k < Q; ++k) acc += wm[j * Q + k] * std::exp(p * lr[j * Q + k]);
            inner[j + 1] = inner[j] + cur[j] * acc;
        }
        // cur(y) = int_0^y inner dS, by parts on each cell: [g S] - int S g' dz
        p = exponent(inner, 0);
        double outer = inner[0] * S[0] * r0 / (p + r0);
        cur[0] = outer;
        for (std::size_t j = 0; j < K; ++j) {
            p = exponent(inner, j);
            double acc = 0.0;
            for (std::size_t k = 0; k < Q; ++k) acc += ws[j * Q + k] * std::exp(p * lr[j * Q + k]);
            outer += inner[j + 1] * S[j + 1] - inner[j] * S[j] - p * inner[j] * acc;
            cur[j + 1] = outer;
        }
        out[n] = cur[K];
    }
    return out;
}

}  // namespace detail

struct NestedQuadratureOptions {
    std::size_t initial_cells = 64;
    std::size_t max_cells = 1u << 14;
    double rel_tol = 1e-9;
    double decades = 7.0;
};

/// Coefficients C_n(x) or A_n(x), n = 0..N.
inline EigenSeries eigen_coefficients(const DiffusionSpec& spec, double x, EigenKind kind, std::size_t N,
                                      CoefficientMethod method = CoefficientMethod::Auto,
                                      const NestedQuadratureOptions& nq = {}) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw DomainError("eigen_coefficients: x must be finite and >= 0");
    EigenSeries s;
    s.x = x;
    s.kind = kind;
    s.scale_at_x = spec.scale(x);
    s.bound_base = bound_base(spec, x);

    const bool closed = method == CoefficientMethod::Closed || (method == CoefficientMethod::Auto && spec.is_preset());
    if (closed) {
        if (!spec.is_preset()) throw UnsupportedError("eigen_coefficients: closed form needs a Bessel preset");
        detail::closed_form_coefficients(s, *spec.alpha, N);
        if (x == 0.0) detail::fill_ratios(s);
        return s;
    }

    s.coefficients.assign(N + 1, 0.0);
    s.log_coefficients.assign(N + 1, detail::neg_inf);
    if (x == 0.0) {
        if (kind == EigenKind::A) {
            s.coefficients[0] = 1.0;
            s.log_coefficients[0] = 0.0;
        }
        detail::fill_ratios(s);
        return s;
    }

    // Richardson on the O(h^2) trapezoid error, doubling the grid until every
    // order has settled.
    std::size_t K = nq.initial_cells;
    std::vector<double> coarse = detail::nested_pass(spec, x, kind, N, K, nq.decades);
    std::vector<double> prev_extrap;
    for (;;) {
        K *= 2;
        if (K > nq.max_cells) {
            long worst = -1;
            double worst_change = 0.0;
            if (!prev_extrap.empty()) {
                for (std::size_t n = 0; n <= N; ++n) {
                    const double fine = prev_extrap[n];
                    const double ch = std::abs(fine - coarse[n]) / std::max(std::abs(fine), 1e-300);
                    if (ch > worst_change) {
                        worst_change = ch;
                        worst = static_cast<long>(n);
                    }
                }
            }
            std::ostringstream os;
            os << "eigen_coefficients: nested quadrature did not settle for n=" << worst;
            throw ToleranceError(os.str(), worst);
        }
        std::vector<double> fine = detail::nested_pass(spec, x, kind, N, K, nq.decades);
        std::vector<double> extrap(N + 1);
        for (std::size_t n = 0; n <= N; ++n) extrap[n] = (4.0 * fine[n] - coarse[n]) / 3.0;
        if (!prev_extrap.empty()) {
            bool settled = true;
            for (std::size_t n = 0; n <= N && settled; ++n) {
                const double scale = std::max(std::abs(extrap[n]), std::numeric_limits<double>::min());
                settled = std::abs(extrap[n] - prev_extrap[n]) <= nq.rel_tol * scale;
            }
            if (settled) {
                for (std::size_t n = 0; n <= N; ++n) {
                    s.coefficients[n] = extrap[n];
                    s.log_coefficients[n] = extrap[n] > 0.0 ? std::log(extrap[n]) : detail::neg_inf;
                }
                s.coefficient_rel_error = nq.rel_tol;
                detail::fill_ratios(s);
                return s;
            }
        }
        prev_extrap = std::move(extrap);
        coarse = std::move(fine);
    }
}

/// Smallest N for which the series at x is certified to tol for every |gamma| <= gamma_max.
inline std::size_t required_order(const EigenSeries& s, double gamma_max, double tol) {
    return detail::minimal_order(s.bound_prefactor(), std::abs(gamma_max) * s.bound_base, tol);
}

/// Partial sum with the fewest terms whose tail bound is below tol/2; the other
/// half of tol is reserved for rounding and coefficient error.  With strict
/// unset, excess rounding is only reported through abs_error.
inline QuadResult eigen_value_with_error(const EigenSeries& s, double gamma, double tol, bool strict = true) {
    if (!(tol > 0.0)) throw DomainError("eigen_value: tol must be > 0");
    if (s.coefficients.empty() || s.ratios.size() != s.coefficients.size())
        throw DomainError("eigen_value: series has no coefficients");
    const double prefactor = s.bound_prefactor();
    if (gamma == 0.0 || prefactor == 0.0) return {s.coefficients[0], 0.0};

    const double gb = std::abs(gamma) * s.bound_base;
    const std::size_t stop = detail::minimal_order(prefactor, gb, 0.5 * tol, s.order() + 1);
    if (stop > s.order()) {
        const std::size_t need = detail::minimal_order(prefactor, gb, 0.5 * tol);
        std::ostringstream os;
        os << "eigen_value: series of order " << s.order() << " too short at gamma=" << gamma << ", tol=" << tol
           << "; need N >= " << need;
        throw TruncationError(os.str(), need);
    }
    const double tail = std::exp(detail::log_tail_bound(std::log(prefactor), gb, stop));

    // Relative error per term: the stored coefficient accuracy plus the long
    // double products accumulated along the ratio recursion.
    constexpr long double eps_l = std::numeric_limits<long double>::epsilon();
    const long double g = -static_cast<long double>(gamma);
    const long double cre = s.coefficient_rel_error;
    long double term = s.ratios[0];
    long double sum = term;
    long double err = std::abs(term) * (cre + 4.0L * eps_l);
    for (std::size_t n = 1; n <= stop; ++n) {
        term *= g * s.ratios[n];
        sum += term;
        err += std::abs(term) * (cre + 4.0L * (n + 1) * eps_l);
    }
    err += std::abs(sum) * eps_l;
    const double rounding = static_cast<double>(err);
    if (strict && rounding > 0.5 * tol) {
        std::ostringstream os;
        os << "eigen_value: cancellation at gamma=" << gamma << " exceeds tol (" << rounding << ")";
        throw ToleranceError(os.str(), static_cast<long>(stop));
    }
    return {static_cast<double>(sum), tail + rounding};
}

inline double eigen_value(const EigenSeries& s, double gamma, double tol) {
    return eigen_value_with_error(s, gamma, tol).value;
}

// ---------------------------------------------------------------------------
// spectral measures

enum class MeasureKind { Principal, Killed };  // Delta and Delta-hat

struct SpectralMeasure {
    std::function<double(double)> density;
    MeasureKind kind = MeasureKind::Killed;
    double gamma_cutoff_hint = std::numeric_limits<double>::infinity();
    // density(g) <= growth_scale * (1 + g)^growth_power, used to place gamma_max
    double growth_power = 1.0;
    double growth_scale = 1.0;
};

namespace detail {

// int density/(g+1) (Delta) or density/(g(g+1)) (Delta-hat) over [0, cutoff]
inline QuadResult measure_mass_check(const SpectralMeasure& mu) {
    auto w = [&](double g) {
        const double d = mu.density(g);
        return mu.kind == MeasureKind::Principal ? d / (g + 1.0) : d / (g * (g + 1.0));
    };
    QuadTolerance tol{1e-12, 1e-8, 15};
    QuadResult r = integrate_endpoint_singular(w, 0.0, std::min(1.0, mu.gamma_cutoff_hint), tol);
    if (mu.gamma_cutoff_hint > 1.0) {
        if (std::isfinite(mu.gamma_cutoff_hint)) r += integrate(w, 1.0, mu.gamma_cutoff_hint, tol);
        else r += integrate_to_infinity(w, 1.0, tol);
    }
    return r;
}

inline void check_measure(const SpectralMeasure& mu) {
    try {
        const QuadResult r = measure_mass_check(mu);
        if (!std::isfinite(r.value)) throw IntegrabilityError("spectral measure: integrability condition fails");
    } catch (const ToleranceError& e) {
        throw IntegrabilityError(std::string("spectral measure: integrability condition fails (") + e.what() + ")");
    }
}

}  // namespace detail

inline SpectralMeasure bessel_measure(double alpha, MeasureKind kind) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("bessel_measure: alpha must lie in (0,1)");
    SpectralMeasure mu;
    mu.kind = kind;
    if (kind == MeasureKind::Killed) {
        const double c = std::pow(2.0, 1.0 - alpha) / (std::tgamma(alpha) * std::tgamma(alpha));
        mu.density = [alpha, c](double g) { return g <= 0.0 ? 0.0 : c * std::pow(g, alpha); };
        mu.growth_power = alpha;
        mu.growth_scale = c;
    } else {
        const double g1 = std::tgamma(1.0 - alpha);
        const double c = 1.0 / (std::pow(2.0, 1.0 - alpha) * g1 * g1);
        mu.density = [alpha, c](double g) { return g <= 0.0 ? 0.0 : c * std::pow(g, -alpha); };
        mu.growth_power = 0.0;
        mu.growth_scale = c;  // only meaningful away from 0, where (1+g)^0 majorizes g^-alpha
    }
    return mu;
}

/// Piecewise power-law interpolation between nodes (log-log linear where both
/// ends are positive, linear otherwise), power-law extension below the first
/// node, zero beyond the last one.
inline SpectralMeasure table_measure(std::vector<double> gammas, std::vector<double> densities, MeasureKind kind) {
    if (gammas.size() < 2 || gammas.size() != densities.size())
        throw ValidationError("table measure: need at least two (gamma, density) pairs of equal length");
    for (std::size_t i = 0; i < gammas.size(); ++i) {
        if (!(gammas[i] > 0.0) || (i > 0 && !(gammas[i] > gammas[i - 1])))
            throw ValidationError("table measure: gammas must be positive and strictly increasing");
        if (!(densities[i] >= 0.0) || !std::isfinite(densities[i]))
            throw ValidationError("table measure: densities must be finite and >= 0");
    }
    SpectralMeasure mu;
    mu.kind = kind;
    mu.gamma_cutoff_hint = gammas.back();
    double peak = 0.0;
    for (std::size_t i = 0; i < gammas.size(); ++i) peak = std::max(peak, densities[i] / std::pow(1.0 + gammas[i], 1.0));
    mu.growth_power = 1.0;
    mu.growth_scale = std::max(peak, 1e-300);
    mu.density = [g = std::move(gammas), d = std::move(densities)](double x) {
        if (x <= 0.0 || x > g.back()) return 0.0;
        std::size_t i = static_cast<std::size_t>(std::upper_bound(g.begin(), g.end(), x) - g.begin());
        if (i == 0) i = 1;
        if (i >= g.size()) i = g.size() - 1;
        const double g0 = g[i - 1], g1 = g[i], d0 = d[i - 1], d1 = d[i];
        if (d0 > 0.0 && d1 > 0.0) {
            const double slope = std::log(d1 / d0) / std::log(g1 / g0);
            return d0 * std::pow(x / g0, slope);
        }
        if (x < g0) return d0;
        return d0 + (d1 - d0) * (x - g0) / (g1 - g0);
    };
    detail::check_measure(mu);
    return mu;
}

struct SpectralOptions {
    double tol = 1e-9;  // absolute target for the returned value
    std::optional<SpectralMeasure> measure;  // overrides the preset measure
    CoefficientMethod method = CoefficientMethod::Auto;
    std::size_t max_order = 40000;
};

inline constexpr double spectral_t_min = 1e-6;

namespace detail {

inline SpectralMeasure resolve_measure(const DiffusionSpec& spec, MeasureKind kind, const SpectralOptions& opt) {
    if (opt.measure) {
        if (opt.measure->kind != kind)
            throw ValidationError(kind == MeasureKind::Killed ? "spectral: this quantity needs the killed measure"
                                                             : "spectral: this quantity needs the principal measure");
        return *opt.measure;
    }
    if (!spec.is_preset())
        throw UnsupportedError("spectral: a spectral measure must be supplied for non-preset diffusions");
    return bessel_measure(*spec.alpha, kind);
}

inline void check_time(double t) {
    if (!(t > 0.0)) throw DomainError("spectral: t must be > 0");
    if (t < spectral_t_min) throw DomainError("spectral: t below the supported minimum 1e-6");
}

// e^{-g t} (1+g)^p scale < tol/10 beyond gamma_max
inline double gamma_max(double t, double p, double scale, double tol, double cutoff) {
    const double target = std::log(10.0 * std::max(scale, 1e-300) / tol);
    double g = std::max(target, 1.0) / t;
    for (int i = 0; i < 100; ++i) {
        const double next = (p * std::log1p(g) + std::max(target, 0.0) + 1.0) / t;
        if (std::abs(next - g) <= 1e-9 * g) {
            g = next;
            break;
        }
        g = next;
    }
    return std::min(g, cutoff);
}

// int_0^{gmax} w(g) dg with g = u^2; tanh-sinh near 0 takes the power-law
// behaviour of the measure and of 1/g factors.
template <class W>
QuadResult integrate_gamma(W&& w, double gmax, double u_split, double tol) {
    const double umax = std::sqrt(gmax);
    const double u1 = std::min(u_split, umax);
    auto f = [&](double u) {
        const double v = 2.0 * u * w(u * u);
        return std::isfinite(v) ? v : 0.0;
    };
    QuadTolerance qt{0.25 * tol, 1e-12, 15};
    QuadResult r = integrate_endpoint_singular(f, 0.0, u1, qt);
    if (umax > u1) r += integrate(f, u1, umax, qt);
    return r;
}

// Tolerance one eigenfunction evaluation must meet at g: the absolute target
// divided by everything that multiplies the eigenfunction in the integrand.
struct LocalTolerance {
    const SpectralMeasure* mu;
    double t;
    double target;
    double umax;
    double envelope;
    bool inverse_gamma;

    double operator()(double g) const {
        double weight = std::exp(-g * t) * mu->density(g);
        if (inverse_gamma) weight /= g;
        if (!(weight > 0.0) || !std::isfinite(weight)) return 1e300;
        return std::clamp(1e-2 * target / (weight * 2.0 * umax * umax * envelope), 1e-2 * target, 1e300);
    }
};

// Estimate of what eigenfunction rounding adds to a gamma-integral beyond the
// budget LocalTolerance already hands out.  The excess density is recorded at
// the quadrature nodes (in u = sqrt(g)) and integrated by trapezoid over them,
// doubled for safety.  Exceeding the target is a tolerance failure.
struct EigenErrorTracker {
    std::vector<std::pair<double, double>> nodes;

    static double excess(const QuadResult& e, double local_tol) { return std::max(0.0, e.abs_error - local_tol); }

    void add(double g, double err_density) {
        const double v = 2.0 * std::sqrt(g) * err_density;
        nodes.emplace_back(std::sqrt(g), std::isfinite(v) ? v : std::numeric_limits<double>::infinity());
    }

    double estimate() const {
        auto pts = nodes;
        std::sort(pts.begin(), pts.end());
        double sum = 0.0;
        for (std::size_t i = 1; i < pts.size(); ++i)
            sum += 0.5 * (pts[i].second + pts[i - 1].second) * (pts[i].first - pts[i - 1].first);
        return 2.0 * sum;
    }

    QuadResult finish(QuadResult r, double /*gmax*/, double target, const char* where) const {
        const double bound = estimate();
        if (!(bound <= target)) {
            std::ostringstream os;
            os << where << ": eigenfunction cancellation limits accuracy to about " << bound << " (target " << target
               << "); use a larger t or smaller x";
            throw ToleranceError(os.str());
        }
        r.abs_error += bound;
        return r;
    }
};

// Order that certifies every gamma <= gmax at the local tolerance; the scan is
// padded, and callers retry with the order reported by a TruncationError.
inline EigenSeries build_series(const DiffusionSpec& spec, double x, EigenKind kind, double gmax,
                                const LocalTolerance& local, std::size_t at_least, const SpectralOptions& opt) {
    const double prefactor = kind == EigenKind::C ? spec.scale(x) : 1.0;
    const double B = bound_base(spec, x);
    std::size_t N = at_least;
    const double umax = std::sqrt(gmax);
    constexpr int scan = 512;
    for (int i = 1; i <= scan; ++i) {
        const double u = umax * i / scan;
        const double g = u * u;
        N = std::max(N, minimal_order(prefactor, g * B, 0.5 * local(g)));
    }
    N += N / 10 + 8;
    if (N > opt.max_order) {
        std::ostringstream os;
        os << "spectral: eigen series at x=" << x << " needs order " << N << " (max " << opt.max_order
           << "); increase t or max_order";
        throw TruncationError(os.str(), N);
    }
    return eigen_coefficients(spec, x, kind, N, opt.method);
}

// Runs body(at_least) and, if a series turned out short, once more with the
// order the failure reported.
template <class Body>
QuadResult with_order_retry(Body&& body) {
    std::size_t at_least = 0;
    for (int attempt = 0;; ++attempt) {
        try {
            return body(at_least);
        } catch (const TruncationError& e) {
            if (attempt >= 2) throw;
            at_least = e.minimal_terms() + e.minimal_terms() / 4 + 8;
        }
    }
}

}  // namespace detail

/// p(t;x,y) w.r.t. m(dy) from the principal measure, or p^(t;x,y) from the killed one.
inline QuadResult transition_density_with_error(const DiffusionSpec& spec, double x, double y, double t,
                                                bool killed = false, const SpectralOptions& opt = {}) {
    detail::check_time(t);
    if (!(x >= 0.0 && y >= 0.0)) throw DomainError("transition_density: x, y must be >= 0");
    const MeasureKind mk = killed ? MeasureKind::Killed : MeasureKind::Principal;
    const SpectralMeasure mu = detail::resolve_measure(spec, mk, opt);
    const EigenKind ek = killed ? EigenKind::C : EigenKind::A;
    if (killed && (x == 0.0 || y == 0.0)) return {};

    const double sx = killed ? std::max(1.0, spec.scale(x)) : 1.0;
    const double sy = killed ? std::max(1.0, spec.scale(y)) : 1.0;
    const double gmax = detail::gamma_max(t, mu.growth_power + 1.0, mu.growth_scale * sx * sy, opt.tol,
                                          mu.gamma_cutoff_hint);
    const detail::LocalTolerance local{&mu, t, opt.tol, std::sqrt(gmax), sx * sy, false};
    const bool same = x == y;
    const double split = std::min(1.0 / (1.0 + std::max(x, y)), 1.0 / std::sqrt(t));

    QuadResult r = detail::with_order_retry([&](std::size_t at_least) {
        const EigenSeries ex = detail::build_series(spec, x, ek, gmax, local, at_least, opt);
        const EigenSeries ey = same ? ex : detail::build_series(spec, y, ek, gmax, local, at_least, opt);
        detail::EigenErrorTracker track;
        auto w = [&](double g) {
            const double weight = std::exp(-g * t) * mu.density(g);
            if (weight == 0.0) return 0.0;
            const double lt = local(g);
            const QuadResult a = eigen_value_with_error(ex, g, lt, false);
            const QuadResult b = same ? a : eigen_value_with_error(ey, g, lt, false);
            track.add(g, weight * (std::abs(a.value) * track.excess(b, lt) + std::abs(b.value) * track.excess(a, lt)));
            return weight * a.value * b.value;
        };
        QuadResult r = detail::integrate_gamma(w, gmax, split, opt.tol);
        return track.finish(r, gmax, opt.tol, "transition_density");
    });
    r.abs_error += 0.1 * opt.tol;
    return r;
}

inline double transition_density(const DiffusionSpec& spec, double x, double y, double t, bool killed = false,
                                 const SpectralOptions& opt = {}) {
    return transition_density_with_error(spec, x, y, t, killed, opt).value;
}

namespace detail {

// int e^{-g t} [1/g] C(x;g) dDelta-hat; x < 0 means "no eigenfunction factor"
inline QuadResult killed_integral(const DiffusionSpec& spec, double x, double t, bool inverse_gamma,
                                  const SpectralOptions& opt) {
    check_time(t);
    const SpectralMeasure mu = resolve_measure(spec, MeasureKind::Killed, opt);
    const bool with_eigen = x >= 0.0;
    const double sx = with_eigen ? std::max(1.0, spec.scale(x)) : 1.0;
    const double gmax = gamma_max(t, mu.growth_power + 1.0, mu.growth_scale * sx, opt.tol, mu.gamma_cutoff_hint);
    const LocalTolerance local{&mu, t, opt.tol, std::sqrt(gmax), 1.0, inverse_gamma};
    const double split = std::min(with_eigen ? 1.0 / (1.0 + x) : 1.0, 1.0 / std::sqrt(t));

    QuadResult r = with_order_retry([&](std::size_t at_least) {
        std::optional<EigenSeries> ex;
        if (with_eigen) ex = build_series(spec, x, EigenKind::C, gmax, local, at_least, opt);
        EigenErrorTracker track;
        auto w = [&](double g) {
            double weight = std::exp(-g * t) * mu.density(g);
            if (inverse_gamma) weight /= g;
            if (weight == 0.0 || !std::isfinite(weight)) return 0.0;
            if (!ex) return weight;
            const QuadResult c = eigen_value_with_error(*ex, g, local(g), false);
            track.add(g, weight * track.excess(c, local(g)));
            return weight * c.value;
        };
        QuadResult r = integrate_gamma(w, gmax, split, opt.tol);
        return track.finish(r, gmax, opt.tol, "spectral integral");
    });
    r.abs_error += 0.1 * opt.tol;
    return r;
}

}  // namespace detail

/// Density of H0 under P_x.
inline QuadResult hitting_density_with_error(const DiffusionSpec& spec, double x, double t, const SpectralOptions& opt = {}) {
    if (!(x > 0.0)) throw DomainError("hitting_density: x must be > 0");
    return detail::killed_integral(spec, x, t, false, opt);
}
inline double hitting_density(const DiffusionSpec& spec, double x, double t, const SpectralOptions& opt = {}) {
    return hitting_density_with_error(spec, x, t, opt).value;
}

inline QuadResult levy_density_with_error(const DiffusionSpec& spec, double t, const SpectralOptions& opt = {}) {
    return detail::killed_integral(spec, -1.0, t, false, opt);
}
inline double levy_density(const DiffusionSpec& spec, double t, const SpectralOptions& opt = {}) {
    return levy_density_with_error(spec, t, opt).value;
}

/// nu((t, inf))
inline QuadResult levy_tail_with_error(const DiffusionSpec& spec, double t, const SpectralOptions& opt = {}) {
    return detail::killed_integral(spec, -1.0, t, true, opt);
}
inline double levy_tail(const DiffusionSpec& spec, double t, const SpectralOptions& opt = {}) {
    return levy_tail_with_error(spec, t, opt).value;
}

/// P_x(H0 > t)
inline QuadResult hitting_tail_with_error(const DiffusionSpec& spec, double x, double t, const SpectralOptions& opt = {}) {
    if (!(x > 0.0)) throw DomainError("hitting_tail: x must be > 0");
    QuadResult r = detail::killed_integral(spec, x, t, true, opt);
    const double slack = std::max(opt.tol, r.abs_error);
    if (r.value < -slack || r.value > 1.0 + slack) {
        std::ostringstream os;
        os << "hitting_tail: value " << r.value << " is not a probability";
        throw ConsistencyError(os.str());
    }
    return r;
}
inline double hitting_tail(const DiffusionSpec& spec, double x, double t, const SpectralOptions& opt = {}) {
    return hitting_tail_with_error(spec, x, t, opt).value;
}

/// int_0^inf (1 ^ t) nu-dot(t) dt, computed on the spectral side as
/// int (1 - e^{-g}) / g^2 dDelta-hat.  Finite exactly when the measure is admissible.
inline QuadResult small_jump_integral(const DiffusionSpec& spec, const SpectralOptions& opt = {}) {
    const SpectralMeasure mu = detail::resolve_measure(spec, MeasureKind::Killed, opt);
    auto w = [&](double g) {
        if (g <= 0.0) return 0.0;
        const double v = -std::expm1(-g) / (g * g) * mu.density(g);
        return std::isfinite(v) ? v : 0.0;
    };
    QuadTolerance qt{opt.tol, 1e-10, 15};
    try {
        QuadResult r = integrate_endpoint_singular(w, 0.0, std::min(1.0, mu.gamma_cutoff_hint), qt);
        if (mu.gamma_cutoff_hint > 1.0) {
            if (std::isfinite(mu.gamma_cutoff_hint)) r += integrate(w, 1.0, mu.gamma_cutoff_hint, qt);
            else r += integrate_to_infinity(w, 1.0, qt);
        }
        return r;
    } catch (const ToleranceError& e) {
        throw IntegrabilityError(std::string("small_jump_integral diverges: ") + e.what());
    }
}

/// R_lambda(0,0) from the killed measure: integrating nu-dot against
/// (1 - e^{-lambda v}) under the spectral integral leaves
/// int lambda / (g (g + lambda)) dDelta-hat for the Lévy exponent.
inline double resolvent_at_zero_spectral(const DiffusionSpec& spec, double lambda, const SpectralOptions& opt = {}) {
    if (!(lambda > 0.0)) throw DomainError("resolvent_at_zero: lambda must be > 0");
    const SpectralMeasure mu = detail::resolve_measure(spec, MeasureKind::Killed, opt);
    auto w = [&](double g) {
        if (g <= 0.0) return 0.0;
        const double v = lambda / (g * (g + lambda)) * mu.density(g);
        return std::isfinite(v) ? v : 0.0;
    };
    QuadTolerance qt{opt.tol, 1e-10, 15};
    QuadResult r;
    try {
        const double split = std::min(lambda, mu.gamma_cutoff_hint);
        r = integrate_endpoint_singular(w, 0.0, split, qt);
        if (mu.gamma_cutoff_hint > split) {
            if (std::isfinite(mu.gamma_cutoff_hint)) r += integrate(w, split, mu.gamma_cutoff_hint, qt);
            else r += integrate_to_infinity(w, split, qt);
        }
    } catch (const ToleranceError& e) {
        throw IntegrabilityError(std::string("resolvent_at_zero: exponent integral diverges: ") + e.what());
    }
    return 1.0 / r.value;
}

}  // namespace levykit

#endif  // LEVYKIT_SPECTRAL_HPP
