#ifndef LEVYKIT_DIFFUSION_HPP
#define LEVYKIT_DIFFUSION_HPP

// Recurrent diffusions on [0, inf) described by scale function and speed
// density, 0 instantaneously reflecting.  The Bessel family (dimension in
// (0,2), index alpha = (2 - delta)/2) comes with closed-form oracles.

#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>

#include <boost/math/special_functions/bessel.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "levykit/errors.hpp"
#include "levykit/expression.hpp"
#include "levykit/quadrature.hpp"

namespace levykit {

struct ClosedFormOracles {
    std::function<double(double, double, double)> transition_density;  // (t, x, y), w.r.t. m(dy)
    std::function<double(double, double, double)> killed_density;      // (t, x, y), killed at 0
    std::function<double(double, double)> hitting_density;             // (x, t)
    std::function<double(double)> levy_density;
    std::function<double(double)> levy_tail;
    std::function<double(double, double)> hitting_tail;               // (x, t) -> P_x(H0 > t)
};

struct DiffusionSpec {
    std::function<double(double)> scale;
    std::function<double(double)> speed_density;
    std::optional<double> alpha;  // set for Bessel presets only
    ClosedFormOracles oracles;
    std::string label;

    bool is_preset() const { return alpha.has_value(); }
};

namespace detail {

// e^{-z} I_nu(z); the plain Boost value overflows past z ~ 700.
inline double scaled_bessel_i(double nu, double z) {
    if (z < 500.0) return boost::math::cyl_bessel_i(nu, z) * std::exp(-z);
    const double mu = 4.0 * nu * nu;
    double term = 1.0;
    double sum = 1.0;
    for (int k = 1; k < 12; ++k) {
        const double odd = 2.0 * k - 1.0;
        term *= -(mu - odd * odd) / (8.0 * k * z);
        sum += term;
    }
    return sum / std::sqrt(2.0 * std::numbers::pi * z);
}

// p(t;x,y) and p^(t;x,y) share the form (1/2t)(xy)^a e^{-(x^2+y^2)/2t} I_nu(xy/t).
inline double bessel_kernel(double alpha, double nu, double t, double x, double y) {
    const double z = x * y / t;
    const double gauss = std::exp(-(x - y) * (x - y) / (2.0 * t));
    return std::pow(x * y, alpha) * gauss * scaled_bessel_i(nu, z) / (2.0 * t);
}

inline void require_positive(double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) throw DomainError(std::string(what) + " must be finite and > 0");
}

}  // namespace detail

/// Lévy exponent of the inverse local time of the Bessel preset is kappa * lambda^alpha.
inline double bessel_kappa(double alpha) {
    return std::tgamma(1.0 - alpha) * std::pow(2.0, 1.0 - alpha) / std::tgamma(alpha);
}

inline DiffusionSpec bessel_spec(double delta) {
    if (!(delta > 0.0 && delta < 2.0)) {
        std::ostringstream os;
        os << "bessel_spec: dimension must lie in (0,2), got " << delta;
        throw DomainError(os.str());
    }
    const double a = (2.0 - delta) / 2.0;
    const double ga = std::tgamma(a);
    const double g1a = std::tgamma(1.0 - a);

    DiffusionSpec spec;
    spec.alpha = a;
    {
        std::ostringstream os;
        os << "bessel(delta=" << delta << ")";
        spec.label = os.str();
    }
    spec.scale = [a](double x) { return x <= 0.0 ? 0.0 : std::pow(x, 2.0 * a) / (2.0 * a); };
    spec.speed_density = [a](double x) { return 2.0 * std::pow(x, 1.0 - 2.0 * a); };

    ClosedFormOracles& o = spec.oracles;
    o.transition_density = [a, g1a](double t, double x, double y) {
        detail::require_positive(t, "t");
        if (x < 0.0 || y < 0.0) throw DomainError("transition_density: x, y must be >= 0");
        if (x == 0.0 || y == 0.0) {
            const double r = x + y;
            return std::pow(2.0 * t, a - 1.0) * std::exp(-r * r / (2.0 * t)) / g1a;
        }
        return detail::bessel_kernel(a, -a, t, x, y);
    };
    o.killed_density = [a](double t, double x, double y) {
        detail::require_positive(t, "t");
        if (x < 0.0 || y < 0.0) throw DomainError("killed_density: x, y must be >= 0");
        if (x == 0.0 || y == 0.0) return 0.0;
        return detail::bessel_kernel(a, a, t, x, y);
    };
    o.hitting_density = [a, ga](double x, double t) {
        detail::require_positive(t, "t");
        if (x <= 0.0) throw DomainError("hitting_density: x must be > 0");
        return std::pow(x, 2.0 * a) * std::pow(2.0, -a) * std::pow(t, -1.0 - a) * std::exp(-x * x / (2.0 * t)) / ga;
    };
    o.levy_density = [a, ga](double t) {
        detail::require_positive(t, "t");
        return std::pow(2.0, 1.0 - a) * a * std::pow(t, -1.0 - a) / ga;
    };
    o.levy_tail = [a, ga](double t) {
        detail::require_positive(t, "t");
        return std::pow(2.0, 1.0 - a) * std::pow(t, -a) / ga;
    };
    // H0 under P_x is x^2 / (2 Gamma(alpha)) in law.
    o.hitting_tail = [a](double x, double t) {
        detail::require_positive(t, "t");
        if (x <= 0.0) return 0.0;
        return boost::math::gamma_p(a, x * x / (2.0 * t));
    };
    return spec;
}

inline DiffusionSpec brownian_spec() { return bessel_spec(1.0); }

struct SpecValidation {
    double probe_point = 1e6;
    double recurrence_threshold = 1e2;
    int samples = 241;
};

struct SpecReport {
    double scale_at_probe = 0.0;
    bool recurrence_plausible = false;
};

/// Hard invariants throw DomainError; the recurrence probe is only reported.
inline SpecReport validate_spec(const DiffusionSpec& spec, const SpecValidation& opt = {}) {
    if (!spec.scale || !spec.speed_density) throw DomainError("spec: scale and speed density are required");
    const double s0 = spec.scale(0.0);
    if (!(std::abs(s0) <= 1e-12)) throw DomainError("spec: scale must vanish at 0");
    double prev = s0;
    for (int i = 0; i < opt.samples; ++i) {
        const double x = std::pow(10.0, -6.0 + 12.0 * i / (opt.samples - 1));
        const double s = spec.scale(x);
        const double m = spec.speed_density(x);
        if (!std::isfinite(s) || !(s > prev)) {
            std::ostringstream os;
            os << "spec: scale is not strictly increasing near x=" << x;
            throw DomainError(os.str());
        }
        if (!std::isfinite(m) || !(m > 0.0)) {
            std::ostringstream os;
            os << "spec: speed density must be positive, fails at x=" << x;
            throw DomainError(os.str());
        }
        prev = s;
    }
    SpecReport r;
    r.scale_at_probe = spec.scale(opt.probe_point);
    r.recurrence_plausible = std::isfinite(r.scale_at_probe) ? r.scale_at_probe >= opt.recurrence_threshold : true;
    return r;
}

inline DiffusionSpec custom_spec(const std::string& scale_expr, const std::string& speed_expr) {
    DiffusionSpec spec;
    spec.scale = Expression::parse(scale_expr);
    spec.speed_density = Expression::parse(speed_expr);
    spec.label = "custom(S=" + scale_expr + ", m'=" + speed_expr + ")";
    validate_spec(spec);
    return spec;
}

/// M(x) = m((0, x]).  The left half [0, x/2] goes to tanh-sinh, which copes with
/// the power-law blow-up of m' at 0 that Bessel presets with alpha > 1/2 have.
inline QuadResult cumulative_speed_with_error(const DiffusionSpec& spec, double x, const QuadTolerance& tol = {}) {
    if (!(x >= 0.0)) throw DomainError("cumulative_speed: x must be >= 0");
    if (x == 0.0) return {};
    const auto& m = spec.speed_density;
    QuadResult r;
    try {
        r = integrate_endpoint_singular(m, 0.0, 0.5 * x, tol);
        r += integrate(m, 0.5 * x, x, tol);
    } catch (const ToleranceError& e) {
        throw IntegrabilityError(std::string("cumulative_speed: speed density not integrable near 0 (") + e.what() + ")");
    }
    if (!std::isfinite(r.value)) throw IntegrabilityError("cumulative_speed: speed density not integrable near 0");
    return r;
}

inline double cumulative_speed(const DiffusionSpec& spec, double x, const QuadTolerance& tol = {}) {
    return cumulative_speed_with_error(spec, x, tol).value;
}

/// B(x) = int_0^x M dS, computed as M(x)S(x) - int_0^x S dM so no derivative of S is needed.
inline double bound_base(const DiffusionSpec& spec, double x, const QuadTolerance& tol = {}) {
    if (!(x >= 0.0)) throw DomainError("bound_base: x must be >= 0");
    if (x == 0.0) return 0.0;
    if (spec.alpha) return x * x / (2.0 - 2.0 * *spec.alpha);
    auto sm = [&](double z) { return spec.scale(z) * spec.speed_density(z); };
    const double inner = integrate_endpoint_singular(sm, 0.0, 0.5 * x, tol).value + integrate(sm, 0.5 * x, x, tol).value;
    return cumulative_speed(spec, x, tol) * spec.scale(x) - inner;
}

/// int_0^inf levy(v)(1 - e^{-lambda v}) dv; the Lévy exponent per unit local time.
inline QuadResult levy_exponent(const std::function<double(double)>& levy, double lambda, const QuadTolerance& tol = {}) {
    if (!(lambda > 0.0)) throw DomainError("levy exponent: lambda must be > 0");
    auto g = [&](double s) {
        // the nodes tanh-sinh places next to 0 can overflow the Lévy density; their share is nil
        const double v = levy(s / lambda) * (-std::expm1(-s)) / lambda;
        return std::isfinite(v) ? v : 0.0;
    };
    QuadResult r;
    try {
        r = integrate_endpoint_singular(g, 0.0, 1.0, tol);
        r += integrate_to_infinity(g, 1.0, tol);
    } catch (const ToleranceError& e) {
        throw IntegrabilityError(std::string("levy exponent integral diverges: ") + e.what());
    }
    if (!std::isfinite(r.value) || !(r.value > 0.0)) throw IntegrabilityError("levy exponent integral diverges");
    return r;
}

/// R_lambda(0,0), the reciprocal of the Lévy exponent.  Uses the spec's Lévy
/// density oracle unless one is passed explicitly.
inline double resolvent_at_zero(const DiffusionSpec& spec, double lambda,
                                const std::function<double(double)>& levy = {}, const QuadTolerance& tol = {}) {
    const auto& nu = levy ? levy : spec.oracles.levy_density;
    if (!nu) throw UnsupportedError("resolvent_at_zero: no Lévy density available for this spec");
    return 1.0 / levy_exponent(nu, lambda, tol).value;
}

}  // namespace levykit

#endif  // LEVYKIT_DIFFUSION_HPP
