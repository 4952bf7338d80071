#ifndef LEVYKIT_QUADRATURE_HPP
#define LEVYKIT_QUADRATURE_HPP

// Thin layer over Boost.Math quadrature. Every routine returns the value
// together with the integrator's own error estimate and converts Boost's
// failure modes into levykit exceptions.

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "levykit/errors.hpp"

namespace levykit {

struct QuadTolerance {
    double abs = 1e-10;
    double rel = 1e-8;
    unsigned max_depth = 15;
};

struct QuadResult {
    double value = 0.0;
    double abs_error = 0.0;

    QuadResult& operator+=(const QuadResult& o) {
        value += o.value;
        abs_error += o.abs_error;
        return *this;
    }
};

inline QuadResult operator+(QuadResult a, const QuadResult& b) { return a += b; }

namespace detail {

inline void check_converged(const char* where, double value, double err, double l1, const QuadTolerance& tol) {
    if (!std::isfinite(value) || !std::isfinite(l1)) {
        throw IntegrabilityError(std::string(where) + ": integral is not finite");
    }
    const double allowed = std::max(tol.abs, tol.rel * l1);
    if (!(err <= 10.0 * allowed)) {
        std::ostringstream os;
        os << where << ": quadrature did not converge (error estimate " << err << ", allowed " << allowed << ")";
        throw ToleranceError(os.str());
    }
}

inline boost::math::quadrature::tanh_sinh<double>& tanh_sinh_instance() {
    thread_local boost::math::quadrature::tanh_sinh<double> integrator(12);
    return integrator;
}

inline boost::math::quadrature::exp_sinh<double>& exp_sinh_instance() {
    thread_local boost::math::quadrature::exp_sinh<double> integrator(12);
    return integrator;
}

}  // namespace detail

/// Adaptive 61-point Gauss-Kronrod on a finite interval with smooth integrand.
template <class F>
QuadResult integrate(F&& f, double a, double b, const QuadTolerance& tol = {}) {
    if (a == b) return {};
    double err = 0.0;
    double l1 = 0.0;
    double value = 0.0;
    try {
        using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
        // Boost only knows relative tolerances; a single-panel pass gives the
        // scale that turns tol.abs into one.
        double rough_l1 = 0.0;
        GK::integrate(f, a, b, 0, tol.rel, nullptr, &rough_l1);
        const double rel = rough_l1 > 0.0 ? std::max(tol.rel, 0.5 * tol.abs / rough_l1) : tol.rel;
        value = GK::integrate(f, a, b, tol.max_depth, rel, &err, &l1);
    } catch (const std::domain_error& e) {
        throw IntegrabilityError(std::string("integrate: ") + e.what());
    } catch (const boost::math::evaluation_error& e) {
        throw IntegrabilityError(std::string("integrate: ") + e.what());
    }
    detail::check_converged("integrate", value, err, l1, tol);
    return {value, err};
}

/// Double-exponential (tanh-sinh) rule; tolerates integrable endpoint singularities.
template <class F>
QuadResult integrate_endpoint_singular(F&& f, double a, double b, const QuadTolerance& tol = {}) {
    if (a == b) return {};
    double err = 0.0;
    double l1 = 0.0;
    double value = 0.0;
    try {
        value = detail::tanh_sinh_instance().integrate(f, a, b, tol.rel, &err, &l1);
    } catch (const std::domain_error& e) {
        throw IntegrabilityError(std::string("integrate_endpoint_singular: ") + e.what());
    } catch (const boost::math::evaluation_error& e) {
        throw IntegrabilityError(std::string("integrate_endpoint_singular: ") + e.what());
    }
    detail::check_converged("integrate_endpoint_singular", value, err, l1, tol);
    return {value, err};
}

/// exp-sinh rule on [a, +inf).
template <class F>
QuadResult integrate_to_infinity(F&& f, double a, const QuadTolerance& tol = {}) {
    double err = 0.0;
    double l1 = 0.0;
    double value = 0.0;
    try {
        value = detail::exp_sinh_instance().integrate(f, a, std::numeric_limits<double>::infinity(), tol.rel, &err,
                                                      &l1);
    } catch (const std::domain_error& e) {
        throw IntegrabilityError(std::string("integrate_to_infinity: ") + e.what());
    } catch (const boost::math::evaluation_error& e) {
        throw IntegrabilityError(std::string("integrate_to_infinity: ") + e.what());
    }
    detail::check_converged("integrate_to_infinity", value, err, l1, tol);
    return {value, err};
}

/// Fixed 15-point Gauss-Legendre on one cell; used where the caller controls refinement.
template <class F>
double gauss15(F&& f, double a, double b) {
    return boost::math::quadrature::gauss<double, 15>::integrate(f, a, b);
}

/// Laplace-type integral  int_0^inf e^{-lambda s} g(s) ds  for g with at most an
/// integrable singularity at 0 and sub-exponential growth.
template <class F>
QuadResult laplace_integral(F&& g, double lambda, const QuadTolerance& tol = {}) {
    if (!(lambda > 0.0)) throw DomainError("laplace_integral: lambda must be > 0");
    auto scaled = [&](double s) { return std::exp(-s) * g(s / lambda); };
    constexpr double split = 1.0;
    constexpr double upper = 60.0;
    QuadResult r = integrate_endpoint_singular(scaled, 0.0, split, tol);
    r += integrate(scaled, split, upper, tol);
    r.value /= lambda;
    r.abs_error /= lambda;
    return r;
}

}  // namespace levykit

#endif  // LEVYKIT_QUADRATURE_HPP
