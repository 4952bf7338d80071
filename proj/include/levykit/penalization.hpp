#ifndef LEVYKIT_PENALIZATION_HPP
#define LEVYKIT_PENALIZATION_HPP

// Penalisation by a weight function of the local time at 0: the martingale
// M^h_u = S(X_u) h(L_u) + 1 - H(L_u), the reweighted law E_0[F M^h_u], and
// Monte Carlo checks of what the reweighted law should look like.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>
#include <boost/random/beta_distribution.hpp>
#include <boost/random/exponential_distribution.hpp>

#include "levykit/diffusion.hpp"
#include "levykit/errors.hpp"
#include "levykit/montecarlo.hpp"
#include "levykit/quadrature.hpp"
#include "levykit/random.hpp"
#include "levykit/spectral.hpp"

namespace levykit {

/// Which invariants a weight function must satisfy.  General: h >= 0 with
/// total mass 1.  Compact additionally wants h non-increasing with compact
/// support.
enum class WeightMode { General, Compact };

/// Probability density h on [0, inf) with cumulative H.
class WeightFunction {
public:
    /// h = 1_{[0, ell0)} / ell0.
    static WeightFunction indicator(double ell0) {
        if (!(ell0 > 0.0) || !std::isfinite(ell0)) throw ValidationError("indicator weight: ell0 must be finite and > 0");
        WeightFunction w;
        w.kind_ = Kind::Indicator;
        w.k_ = ell0;
        std::ostringstream os;
        os << "indicator(" << ell0 << ")";
        w.label_ = os.str();
        w.validate(WeightMode::Compact);
        return w;
    }

    /// h(x) = 2 (K - x) / K^2 on [0, K].
    static WeightFunction triangular(double K) {
        if (!(K > 0.0) || !std::isfinite(K)) throw ValidationError("triangular weight: K must be finite and > 0");
        WeightFunction w;
        w.kind_ = Kind::Triangular;
        w.k_ = K;
        std::ostringstream os;
        os << "triangular(" << K << ")";
        w.label_ = os.str();
        w.validate(WeightMode::Compact);
        return w;
    }

    /// Piecewise-linear h through (xs[i], hs[i]), zero past the last node.
    /// xs must start at 0 and increase.
    static WeightFunction table(std::vector<double> xs, std::vector<double> hs, WeightMode mode = WeightMode::General) {
        if (xs.size() < 2 || xs.size() != hs.size()) throw ValidationError("table weight: need >= 2 (x, h) pairs of equal length");
        if (xs.front() != 0.0) throw ValidationError("table weight: first x must be 0");
        for (std::size_t i = 0; i < xs.size(); ++i) {
            if (i > 0 && !(xs[i] > xs[i - 1])) throw ValidationError("table weight: xs must be increasing");
            if (!(hs[i] >= 0.0) || !std::isfinite(hs[i])) throw ValidationError("table weight: hs must be finite and >= 0");
        }
        WeightFunction w;
        w.kind_ = Kind::Table;
        w.xs_ = std::move(xs);
        w.hs_ = std::move(hs);
        w.k_ = w.xs_.back();
        w.cum_.assign(w.xs_.size(), 0.0);
        for (std::size_t i = 1; i < w.xs_.size(); ++i)
            w.cum_[i] = w.cum_[i - 1] + 0.5 * (w.hs_[i] + w.hs_[i - 1]) * (w.xs_[i] - w.xs_[i - 1]);
        w.label_ = "table";
        w.validate(mode);
        return w;
    }

    /// Arbitrary density; support_K may be infinite.  H comes from quadrature.
    static WeightFunction from_function(std::function<double(double)> h, double support_K,
                                        WeightMode mode = WeightMode::General, std::string label = "function") {
        if (!(support_K > 0.0)) throw ValidationError("weight function: support must be > 0");
        WeightFunction w;
        w.kind_ = Kind::Function;
        w.fn_ = std::move(h);
        w.k_ = support_K;
        w.label_ = std::move(label);
        w.validate(mode);
        return w;
    }

    double h(double x) const {
        if (x < 0.0 || x >= k_) return 0.0;
        switch (kind_) {
            case Kind::Indicator: return 1.0 / k_;
            case Kind::Triangular: return 2.0 * (k_ - x) / (k_ * k_);
            case Kind::Table: {
                const auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
                const std::size_t i = static_cast<std::size_t>(it - xs_.begin()) - 1;
                const double w = (x - xs_[i]) / (xs_[i + 1] - xs_[i]);
                return hs_[i] + w * (hs_[i + 1] - hs_[i]);
            }
            case Kind::Function: return std::max(0.0, fn_(x));
        }
        return 0.0;
    }

    double H(double x) const {
        if (x <= 0.0) return 0.0;
        if (x >= k_ && kind_ != Kind::Function) return 1.0;
        switch (kind_) {
            case Kind::Indicator: return x / k_;
            case Kind::Triangular: return 1.0 - (k_ - x) * (k_ - x) / (k_ * k_);
            case Kind::Table: {
                const auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
                const std::size_t i = static_cast<std::size_t>(it - xs_.begin()) - 1;
                const double dx = x - xs_[i];
                const double slope = (hs_[i + 1] - hs_[i]) / (xs_[i + 1] - xs_[i]);
                return cum_[i] + hs_[i] * dx + 0.5 * slope * dx * dx;
            }
            case Kind::Function: return std::min(1.0, integrate_h(0.0, std::min(x, k_)));
        }
        return 1.0;
    }

    /// int_x^inf h.
    double upper_mass(double x) const { return 1.0 - H(x); }

    double support() const { return k_; }
    const std::string& label() const { return label_; }

    /// Draw from the density h (inverse of H by bisection where needed).
    double sample(Rng& rng) const {
        const double u = detail::uniform_open(rng);
        switch (kind_) {
            case Kind::Indicator: return u * k_;
            case Kind::Triangular: return k_ * (1.0 - std::sqrt(1.0 - u));
            default: break;
        }
        double lo = 0.0, hi = std::isfinite(k_) ? k_ : 1.0;
        while (H(hi) < u) hi *= 2.0;
        for (int i = 0; i < 80 && hi - lo > 1e-14 * hi; ++i) {
            const double mid = 0.5 * (lo + hi);
            (H(mid) < u ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
    }

private:
    enum class Kind { Indicator, Triangular, Table, Function };

    double integrate_h(double a, double b) const {
        if (std::isfinite(b)) return integrate([this](double x) { return h(x); }, a, b, {1e-12, 1e-10, 15}).value;
        return integrate_to_infinity([this](double x) { return h(x); }, a, {1e-12, 1e-10, 15}).value;
    }

    void validate(WeightMode mode) const {
        double mass;
        if (kind_ == Kind::Function) {
            try {
                mass = integrate_h(0.0, k_);
            } catch (const Error& e) {
                throw ValidationError(std::string("weight function: cannot integrate h: ") + e.what());
            }
        } else {
            mass = H(k_);
            if (kind_ == Kind::Table) mass = cum_.back();
        }
        if (!(std::abs(mass - 1.0) <= 1e-8)) {
            std::ostringstream os;
            os << "weight function: int h = " << mass << ", must be 1 within 1e-8";
            throw ValidationError(os.str());
        }
        if (mode == WeightMode::Compact) {
            if (!std::isfinite(k_)) throw ValidationError("weight function: compact mode needs compact support");
            constexpr int grid = 2001;
            double prev = h(0.0);
            for (int i = 1; i < grid; ++i) {
                const double v = h(k_ * i / (grid - 1.0));
                if (v > prev * (1.0 + 1e-12) + 1e-300) throw ValidationError("weight function: h must be non-increasing");
                prev = v;
            }
        }
    }

    Kind kind_ = Kind::Indicator;
    double k_ = 1.0;
    std::vector<double> xs_, hs_, cum_;
    std::function<double(double)> fn_;
    std::string label_;
};

/// S(x) h(l) + 1 - H(l).
inline double martingale_value(const DiffusionSpec& spec, const WeightFunction& h, double x, double ell) {
    if (!(x >= 0.0)) throw DomainError("martingale_value: x must be >= 0");
    if (!(ell >= 0.0)) throw DomainError("martingale_value: ell must be >= 0");
    return spec.scale(x) * h.h(ell) + h.upper_mass(ell);
}

// ---------------------------------------------------------------------------
// Exact joint sampling of (g_u, L_u, X_u) under P_0

/// Last zero g before u, L_u and X_u.
struct JointSample {
    double g = 0.0;
    double local_time = 0.0;
    double x = 0.0;
};

namespace detail {

// g/u ~ Beta(alpha, 1-alpha).  Given g, tau_{L-} = g, so L = (g/W)^alpha / kappa
// where W has density proportional to w^{-alpha} times the unit stable law
// (the tau-density of the level, seen as a function of the level).  The
// excursion straddling u ends at u with the entrance law n(X_r in dy), which
// is Rayleigh for every preset: X_u^2 / (2 (u-g)) ~ Exp(1).
inline JointSample sample_joint(Rng& rng, const Preset& p, double u) {
    if (u <= 0.0) return {};
    boost::random::beta_distribution<double> beta(p.alpha, 1.0 - p.alpha);
    boost::random::exponential_distribution<double> exp1(1.0);
    JointSample s;
    s.g = u * beta(rng);
    const double w = size_biased_stable(rng, p.alpha);
    s.local_time = std::pow(s.g / w, p.alpha) / p.kappa;
    s.x = std::sqrt(2.0 * (u - s.g) * exp1(rng));
    return s;
}

// Defensive importance proposal for g: half Beta(alpha, 1-alpha) scaled to
// [0,u], half the density proportional to g^{alpha-1} on [0,c] and
// c^{2 alpha} g^{-alpha-1} on [c,u].  Small local times need g small against
// W, and P(W > w) decays like w^{-2 alpha}, which the second piece mirrors.
// Returns g and the likelihood ratio.
struct WeightedG {
    double g;
    double weight;
};

class GProposal {
public:
    GProposal(const Preset& p, double u, double c)
        : a_(p.alpha), u_(u), c_(std::min(c, u)), beta_(p.alpha, 1.0 - p.alpha),
          log_b_(std::lgamma(p.alpha) + std::lgamma(1.0 - p.alpha)) {
        const double head = std::pow(c_, a_) / a_;
        const double tail = std::pow(c_, a_) / a_ * (1.0 - std::pow(c_ / u_, a_));
        norm_ = head + tail;
        p_head_ = head / norm_;
        v_min_ = std::pow(c_ / u_, a_);
    }

    WeightedG operator()(Rng& rng) {
        double g;
        if (uniform_open(rng) < 0.5) {
            g = u_ * beta_(rng);
        } else if (uniform_open(rng) < p_head_) {
            g = c_ * std::pow(uniform_open(rng), 1.0 / a_);
        } else {
            const double v = v_min_ + (1.0 - v_min_) * uniform_open(rng);
            g = std::min(u_, c_ * std::pow(v, -1.0 / a_));
        }
        const double fb = std::exp((a_ - 1.0) * std::log(g / u_) - a_ * std::log1p(-g / u_) - log_b_) / u_;
        const double fq = (g < c_ ? std::pow(g, a_ - 1.0) : std::pow(c_, 2.0 * a_) * std::pow(g, -a_ - 1.0)) / norm_;
        return {g, fb / (0.5 * fb + 0.5 * fq)};
    }

private:
    double a_, u_, c_;
    boost::random::beta_distribution<double> beta_;
    double log_b_;
    double norm_ = 1.0, p_head_ = 1.0, v_min_ = 0.0;
};

// E[S(X_u) | u - g = r] for the Rayleigh endpoint.
inline double mean_scale_at_end(const Preset& p, double r) {
    return std::pow(2.0 * r, p.alpha) * std::tgamma(1.0 + p.alpha) / (2.0 * p.alpha);
}

}  // namespace detail

/// A C_u-measurable functional of the exact joint sample.
using Functional = std::function<double(const JointSample&)>;

/// E_0[F M^h_u], with (X_u, L_u) sampled exactly.
inline McEstimate penalized_expectation(const DiffusionSpec& spec, const WeightFunction& h, double u,
                                        const Functional& F, std::size_t n, std::uint64_t seed,
                                        std::optional<unsigned> threads = std::nullopt) {
    const detail::Preset p = detail::require_preset(spec, "penalized_expectation");
    if (!(u >= 0.0)) throw DomainError("penalized_expectation: u must be >= 0");
    if (n == 0) throw DomainError("penalized_expectation: n must be > 0");
    const auto parts = run_blocks<Moments>(
        n, seed,
        [&](std::size_t, std::size_t, std::size_t count, Rng& rng) {
            Moments m;
            for (std::size_t i = 0; i < count; ++i) {
                const JointSample s = detail::sample_joint(rng, p, u);
                m.add(F(s) * martingale_value(spec, h, s.x, s.local_time));
            }
            return m;
        },
        threads);
    return detail::to_estimate(detail::reduce(parts), seed);
}

/// E_0[M^h_u]; the same estimator as penalized_expectation with F = 1.
inline McEstimate martingale_mean_mc(const DiffusionSpec& spec, const WeightFunction& h, double u, std::size_t n,
                                     std::uint64_t seed, std::optional<unsigned> threads = std::nullopt) {
    return penalized_expectation(spec, h, u, [](const JointSample&) { return 1.0; }, n, seed, threads);
}

// ---------------------------------------------------------------------------
// Martingale property along simulated paths

/// Rectangle [x_lo, x_hi) x [l_lo, l_hi) in the (X_s, L_s) plane.
struct Rectangle {
    double x_lo, x_hi, l_lo, l_hi;
    bool contains(double x, double l) const { return x >= x_lo && x < x_hi && l >= l_lo && l < l_hi; }
};

inline std::vector<Rectangle> default_test_rectangles() {
    const double inf = std::numeric_limits<double>::infinity();
    return {{0.0, inf, 0.0, inf}, {0.0, 0.5, 0.0, inf}, {0.5, inf, 0.0, inf}, {0.0, inf, 0.0, 0.5},
            {0.0, 1.0, 0.25, 1.0}};
}

struct MartingaleCheckRow {
    Rectangle phi;
    McEstimate at_t;       // E[M_t phi(X_s, L_s)]
    McEstimate at_s;       // E[M_s phi(X_s, L_s)]
    McEstimate difference; // paired
    bool pass = false;     // |difference| < 3 SE
};

struct MartingaleCheckOptions {
    double dt = 1e-3;
    double x0 = 0.0;
    std::vector<Rectangle> rectangles = default_test_rectangles();
    PathOptions path;
};

/// Checks E[M_t phi(X_s,L_s)] = E[M_s phi(X_s,L_s)] on simulated paths.
inline std::vector<MartingaleCheckRow> martingale_property_mc(const DiffusionSpec& spec, const WeightFunction& h,
                                                              double s, double t, std::size_t n, std::uint64_t seed,
                                                              const MartingaleCheckOptions& opt = {}) {
    if (!(s >= 0.0 && t >= s)) throw DomainError("martingale_property_mc: need 0 <= s <= t");
    if (n == 0) throw DomainError("martingale_property_mc: n must be > 0");
    const std::size_t k = opt.rectangles.size();
    struct Acc {
        std::vector<Moments> a, b, d;
    };
    auto on_path = [&](Acc& acc, const std::vector<detail::Snapshot>& snaps) {
        if (acc.a.empty()) acc.a.resize(k), acc.b.resize(k), acc.d.resize(k);
        const double ms = martingale_value(spec, h, snaps[0].x, std::max(0.0, snaps[0].local_time));
        const double mt = martingale_value(spec, h, snaps[1].x, std::max(0.0, snaps[1].local_time));
        for (std::size_t i = 0; i < k; ++i) {
            const double phi = opt.rectangles[i].contains(snaps[0].x, snaps[0].local_time) ? 1.0 : 0.0;
            acc.a[i].add(mt * phi);
            acc.b[i].add(ms * phi);
            acc.d[i].add((mt - ms) * phi);
        }
    };
    std::vector<Acc> parts;
    if (s == t) {
        // identical by construction
        parts = detail::simulate_many<Acc>(spec, opt.x0, opt.dt, {s}, n, seed, opt.path,
                                           [&](Acc& acc, const std::vector<detail::Snapshot>& snaps) {
                                               on_path(acc, {snaps[0], snaps[0]});
                                           });
    } else {
        parts = detail::simulate_many<Acc>(spec, opt.x0, opt.dt, {s, t}, n, seed, opt.path, on_path);
    }
    std::vector<MartingaleCheckRow> rows(k);
    for (std::size_t i = 0; i < k; ++i) {
        Moments a, b, d;
        for (const auto& p : parts) {
            if (p.a.empty()) continue;
            a += p.a[i];
            b += p.b[i];
            d += p.d[i];
        }
        rows[i].phi = opt.rectangles[i];
        rows[i].at_t = detail::to_estimate(a, seed);
        rows[i].at_s = detail::to_estimate(b, seed);
        rows[i].difference = detail::to_estimate(d, seed);
        rows[i].pass = std::abs(d.mean()) <= 3.0 * d.std_error() || (d.std_error() == 0.0 && d.mean() == 0.0);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Law of L_infinity under the penalised measure

/// E_0[1 - H(L_u)] by exact sampling of L_u = (u / tau_1)^alpha.
inline McEstimate unabsorbed_mass(const DiffusionSpec& spec, const WeightFunction& h, double u, std::size_t n,
                                  std::uint64_t seed, std::optional<unsigned> threads = std::nullopt) {
    const detail::Preset p = detail::require_preset(spec, "unabsorbed_mass");
    const auto parts = run_blocks<Moments>(
        n, seed,
        [&](std::size_t, std::size_t, std::size_t count, Rng& rng) {
            Moments m;
            for (std::size_t i = 0; i < count; ++i) {
                const double l = std::pow(u / sample_tau(rng, p.alpha, 1.0), p.alpha);
                m.add(h.upper_mass(l));
            }
            return m;
        },
        threads);
    return detail::to_estimate(detail::reduce(parts), seed);
}

struct LinftyOptions {
    double u = 0.0;                // 0: adaptive
    double target_unabsorbed = 0.01;
    double u_start = 1.0;
    double u_limit = 1e8;
    std::size_t probe_paths = 20000;
    std::size_t grid_points = 50;
    std::optional<unsigned> threads;
};

struct LinftyReport {
    double u = 0.0;
    double unabsorbed = 0.0;   // E_0[1 - H(L_u)]
    std::vector<double> ell;
    std::vector<double> weighted_cdf;
    std::vector<double> cdf_std_error;
    std::vector<double> target_cdf;  // H
    double total_mass = 0.0;
    double max_gap = 0.0;
    std::size_t n_paths = 0;
    std::uint64_t seed = 0;
};

/// Picks u by doubling until E_0[1 - H(L_u)] falls below the target.
inline std::pair<double, double> adaptive_horizon(const DiffusionSpec& spec, const WeightFunction& h,
                                                  std::uint64_t seed, const LinftyOptions& opt) {
    double u = opt.u_start;
    for (;;) {
        const double m = unabsorbed_mass(spec, h, u, opt.probe_paths, seed ^ 0x5bd1e995ULL, opt.threads).mean;
        if (m < opt.target_unabsorbed) return {u, m};
        if (u >= opt.u_limit) {
            std::ostringstream os;
            os << "linfty_law_check: E[1 - H(L_u)] still " << m << " at u=" << u;
            throw ToleranceError(os.str());
        }
        u *= 2.0;
    }
}

/// Weighted CDF ell -> E_0[1{L_u <= ell} M^h_u] against H.  (g, L_u) are
/// sampled exactly with the GProposal importance weights; S(X_u) enters
/// through its exact conditional mean given g.
inline LinftyReport linfty_law_check(const DiffusionSpec& spec, const WeightFunction& h, std::size_t n,
                                     std::uint64_t seed, const LinftyOptions& opt = {}) {
    const detail::Preset p = detail::require_preset(spec, "linfty_law_check");
    if (n == 0) throw DomainError("linfty_law_check: n must be > 0");
    LinftyReport rep;
    rep.seed = seed;
    rep.n_paths = n;
    if (opt.u > 0.0) {
        rep.u = opt.u;
        rep.unabsorbed = unabsorbed_mass(spec, h, rep.u, opt.probe_paths, seed ^ 0x5bd1e995ULL, opt.threads).mean;
    } else {
        std::tie(rep.u, rep.unabsorbed) = adaptive_horizon(spec, h, seed, opt);
    }
    double top = h.support();
    if (!std::isfinite(top)) {
        top = 1.0;
        while (h.H(top) < 0.999) top *= 2.0;
    }
    const std::size_t G = std::max<std::size_t>(opt.grid_points, 2);
    for (std::size_t j = 1; j <= G; ++j) rep.ell.push_back(top * static_cast<double>(j) / static_cast<double>(G));

    // proposal scale: g below (kappa K)^{1/alpha} gives L below K when W ~ 1
    const double c = std::pow(p.kappa * top, 1.0 / p.alpha);
    struct Acc {
        std::vector<Moments> cdf;
        Moments total;
    };
    const double u = rep.u;
    const auto parts = run_blocks<Acc>(
        n, seed,
        [&](std::size_t, std::size_t, std::size_t count, Rng& rng) {
            Acc acc;
            acc.cdf.resize(G);
            detail::GProposal prop(p, u, c);
            for (std::size_t i = 0; i < count; ++i) {
                const detail::WeightedG wg = prop(rng);
                const double w = detail::size_biased_stable(rng, p.alpha);
                const double l = std::pow(wg.g / w, p.alpha) / p.kappa;
                const double m = detail::mean_scale_at_end(p, u - wg.g) * h.h(l) + h.upper_mass(l);
                const double v = wg.weight * m;
                acc.total.add(v);
                for (std::size_t j = 0; j < G; ++j) acc.cdf[j].add(l <= rep.ell[j] ? v : 0.0);
            }
            return acc;
        },
        opt.threads);
    Moments total;
    std::vector<Moments> cdf(G);
    for (const auto& a : parts) {
        total += a.total;
        for (std::size_t j = 0; j < G; ++j) cdf[j] += a.cdf[j];
    }
    rep.total_mass = total.mean();
    for (std::size_t j = 0; j < G; ++j) {
        rep.weighted_cdf.push_back(cdf[j].mean());
        rep.cdf_std_error.push_back(cdf[j].std_error());
        rep.target_cdf.push_back(h.H(rep.ell[j]));
        rep.max_gap = std::max(rep.max_gap, std::abs(rep.weighted_cdf[j] - rep.target_cdf[j]));
    }
    return rep;
}

// ---------------------------------------------------------------------------
// h-transform X^up

enum class DensitySource { Auto, Oracle, Spectral };

struct UparrowOptions {
    DensitySource source = DensitySource::Auto;
    SpectralOptions spectral;
};

/// p^up(t;x,y) = p^(t;x,y) / (S(x) S(y)) w.r.t. S(y)^2 m(dy); at x = 0 the
/// limit f_{y0}(t) / S(y).
inline double uparrow_density(const DiffusionSpec& spec, double x, double y, double t, const UparrowOptions& opt = {}) {
    if (!(t > 0.0)) throw DomainError("uparrow_density: t must be > 0");
    if (!(y > 0.0)) throw DomainError("uparrow_density: y must be > 0");
    if (!(x >= 0.0)) throw DomainError("uparrow_density: x must be >= 0");
    const bool oracle = opt.source == DensitySource::Oracle ||
                        (opt.source == DensitySource::Auto && spec.oracles.hitting_density && spec.oracles.killed_density);
    if (opt.source == DensitySource::Oracle && !(spec.oracles.hitting_density && spec.oracles.killed_density))
        throw UnsupportedError("uparrow_density: spec has no closed-form densities");
    if (x == 0.0) {
        const double f = oracle ? spec.oracles.hitting_density(y, t) : hitting_density(spec, y, t, opt.spectral);
        return f / spec.scale(y);
    }
    const double k = oracle ? spec.oracles.killed_density(t, x, y) : transition_density(spec, x, y, t, true, opt.spectral);
    return k / (spec.scale(x) * spec.scale(y));
}

/// int p^up(t;0,y) S(y)^2 m'(y) dy, which must be 1.  The y-range stops
/// where y^2/2t = cutoff; the mass beyond is of order e^{-cutoff}.  Spectral
/// densities lose accuracy to cancellation past about 18, so they stop at 15.
inline QuadResult uparrow_normalization(const DiffusionSpec& spec, double t, const UparrowOptions& opt = {},
                                        double cutoff = 18.0) {
    if (!(t > 0.0)) throw DomainError("uparrow_normalization: t must be > 0");
    auto f = [&](double y) {
        if (y <= 0.0) return 0.0;
        const double s = spec.scale(y);
        return uparrow_density(spec, 0.0, y, t, opt) * s * s * spec.speed_density(y);
    };
    if (opt.source == DensitySource::Spectral) cutoff = std::min(cutoff, 15.0);
    const double top = std::sqrt(2.0 * t * cutoff);
    const double mid = std::sqrt(t);
    QuadTolerance tol{1e-9, 1e-8, 12};
    return integrate_endpoint_singular(f, 0.0, mid, tol) + integrate(f, mid, top, tol);
}

// ---------------------------------------------------------------------------
// Behaviour after the last zero

struct PostLastZeroOptions {
    double u = 0.0;  // 0: adaptive, as for linfty_law_check
    std::size_t bins = 12;
    double threshold = 0.05;
    std::size_t batches = 20;
    LinftyOptions horizon;
};

struct PostLastZeroReport {
    double u = 0.0;
    double v = 0.0;
    std::vector<double> bin_edges;      // bins of y = X_{lambda+v}
    std::vector<double> weighted_mass;  // self-normalised weighted histogram
    std::vector<double> target_mass;    // from uparrow_density
    double distance = 0.0;              // sum (p - q)^2 / q
    bool pass = false;
    double correlation = 0.0;           // weighted corr(L_lambda, X_{lambda+v})
    double correlation_std_error = 0.0; // batch means
    double excluded_mass = 0.0;         // weight of paths with u - lambda < v
    std::size_t n_paths = 0;
    std::uint64_t seed = 0;
};

/// Under E_0[. M^h_u], compares the law of X at time v after the last zero
/// lambda before u with X^up_v started at 0.  lambda and L_lambda are sampled
/// exactly; the excursion straddling u gives X_{lambda+v} by rejection from its
/// entrance law (accept with P_y(H_0 > u - lambda - v)), and S(X_u) enters
/// through E[S(X_u) | X_{lambda+v} = y, survival] = S(y) / P_y(H_0 > u-lambda-v).
inline PostLastZeroReport post_lastzero_marginal_check(const DiffusionSpec& spec, const WeightFunction& h, double v,
                                                       std::size_t n, std::uint64_t seed,
                                                       const PostLastZeroOptions& opt = {}) {
    const detail::Preset p = detail::require_preset(spec, "post_lastzero_marginal_check");
    if (!(v >= 0.0)) throw DomainError("post_lastzero_marginal_check: v must be >= 0");
    if (n == 0) throw DomainError("post_lastzero_marginal_check: n must be > 0");
    PostLastZeroReport rep;
    rep.v = v;
    rep.seed = seed;
    rep.n_paths = n;
    rep.u = opt.u > 0.0 ? opt.u : adaptive_horizon(spec, h, seed, opt.horizon).first;
    if (v == 0.0) {
        // X_lambda = 0: all mass sits at the origin
        rep.bin_edges = {0.0, 0.0};
        rep.weighted_mass = {1.0};
        rep.target_mass = {1.0};
        rep.pass = true;
        return rep;
    }
    // bins: equal target mass under the Rayleigh-type law of X^up_v from 0,
    // whose y^2/(2v) is Gamma(1 + alpha)
    const std::size_t B = std::max<std::size_t>(opt.bins, 2);
    rep.bin_edges.push_back(0.0);
    for (std::size_t b = 1; b < B; ++b) {
        const double q = boost::math::gamma_p_inv(1.0 + p.alpha, static_cast<double>(b) / static_cast<double>(B));
        rep.bin_edges.push_back(std::sqrt(2.0 * v * q));
    }
    rep.bin_edges.push_back(std::numeric_limits<double>::infinity());
    // target masses by quadrature of the uparrow density (not the Gamma law above)
    auto dens = [&](double y) {
        if (y <= 0.0) return 0.0;
        const double s = spec.scale(y);
        return uparrow_density(spec, 0.0, y, v) * s * s * spec.speed_density(y);
    };
    for (std::size_t b = 0; b < B; ++b) {
        const double lo = rep.bin_edges[b];
        const double hi = std::isfinite(rep.bin_edges[b + 1]) ? rep.bin_edges[b + 1] : lo + std::sqrt(2.0 * v * 60.0);
        rep.target_mass.push_back(b == 0 ? integrate_endpoint_singular(dens, lo, hi).value : integrate(dens, lo, hi).value);
    }

    const double u = rep.u;
    const double top = std::isfinite(h.support()) ? h.support() : 1.0;
    const double c = std::pow(p.kappa * top, 1.0 / p.alpha);
    struct Acc {
        std::vector<double> mass;
        double included = 0.0, excluded = 0.0;
        // weighted sums for the correlation
        double w = 0.0, wl = 0.0, wy = 0.0, wll = 0.0, wyy = 0.0, wly = 0.0;
    };
    const auto parts = run_blocks<Acc>(
        n, seed,
        [&](std::size_t, std::size_t, std::size_t count, Rng& rng) {
            Acc acc;
            acc.mass.assign(B, 0.0);
            detail::GProposal prop(p, u, c);
            boost::random::exponential_distribution<double> exp1(1.0);
            for (std::size_t i = 0; i < count; ++i) {
                const detail::WeightedG wg = prop(rng);
                const double w = detail::size_biased_stable(rng, p.alpha);
                const double l = std::pow(wg.g / w, p.alpha) / p.kappa;
                const double r = u - wg.g;
                if (r < v) {
                    acc.excluded += wg.weight * (detail::mean_scale_at_end(p, r) * h.h(l) + h.upper_mass(l));
                    continue;
                }
                const double rest = r - v;
                double y, survive;
                do {
                    y = std::sqrt(2.0 * v * exp1(rng));
                    survive = rest > 0.0 ? boost::math::gamma_p(p.alpha, y * y / (2.0 * rest)) : 1.0;
                } while (detail::uniform_open(rng) > survive);
                const double weight = wg.weight * (spec.scale(y) / survive * h.h(l) + h.upper_mass(l));
                const std::size_t b = static_cast<std::size_t>(
                    std::upper_bound(rep.bin_edges.begin() + 1, rep.bin_edges.end() - 1, y) - (rep.bin_edges.begin() + 1));
                acc.mass[b] += weight;
                acc.included += weight;
                acc.w += weight;
                acc.wl += weight * l;
                acc.wy += weight * y;
                acc.wll += weight * l * l;
                acc.wyy += weight * y * y;
                acc.wly += weight * l * y;
            }
            return acc;
        },
        opt.horizon.threads);

    Acc all;
    all.mass.assign(B, 0.0);
    auto corr = [](const Acc& a) {
        const double ml = a.wl / a.w, my = a.wy / a.w;
        const double cov = a.wly / a.w - ml * my;
        const double vl = a.wll / a.w - ml * ml, vy = a.wyy / a.w - my * my;
        return vl > 0.0 && vy > 0.0 ? cov / std::sqrt(vl * vy) : 0.0;
    };
    const std::size_t nb = std::max<std::size_t>(1, std::min(opt.batches, parts.size()));
    std::vector<Acc> batch(nb);
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const Acc& a = parts[k];
        Acc& bt = batch[k * nb / parts.size()];
        for (Acc* t : {&all, &bt}) {
            if (t->mass.empty()) t->mass.assign(B, 0.0);
            for (std::size_t b = 0; b < B; ++b) t->mass[b] += a.mass[b];
            t->included += a.included;
            t->excluded += a.excluded;
            t->w += a.w;
            t->wl += a.wl;
            t->wy += a.wy;
            t->wll += a.wll;
            t->wyy += a.wyy;
            t->wly += a.wly;
        }
    }
    rep.excluded_mass = all.excluded / static_cast<double>(n);
    for (std::size_t b = 0; b < B; ++b) {
        const double q = all.mass[b] / all.included;
        rep.weighted_mass.push_back(q);
        const double t = rep.target_mass[b];
        rep.distance += (q - t) * (q - t) / t;
    }
    rep.pass = rep.distance < opt.threshold;
    rep.correlation = all.w > 0.0 ? corr(all) : 0.0;
    if (nb >= 2) {
        Moments m;
        for (const auto& bt : batch)
            if (bt.w > 0.0) m.add(corr(bt));
        rep.correlation_std_error = m.std_error();
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Numerator asymptotics  E_a[h(L_t)] ~ (S(a) h(0) + 1) nu((t, inf))

/// E_a[h(L_t)] / nu((t,inf)) with L_t sampled exactly: L_t = 0 if H_0 >= t,
/// else ((t - H_0)/tau^_1)^alpha with tau^ independent of H_0.
inline McEstimate numerator_ratio_mc(const DiffusionSpec& spec, const WeightFunction& h, double a, double t,
                                     std::size_t n, std::uint64_t seed, std::optional<unsigned> threads = std::nullopt) {
    const detail::Preset p = detail::require_preset(spec, "numerator_ratio_mc");
    if (!(a >= 0.0)) throw DomainError("numerator_ratio_mc: a must be >= 0");
    if (!(t > 0.0)) throw DomainError("numerator_ratio_mc: t must be > 0");
    const double nu = spec.oracles.levy_tail(t);
    const auto parts = run_blocks<Moments>(
        n, seed,
        [&](std::size_t, std::size_t, std::size_t count, Rng& rng) {
            Moments m;
            for (std::size_t i = 0; i < count; ++i) {
                const double h0 = detail::sample_h0(rng, a, p.alpha);
                const double l = h0 >= t ? 0.0 : std::pow((t - h0) / sample_tau(rng, p.alpha, 1.0), p.alpha);
                m.add(h.h(l) / nu);
            }
            return m;
        },
        threads);
    return detail::to_estimate(detail::reduce(parts), seed);
}

}  // namespace levykit

#endif  // LEVYKIT_PENALIZATION_HPP
