#ifndef LEVYKIT_MONTECARLO_HPP
#define LEVYKIT_MONTECARLO_HPP

// Monte Carlo for the Bessel presets: exact grid transitions of the reflected
// process with an occupation-time local time, exact sampling of the inverse
// local time (a positive stable subordinator), and the estimators built on
// them.  Every estimator is reproducible from its seed alone.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <sstream>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>
#include <boost/random/beta_distribution.hpp>
#include <boost/random/exponential_distribution.hpp>
#include <boost/random/gamma_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/poisson_distribution.hpp>
#include <boost/random/uniform_01.hpp>

#include "levykit/diffusion.hpp"
#include "levykit/errors.hpp"
#include "levykit/random.hpp"

namespace levykit {

struct McEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t n_paths = 0;
    std::uint64_t seed = 0;
};

struct SubordinatorSample {
    double level = 0.0;
    double value = 0.0;
};

/// Local-time band options.  epsilon = 0 means sqrt(dt).
struct PathOptions {
    double epsilon = 0.0;
    std::optional<unsigned> threads;
};

/// One discretised path.  local_time is the running occupation estimate
/// (1/M(eps)) * int_0^t 1{X_s < eps} ds with trapezoid weights on the grid;
/// corrected_local_time is the final value of the bias-corrected estimator
/// the Monte Carlo routines use (see LocalTimeBands).
struct PathSample {
    std::vector<double> times;
    std::vector<double> positions;
    std::vector<double> local_time;
    std::optional<std::size_t> hit_zero_at;  // first grid index inside the zero band
    double epsilon = 0.0;
    double corrected_local_time = 0.0;
};

namespace detail {

struct Preset {
    double alpha;
    double delta;
    double kappa;
};

inline Preset require_preset(const DiffusionSpec& spec, const char* where) {
    if (!spec.alpha) throw UnsupportedError(std::string(where) + ": only Bessel/Brownian presets can be simulated");
    const double a = *spec.alpha;
    return {a, 2.0 - 2.0 * a, bessel_kappa(a)};
}

inline McEstimate to_estimate(const Moments& m, std::uint64_t seed) {
    return {m.mean(), m.std_error(), static_cast<std::size_t>(m.n), seed};
}

inline Moments reduce(const std::vector<Moments>& parts) {
    Moments total;
    for (const auto& p : parts) total += p;
    return total;
}

// Kanter's function: for theta ~ U(0,pi) and E ~ Exp(1),
// (A(theta)/E)^{(1-a)/a} has Laplace transform exp(-lambda^a).
inline double kanter_a(double theta, double a) {
    const double sa = std::sin(a * theta);
    return std::pow(sa / std::sin(theta), 1.0 / (1.0 - a)) * std::sin((1.0 - a) * theta) / sa;
}

inline double kanter_a0(double a) { return std::pow(a, a / (1.0 - a)) * (1.0 - a); }

// Uniform on (0,1) from the top 53 bits.
inline double uniform_open(Rng& rng) {
    double v;
    do v = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    while (v <= 0.0);
    return v;
}

inline double unit_stable(Rng& rng, double a) {
    const double theta = std::numbers::pi * uniform_open(rng);
    boost::random::exponential_distribution<double> exp1(1.0);
    return std::pow(kanter_a(theta, a) / exp1(rng), (1.0 - a) / a);
}

// W with density proportional to w^{-a} times the unit stable density: E is
// Gamma(2-a) and theta is drawn from A(theta)^{a-1} by rejection.
inline double size_biased_stable(Rng& rng, double a) {
    const double a0 = kanter_a0(a);
    double theta, A;
    do {
        theta = std::numbers::pi * uniform_open(rng);
        A = kanter_a(theta, a);
    } while (uniform_open(rng) > std::pow(A / a0, a - 1.0));
    boost::random::gamma_distribution<double> g(2.0 - a, 1.0);
    return std::pow(A / g(rng), (1.0 - a) / a);
}

// H0 under P_x: x^2 / (2 G), G ~ Gamma(alpha).
inline double sample_h0(Rng& rng, double x, double a) {
    if (x <= 0.0) return 0.0;
    boost::random::gamma_distribution<double> g(a, 1.0);
    return x * x / (2.0 * g(rng));
}

// Gamma(shape, 1) by Marsaglia-Tsang, with the U^{1/shape} boost below shape
// 1.  Boost's sampler costs several times more per draw, and this one runs
// once per grid step of every non-Brownian path.
class FastGamma {
public:
    explicit FastGamma(double shape) : boost_(shape < 1.0), inv_shape_(1.0 / shape) {
        if (boost_ && inv_shape_ <= 8.0 && inv_shape_ == std::floor(inv_shape_))
            int_power_ = static_cast<int>(inv_shape_);
        const double a = boost_ ? shape + 1.0 : shape;
        d_ = a - 1.0 / 3.0;
        c_ = 1.0 / std::sqrt(9.0 * d_);
    }

    double operator()(Rng& rng) {
        double g;
        for (;;) {
            double x, v;
            do {
                x = normal_(rng);
                v = 1.0 + c_ * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform_open(rng);
            const double x2 = x * x;
            if (u < 1.0 - 0.0331 * x2 * x2 || std::log(u) < 0.5 * x2 + d_ * (1.0 - v + std::log(v))) {
                g = d_ * v;
                break;
            }
        }
        if (boost_) {
            const double u = uniform_open(rng);
            if (int_power_ > 0) {
                double p = u;
                for (int i = 1; i < int_power_; ++i) p *= u;
                g *= p;
            } else {
                g *= std::pow(u, inv_shape_);
            }
        }
        return g;
    }

private:
    bool boost_;
    double inv_shape_;
    int int_power_ = 0;
    double d_ = 0.0;
    double c_ = 0.0;
    boost::random::normal_distribution<double> normal_;
};

// Exact grid transitions.  Brownian: |W|.  Otherwise Z = X^2 is a squared
// Bessel process of dimension delta, whose transition over dt is dt times a
// noncentral chi-square with delta degrees of freedom and noncentrality Z/dt.
class Stepper {
public:
    Stepper(double delta, double dt)
        : delta_(delta), dt_(dt), sdt_(std::sqrt(dt)), brownian_(delta == 1.0),
          extra_(delta > 1.0 ? 0.5 * (delta - 1.0) : 1.0) {}

    bool brownian() const { return brownian_; }

    // Brownian state is x, otherwise z = x^2.
    double step(double s, Rng& rng) {
        if (brownian_) return std::abs(s + sdt_ * normal_(rng));
        if (delta_ > 1.0) {
            const double w = std::sqrt(s) + sdt_ * normal_(rng);
            return w * w + 2.0 * dt_ * extra_(rng);
        }
        // delta < 1: Poisson mixture of central chi-squares
        const double mean = 0.5 * s / dt_;
        int k = 0;
        if (mean > 0.0) {
            boost::random::poisson_distribution<int, double> pois(mean);
            k = pois(rng);
        }
        FastGamma g(0.5 * delta_ + k);
        return 2.0 * dt_ * g(rng);
    }

    double position(double s) const { return brownian_ ? s : std::sqrt(s); }
    double state(double x) const { return brownian_ ? x : x * x; }

private:
    double delta_;
    double dt_;
    double sdt_;
    bool brownian_;
    boost::random::normal_distribution<double> normal_;
    FastGamma extra_;
};

// Occupation-time local time.  A band of width eps has bias proportional to
// S(eps) ~ eps^{2 alpha}; combining bands 2 sqrt(dt) and 4 sqrt(dt) as
// (r L1 - L2)/(r - 1), r = 2^{2 alpha}, removes the leading term.  The plain
// band eps (default sqrt(dt)) is kept for the running estimate.
struct LocalTimeBands {
    double dt;
    double eps0, eps1, eps2;
    double lim0, lim1, lim2;  // thresholds in stepper state units
    double inv_m0, inv_m1, inv_m2;
    double r;

    LocalTimeBands(const DiffusionSpec& spec, const Stepper& st, double dt_, double eps) : dt(dt_) {
        eps0 = eps > 0.0 ? eps : std::sqrt(dt);
        if (eps0 * eps0 < dt * (1.0 - 1e-12)) {
            std::ostringstream os;
            os << "local time band eps=" << eps0 << " is finer than sqrt(dt)=" << std::sqrt(dt);
            throw ResolutionError(os.str());
        }
        eps1 = 2.0 * std::sqrt(dt);
        eps2 = 4.0 * std::sqrt(dt);
        lim0 = st.state(eps0);
        lim1 = st.state(eps1);
        lim2 = st.state(eps2);
        inv_m0 = 1.0 / cumulative_speed(spec, eps0);
        inv_m1 = 1.0 / cumulative_speed(spec, eps1);
        inv_m2 = 1.0 / cumulative_speed(spec, eps2);
        r = std::pow(2.0, 2.0 * *spec.alpha);
    }
};

// Trapezoid occupation counters in units of dt/2.
struct Occupation {
    double o0 = 0.0, o1 = 0.0, o2 = 0.0;

    void add_point(double s, const LocalTimeBands& b, double w) {
        if (s < b.lim2) {
            o2 += w;
            if (s < b.lim1) {
                o1 += w;
                if (s < b.lim0) o0 += w;
            }
        }
    }
    double plain(const LocalTimeBands& b) const { return 0.5 * b.dt * o0 * b.inv_m0; }
    double corrected(const LocalTimeBands& b) const {
        const double l1 = 0.5 * b.dt * o1 * b.inv_m1;
        const double l2 = 0.5 * b.dt * o2 * b.inv_m2;
        return (b.r * l1 - l2) / (b.r - 1.0);
    }
};

inline void check_grid(double dt, double t_end, const char* where) {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw DomainError(std::string(where) + ": dt must be > 0");
    if (!(t_end >= 0.0)) throw DomainError(std::string(where) + ": time horizon must be >= 0");
}

inline std::size_t steps_for(double t, double dt) { return static_cast<std::size_t>(std::llround(t / dt)); }

/// State of a path at a checkpoint.
struct Snapshot {
    double x;
    double local_time;  // corrected estimator
};

// Simulates n paths from x0 and hands each path's snapshots at the sorted
// checkpoint times to on_path(acc, snapshots).  Acc is reduced by the caller.
template <class Acc, class OnPath>
std::vector<Acc> simulate_many(const DiffusionSpec& spec, double x0, double dt, const std::vector<double>& checkpoints,
                               std::size_t n, std::uint64_t seed, const PathOptions& opt, OnPath&& on_path) {
    const Preset p = require_preset(spec, "simulate");
    if (!(x0 >= 0.0)) throw DomainError("simulate: x0 must be >= 0");
    if (checkpoints.empty()) throw DomainError("simulate: no checkpoint times");
    std::vector<std::size_t> at;
    for (double t : checkpoints) {
        check_grid(dt, t, "simulate");
        at.push_back(steps_for(t, dt));
    }
    if (!std::is_sorted(at.begin(), at.end())) throw DomainError("simulate: checkpoints must be increasing");
    return run_blocks<Acc>(
        n, seed,
        [&](std::size_t, std::size_t, std::size_t count, Rng& rng) {
            Acc acc{};
            Stepper st(p.delta, dt);
            const LocalTimeBands bands(spec, st, dt, opt.epsilon);
            std::vector<Snapshot> snaps(at.size());
            for (std::size_t i = 0; i < count; ++i) {
                double s = st.state(x0);
                Occupation occ;
                std::size_t k = 0, c = 0;
                while (c < at.size() && at[c] == 0) snaps[c++] = {x0, 0.0};
                occ.add_point(s, bands, 1.0);
                while (c < at.size()) {
                    s = st.step(s, rng);
                    ++k;
                    // closes the cell; the endpoint then has its half weight
                    occ.add_point(s, bands, 1.0);
                    while (c < at.size() && at[c] == k) snaps[c++] = {st.position(s), occ.corrected(bands)};
                    occ.add_point(s, bands, 1.0);
                }
                on_path(acc, snaps);
            }
            return acc;
        },
        opt.threads);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Paths

/// Reflected path on the grid 0, dt, ..., t_end.
inline PathSample simulate_path(const DiffusionSpec& spec, double x0, double t_end, double dt, std::uint64_t seed,
                                const PathOptions& opt = {}) {
    const detail::Preset p = detail::require_preset(spec, "simulate_path");
    if (!(x0 >= 0.0)) throw DomainError("simulate_path: x0 must be >= 0");
    detail::check_grid(dt, t_end, "simulate_path");
    if (t_end > 0.0 && t_end < dt) throw DomainError("simulate_path: t_end must be 0 or >= dt");
    detail::Stepper st(p.delta, dt);
    const detail::LocalTimeBands bands(spec, st, dt, opt.epsilon);
    const std::size_t steps = detail::steps_for(t_end, dt);

    PathSample out;
    out.epsilon = bands.eps0;
    out.times.reserve(steps + 1);
    out.positions.reserve(steps + 1);
    out.local_time.reserve(steps + 1);
    Rng rng = block_rng(seed, 0);
    double s = st.state(x0);
    detail::Occupation occ;
    out.times.push_back(0.0);
    out.positions.push_back(x0);
    out.local_time.push_back(0.0);
    if (s < bands.lim0) out.hit_zero_at = 0;
    for (std::size_t k = 1; k <= steps; ++k) {
        occ.add_point(s, bands, 1.0);
        s = st.step(s, rng);
        occ.add_point(s, bands, 1.0);
        out.times.push_back(static_cast<double>(k) * dt);
        out.positions.push_back(st.position(s));
        out.local_time.push_back(occ.plain(bands));
        if (!out.hit_zero_at && s < bands.lim0) out.hit_zero_at = k;
    }
    out.corrected_local_time = occ.corrected(bands);
    return out;
}

// ---------------------------------------------------------------------------
// Inverse local time

/// tau_l = (kappa l)^{1/alpha} S with S unit positive stable, so that
/// E exp(-lambda tau_l) = exp(-l kappa lambda^alpha).
inline double sample_tau(Rng& rng, double alpha, double level) {
    return std::pow(bessel_kappa(alpha) * level, 1.0 / alpha) * detail::unit_stable(rng, alpha);
}

inline SubordinatorSample sample_tau(const DiffusionSpec& spec, double level, std::uint64_t seed) {
    const detail::Preset p = detail::require_preset(spec, "sample_tau");
    if (!(level > 0.0)) throw DomainError("sample_tau: level must be > 0");
    Rng rng = block_rng(seed, 0);
    return {level, sample_tau(rng, p.alpha, level)};
}

/// -log E[exp(-lambda tau_l)] / l, with a delta-method standard error.
inline McEstimate levy_exponent_mc(const DiffusionSpec& spec, double lambda, double level, std::size_t n,
                                   std::uint64_t seed, std::optional<unsigned> threads = std::nullopt) {
    const detail::Preset p = detail::require_preset(spec, "levy_exponent_mc");
    if (!(lambda >= 0.0)) throw DomainError("levy_exponent_mc: lambda must be >= 0");
    if (!(level > 0.0)) throw DomainError("levy_exponent_mc: level must be > 0");
    if (n == 0) throw DomainError("levy_exponent_mc: n must be > 0");
    if (lambda == 0.0) return {0.0, 0.0, n, seed};
    const auto parts = run_blocks<Moments>(
        n, seed,
        [&](std::size_t, std::size_t, std::size_t count, Rng& rng) {
            Moments m;
            for (std::size_t i = 0; i < count; ++i) m.add(std::exp(-lambda * sample_tau(rng, p.alpha, level)));
            return m;
        },
        threads);
    const Moments m = detail::reduce(parts);
    if (!(m.mean() > 0.0)) throw ToleranceError("levy_exponent_mc: Laplace transform underflowed; lower lambda*level");
    return {-std::log(m.mean()) / level, m.std_error() / (m.mean() * level), n, seed};
}

// ---------------------------------------------------------------------------
// Tail estimators

enum class McMethod { Exact, Path };

struct TailMcOptions {
    McMethod method = McMethod::Exact;
    double dt = 1e-3;  // Path method only
    PathOptions path;
};

/// P_x(H_0 > t).  Exact: H_0 = x^2/(2 Gamma(alpha)).  Path: first grid visit
/// to the zero band.
inline McEstimate estimate_hitting_tail(const DiffusionSpec& spec, double x, double t, std::size_t n,
                                        std::uint64_t seed, const TailMcOptions& opt = {}) {
    const detail::Preset p = detail::require_preset(spec, "estimate_hitting_tail");
    if (!(x >= 0.0)) throw DomainError("estimate_hitting_tail: x must be >= 0");
    if (!(t > 0.0)) throw DomainError("estimate_hitting_tail: t must be > 0");
    if (n == 0) throw DomainError("estimate_hitting_tail: n must be > 0");
    if (opt.method == McMethod::Exact) {
        const auto parts = run_blocks<Moments>(
            n, seed,
            [&](std::size_t, std::size_t, std::size_t count, Rng& rng) {
                Moments m;
                for (std::size_t i = 0; i < count; ++i) m.add(detail::sample_h0(rng, x, p.alpha) > t ? 1.0 : 0.0);
                return m;
            },
            opt.path.threads);
        return detail::to_estimate(detail::reduce(parts), seed);
    }
    detail::check_grid(opt.dt, t, "estimate_hitting_tail");
    const std::size_t steps = detail::steps_for(t, opt.dt);
    const auto parts = run_blocks<Moments>(
        n, seed,
        [&](std::size_t, std::size_t, std::size_t count, Rng& rng) {
            Moments m;
            detail::Stepper st(p.delta, opt.dt);
            const detail::LocalTimeBands bands(spec, st, opt.dt, opt.path.epsilon);
            for (std::size_t i = 0; i < count; ++i) {
                double s = st.state(x);
                bool alive = !(s < bands.lim0);
                for (std::size_t k = 0; alive && k < steps; ++k) {
                    s = st.step(s, rng);
                    alive = !(s < bands.lim0);
                }
                m.add(alive ? 1.0 : 0.0);
            }
            return m;
        },
        opt.path.threads);
    return detail::to_estimate(detail::reduce(parts), seed);
}

namespace detail {

// Stratified conditional estimator of P(H0 + tau_l >= t).  Given theta and
// H0, the event is {E <= A(theta) (kappa l)^{1/(1-a)} (t-H0)^{-a/(1-a)}}, so
// its conditional probability is explicit.  theta is stratified into n/2 equal
// cells with two draws each; the within-cell differences give the variance.
struct StratSums {
    double sum = 0.0;
    double diff_sq = 0.0;
};

inline McEstimate localtime_tail_fast(const Preset& p, double x, double level, double t, std::size_t n,
                                      std::uint64_t seed, std::optional<unsigned> threads) {
    const std::size_t cells = (n + 1) / 2;
    const std::size_t total = 2 * cells;
    const double c = std::pow(p.kappa * level, 1.0 / (1.0 - p.alpha));
    const double e = -p.alpha / (1.0 - p.alpha);
    auto q = [&](double theta, double h0) {
        const double s = t - h0;
        if (s <= 0.0) return 1.0;
        if (level == 0.0) return 0.0;
        return -std::expm1(-kanter_a(theta, p.alpha) * c * std::pow(s, e));
    };
    const auto parts = run_blocks<StratSums>(
        total, seed,
        [&](std::size_t, std::size_t first, std::size_t count, Rng& rng) {
            StratSums acc;
            boost::random::uniform_01<double> u01;
            for (std::size_t i = 0; i + 1 < count; i += 2) {
                const double cell = static_cast<double>((first + i) / 2);
                double v[2];
                for (double& vi : v) {
                    const double theta = std::numbers::pi * (cell + u01(rng)) / static_cast<double>(cells);
                    vi = q(std::clamp(theta, 1e-300, std::numbers::pi * (1.0 - 1e-16)), sample_h0(rng, x, p.alpha));
                }
                acc.sum += v[0] + v[1];
                acc.diff_sq += (v[0] - v[1]) * (v[0] - v[1]);
            }
            return acc;
        },
        threads);
    StratSums s;
    for (const auto& pr : parts) {
        s.sum += pr.sum;
        s.diff_sq += pr.diff_sq;
    }
    const double m = static_cast<double>(cells);
    return {s.sum / static_cast<double>(total), std::sqrt(s.diff_sq) / (2.0 * m), total, seed};
}

}  // namespace detail

/// P_x(L_t <= l).  Exact: the identity P_x(L_t <= l) = P(H0 + tau_l >= t)
/// with independent H0 and tau_l, evaluated by stratified conditional Monte
/// Carlo.  Path: indicator of the corrected occupation estimate.
inline McEstimate estimate_localtime_tail(const DiffusionSpec& spec, double x, double level, double t, std::size_t n,
                                          std::uint64_t seed, const TailMcOptions& opt = {}) {
    const detail::Preset p = detail::require_preset(spec, "estimate_localtime_tail");
    if (!(x >= 0.0)) throw DomainError("estimate_localtime_tail: x must be >= 0");
    if (!(level >= 0.0)) throw DomainError("estimate_localtime_tail: level must be >= 0");
    if (!(t > 0.0)) throw DomainError("estimate_localtime_tail: t must be > 0");
    if (n == 0) throw DomainError("estimate_localtime_tail: n must be > 0");
    if (opt.method == McMethod::Exact) return detail::localtime_tail_fast(p, x, level, t, n, seed, opt.path.threads);
    const auto parts = detail::simulate_many<Moments>(spec, x, opt.dt, {t}, n, seed, opt.path,
                                                      [&](Moments& m, const std::vector<detail::Snapshot>& s) {
                                                          m.add(s[0].local_time <= level ? 1.0 : 0.0);
                                                      });
    return detail::to_estimate(detail::reduce(parts), seed);
}

// ---------------------------------------------------------------------------
// Doob-Meyer mean identity  E_0 S(X_t) = E_0 L_t

struct MeanIdentityRow {
    double t = 0.0;
    McEstimate scale_mean;       // E S(X_t)
    McEstimate local_time_mean;  // E L_t
    McEstimate difference;       // paired E[S(X_t) - L_t]
};

inline std::vector<MeanIdentityRow> mean_identity(const DiffusionSpec& spec, const std::vector<double>& times,
                                                  std::size_t n, double dt, std::uint64_t seed,
                                                  const PathOptions& opt = {}) {
    if (n == 0) throw DomainError("mean_identity: n must be > 0");
    struct Acc {
        std::vector<Moments> s, l, d;
    };
    const std::size_t k = times.size();
    const auto parts = detail::simulate_many<Acc>(spec, 0.0, dt, times, n, seed, opt,
                                                  [&](Acc& a, const std::vector<detail::Snapshot>& snaps) {
                                                      if (a.s.empty()) a.s.resize(k), a.l.resize(k), a.d.resize(k);
                                                      for (std::size_t i = 0; i < k; ++i) {
                                                          const double sx = spec.scale(snaps[i].x);
                                                          a.s[i].add(sx);
                                                          a.l[i].add(snaps[i].local_time);
                                                          a.d[i].add(sx - snaps[i].local_time);
                                                      }
                                                  });
    std::vector<MeanIdentityRow> rows(k);
    for (std::size_t i = 0; i < k; ++i) {
        Moments s, l, d;
        for (const auto& p : parts) {
            if (p.s.empty()) continue;
            s += p.s[i];
            l += p.l[i];
            d += p.d[i];
        }
        rows[i] = {times[i], detail::to_estimate(s, seed), detail::to_estimate(l, seed), detail::to_estimate(d, seed)};
    }
    return rows;
}

/// E_0 S(X_t) = E_0 L_t = (2t)^alpha / (2 alpha Gamma(1-alpha)) for the presets.
inline double preset_mean_local_time(double alpha, double t) {
    return std::pow(2.0 * t, alpha) / (2.0 * alpha * std::tgamma(1.0 - alpha));
}

}  // namespace levykit

#endif  // LEVYKIT_MONTECARLO_HPP
