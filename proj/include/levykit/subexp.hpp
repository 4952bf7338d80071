#ifndef LEVYKIT_SUBEXP_HPP
#define LEVYKIT_SUBEXP_HPP

// Tail distributions on (0, inf) and the convolution-tail diagnostics used to
// probe subexponentiality numerically.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "levykit/errors.hpp"
#include "levykit/quadrature.hpp"

namespace levykit {

struct TailGridOptions {
    double x_min = 1e-3;
    double x_max = 1e6;
    std::size_t points = 4096;
};

/// Complementary distribution function F-bar tabulated on an increasing grid.
/// Between 0 and the first node the tail is interpolated linearly from
/// F-bar(0+) = 1; inside the grid log-log linearly where both values are
/// positive (exact for power laws) and linearly otherwise.  Past the last node
/// only analytic_tail may answer.
class TailDistribution {
public:
    TailDistribution(std::vector<double> grid, std::vector<double> tail,
                     std::function<double(double)> analytic_tail = {}, std::string label = "table")
        : grid_(std::move(grid)), tail_(std::move(tail)), analytic_(std::move(analytic_tail)), label_(std::move(label)) {
        if (grid_.size() < 2 || grid_.size() != tail_.size())
            throw ValidationError("TailDistribution: need at least two (x, tail) pairs of equal length");
        if (!(grid_.front() > 0.0)) throw ValidationError("TailDistribution: grid must lie in (0, inf)");
        for (std::size_t i = 0; i < grid_.size(); ++i) {
            if (i > 0 && !(grid_[i] > grid_[i - 1])) throw ValidationError("TailDistribution: grid must be increasing");
            if (!(tail_[i] >= 0.0 && tail_[i] <= 1.0)) throw ValidationError("TailDistribution: tail values must be in [0,1]");
            if (i > 0 && tail_[i] > tail_[i - 1]) throw ValidationError("TailDistribution: tail must be non-increasing");
        }
        log_grid_.resize(grid_.size());
        std::transform(grid_.begin(), grid_.end(), log_grid_.begin(), [](double v) { return std::log(v); });
    }

    /// Tabulates an analytic tail on a log grid and keeps it as the extension.
    static TailDistribution from_function(const std::function<double(double)>& tail, std::string label,
                                          const TailGridOptions& opt = {}) {
        if (!(opt.x_min > 0.0 && opt.x_max > opt.x_min && opt.points >= 2))
            throw DomainError("TailDistribution: bad grid options");
        std::vector<double> xs(opt.points), ts(opt.points);
        const double lo = std::log(opt.x_min), hi = std::log(opt.x_max);
        for (std::size_t i = 0; i < opt.points; ++i) {
            xs[i] = std::exp(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(opt.points - 1));
            ts[i] = std::clamp(tail(xs[i]), 0.0, 1.0);
        }
        xs.back() = opt.x_max;
        // enforce monotonicity against rounding in the user function
        for (std::size_t i = 1; i < ts.size(); ++i) ts[i] = std::min(ts[i], ts[i - 1]);
        return TailDistribution(std::move(xs), std::move(ts), tail, std::move(label));
    }

    double operator()(double x) const {
        if (!(x > 0.0)) return 1.0;
        if (x > grid_.back()) {
            if (!analytic_) {
                std::ostringstream os;
                os << "TailDistribution(" << label_ << "): x=" << x << " beyond grid end " << grid_.back()
                   << " and no analytic tail";
                throw RangeError(os.str());
            }
            return std::clamp(analytic_(x), 0.0, 1.0);
        }
        if (x <= grid_.front()) return 1.0 + (tail_.front() - 1.0) * x / grid_.front();
        const auto it = std::upper_bound(grid_.begin(), grid_.end(), x);
        const std::size_t i = static_cast<std::size_t>(it - grid_.begin()) - 1;
        if (i + 1 >= grid_.size()) return tail_.back();
        const double t0 = tail_[i], t1 = tail_[i + 1];
        if (t0 > 0.0 && t1 > 0.0) {
            const double w = (std::log(x) - log_grid_[i]) / (log_grid_[i + 1] - log_grid_[i]);
            return std::exp(std::log(t0) + w * (std::log(t1) - std::log(t0)));
        }
        const double w = (x - grid_[i]) / (grid_[i + 1] - grid_[i]);
        return t0 + w * (t1 - t0);
    }

    const std::vector<double>& grid() const { return grid_; }
    const std::vector<double>& tail() const { return tail_; }
    bool has_analytic_tail() const { return static_cast<bool>(analytic_); }
    double x_max() const { return grid_.back(); }
    const std::string& label() const { return label_; }

    /// Every other node (the last one kept), same extension.  Comparing a
    /// diagnostic on both gives its discretisation error.
    TailDistribution coarsened() const {
        std::vector<double> xs, ts;
        for (std::size_t i = 0; i < grid_.size(); i += 2) {
            xs.push_back(grid_[i]);
            ts.push_back(tail_[i]);
        }
        if (xs.back() != grid_.back()) {
            xs.push_back(grid_.back());
            ts.push_back(tail_.back());
        }
        if (xs.size() < 2) return *this;
        return TailDistribution(std::move(xs), std::move(ts), analytic_, label_);
    }

    /// Largest x the tail can be evaluated at.
    double covered_up_to() const { return analytic_ ? std::numeric_limits<double>::infinity() : grid_.back(); }

private:
    std::vector<double> grid_;
    std::vector<double> tail_;
    std::vector<double> log_grid_;
    std::function<double(double)> analytic_;
    std::string label_;
};

// ---------------------------------------------------------------------------
// Families

/// Pareto tail (x/scale)^{-alpha} for x >= scale, 1 below.
inline TailDistribution pareto_tail(double alpha, double scale = 1.0, const TailGridOptions& opt = {}) {
    if (!(alpha > 0.0 && scale > 0.0)) throw DomainError("pareto_tail: alpha and scale must be > 0");
    auto f = [alpha, scale](double x) { return x <= scale ? 1.0 : std::pow(x / scale, -alpha); };
    std::ostringstream os;
    os << "pareto(" << alpha << ")";
    return TailDistribution::from_function(f, os.str(), opt);
}

inline TailDistribution exp_tail(double rate, const TailGridOptions& opt = {}) {
    if (!(rate > 0.0)) throw DomainError("exp_tail: rate must be > 0");
    auto f = [rate](double x) { return std::exp(-rate * x); };
    std::ostringstream os;
    os << "exp(" << rate << ")";
    return TailDistribution::from_function(f, os.str(), opt);
}

/// min(1, c F-bar): a tail asymptotically equivalent to c F-bar.
inline TailDistribution scaled_tail(const TailDistribution& F, double c, const TailGridOptions& opt = {}) {
    if (!(c > 0.0)) throw DomainError("scaled_tail: c must be > 0");
    auto f = [F, c](double x) { return std::min(1.0, c * F(x)); };
    const double top = std::min(opt.x_max, F.covered_up_to());
    TailGridOptions o = opt;
    o.x_max = top;
    TailDistribution base = TailDistribution::from_function(f, F.label() + "*c", o);
    if (F.has_analytic_tail()) return base;
    return TailDistribution(base.grid(), base.tail(), {}, F.label() + "*c");
}

/// Reads "x,tail" rows; blank lines, '#' comments and one non-numeric header are skipped.
inline TailDistribution tail_from_csv(std::istream& in, std::string label = "csv") {
    std::vector<double> xs, ts;
    std::string line;
    std::size_t lineno = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream row(line);
        double x, t;
        if (!(row >> x >> t)) {
            if (!header_seen && xs.empty()) {
                header_seen = true;
                continue;
            }
            throw ValidationError("tail csv: line " + std::to_string(lineno) + " is not 'x,tail'");
        }
        xs.push_back(x);
        ts.push_back(t);
    }
    return TailDistribution(std::move(xs), std::move(ts), {}, std::move(label));
}

inline TailDistribution tail_from_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("tail csv: cannot open " + path);
    return tail_from_csv(in, path);
}

// ---------------------------------------------------------------------------
// Convolution tail

/// (F*G)-bar(x) = F-bar(x) + int_[0,x] G-bar(x-y) dF(y).  The Stieltjes
/// integral runs over the merged nodes {F grid <= x} and {x - G grid}, with
/// dF taken as differences of -F-bar and G-bar averaged over each cell.
inline double conv_tail(const TailDistribution& F, const TailDistribution& G, double x) {
    if (!(x > 0.0)) return 1.0;
    if (x > F.covered_up_to() || x > G.covered_up_to()) {
        std::ostringstream os;
        os << "conv_tail: x=" << x << " is outside the covered range";
        throw RangeError(os.str());
    }
    std::vector<double> nodes;
    nodes.reserve(F.grid().size() + G.grid().size() + 2);
    nodes.push_back(0.0);
    for (double y : F.grid()) {
        if (y >= x) break;
        nodes.push_back(y);
    }
    for (double g : G.grid()) {
        if (g >= x) break;
        nodes.push_back(x - g);
    }
    nodes.push_back(x);
    std::sort(nodes.begin(), nodes.end());
    nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());

    double sum = 0.0;
    double f_prev = 1.0;  // F-bar(0+)
    double g_prev = G(x);
    for (std::size_t i = 1; i < nodes.size(); ++i) {
        const double f_cur = F(nodes[i]);
        const double g_cur = G(x - nodes[i]);
        sum += (f_prev - f_cur) * 0.5 * (g_prev + g_cur);
        f_prev = f_cur;
        g_prev = g_cur;
    }
    return std::clamp(F(x) + sum, 0.0, 1.0);
}

namespace detail {

inline double guarded_divide(double num, double den, const char* where, double x) {
    if (!(den > 1e-300)) {
        std::ostringstream os;
        os << where << ": tail is numerically zero at x=" << x;
        throw RangeError(os.str());
    }
    return num / den;
}

}  // namespace detail

/// conv_tail(F,F,x)/F-bar(x); tends to 2 for subexponential F.
inline double subexp_ratio(const TailDistribution& F, double x) {
    return detail::guarded_divide(conv_tail(F, F, x), F(x), "subexp_ratio", x);
}

/// conv_tail(F,G,x)/(F-bar(x)+G-bar(x)); tends to 1 when F is subexponential
/// and G-bar/F-bar -> c > 0.  The tail-equivalence hypothesis is the caller's.
inline double mixed_ratio(const TailDistribution& F, const TailDistribution& G, double x) {
    return detail::guarded_divide(conv_tail(F, G, x), F(x) + G(x), "mixed_ratio", x);
}

/// F-bar(x+y)/F-bar(x) for each y.
inline std::vector<double> long_tail_check(const TailDistribution& F, const std::vector<double>& ys, double x) {
    const double base = F(x);
    std::vector<double> out;
    out.reserve(ys.size());
    for (double y : ys) {
        if (!(y >= 0.0)) throw DomainError("long_tail_check: y must be >= 0");
        out.push_back(detail::guarded_divide(F(x + y), base, "long_tail_check", x));
    }
    return out;
}

/// e^{eps x} F-bar(x).
inline double exp_moment_check(const TailDistribution& F, double eps, double x) {
    if (!(eps > 0.0)) throw DomainError("exp_moment_check: eps must be > 0");
    if (!(x > 0.0)) return 1.0;
    return std::exp(eps * x) * F(x);
}

/// A diagnostic sampled at the three largest decades of the grid, with the
/// least-squares slope of value against log10 x.  Limits are never asserted,
/// only reported.
struct LimitDiagnostic {
    std::vector<double> xs;
    std::vector<double> values;
    double slope = 0.0;
};

inline LimitDiagnostic limit_diagnostic(const TailDistribution& F, const std::function<double(double)>& fn) {
    const double top = F.x_max();
    LimitDiagnostic d;
    for (int k = 2; k >= 0; --k) {
        const double x = top / std::pow(10.0, k);
        if (!(x > F.grid().front())) continue;
        d.xs.push_back(x);
        d.values.push_back(fn(x));
    }
    if (d.xs.size() >= 2) {
        double mx = 0.0, my = 0.0;
        for (std::size_t i = 0; i < d.xs.size(); ++i) {
            mx += std::log10(d.xs[i]);
            my += d.values[i];
        }
        mx /= d.xs.size();
        my /= d.xs.size();
        double sxy = 0.0, sxx = 0.0;
        for (std::size_t i = 0; i < d.xs.size(); ++i) {
            const double lx = std::log10(d.xs[i]) - mx;
            sxy += lx * (d.values[i] - my);
            sxx += lx * lx;
        }
        d.slope = sxy / sxx;
    }
    return d;
}

// ---------------------------------------------------------------------------
// Tauberian comparison

/// f1(lambda)/f2(lambda) with f_i(lambda) = int_0^inf e^{-lambda g} g_i(g) mu(g) dg.
inline double tauberian_ratio(const std::function<double(double)>& mu_density, const std::function<double(double)>& g1,
                              const std::function<double(double)>& g2, double lambda, const QuadTolerance& tol = {}) {
    if (!(lambda > 0.0)) throw DomainError("tauberian_ratio: lambda must be > 0");
    auto f = [&](const std::function<double(double)>& g) {
        return laplace_integral([&](double s) { return s > 0.0 ? g(s) * mu_density(s) : 0.0; }, lambda, tol).value;
    };
    const double den = f(g2);
    if (!(den > 0.0) || !std::isfinite(den)) throw IntegrabilityError("tauberian_ratio: f2(lambda) is not a positive finite number");
    const double num = f(g1);
    if (!std::isfinite(num)) throw IntegrabilityError("tauberian_ratio: f1(lambda) is not finite");
    return num / den;
}

}  // namespace levykit

#endif  // LEVYKIT_SUBEXP_HPP
