// End-to-end acceptance run: one PASS/FAIL line per criterion, with the
// measured value, the bound it is held to and the wall time against its limit.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "levykit/cli.hpp"
#include "levykit/montecarlo.hpp"
#include "levykit/penalization.hpp"
#include "levykit/spectral.hpp"
#include "levykit/subexp.hpp"

using namespace levykit;

namespace {

constexpr std::uint64_t seed = 20240917;

struct Outcome {
    bool ok = true;
    std::string detail;

    void check(bool c, const std::string& what) {
        ok = ok && c;
        if (!detail.empty()) detail += "; ";
        detail += what;
    }
};

std::string fmt(const char* f, auto... args) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

int failures = 0;

void criterion(int id, const char* title, double limit_s, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o.ok = false;
        o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < limit_s;
    const bool pass = o.ok && in_time;
    failures += !pass;
    std::printf("%s criterion %2d: %s | %s | %.1f s (limit %.0f s%s)\n", pass ? "PASS" : "FAIL", id, title,
                o.detail.c_str(), secs, limit_s, in_time ? "" : ", exceeded");
    std::fflush(stdout);
}

std::string run_bytes(RunConfig cfg, const std::string& name) {
    cfg.output = (std::filesystem::temp_directory_path() / ("levykit_acceptance_" + name)).string();
    std::ostringstream err;
    if (run(cfg, err) != 0) throw std::runtime_error(name + ": " + err.str());
    std::ifstream in(cfg.output, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace

int main() {
    const auto bm = bessel_spec(1.0);
    const auto b15 = bessel_spec(1.5);
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);

    criterion(1, "Brownian spectral quadrature vs closed forms", 5.0, [&] {
        Outcome o;
        const SpectralOptions so;  // quadrature only; the closed forms are just the reference
        const double p = transition_density(bm, 0.5, 0.7, 1.0, false, so);
        const double e1 = std::abs(p - bm.oracles.transition_density(1.0, 0.5, 0.7));
        const double e2 = std::abs(hitting_density(bm, 1.0, 1.0, so) - std::exp(-0.5) * inv_sqrt_2pi);
        const double e3 = std::abs(levy_density(bm, 1.0, so) - inv_sqrt_2pi);
        o.check(e1 < 1e-6, fmt("|p - closed| = %.2e", e1));
        o.check(e2 < 1e-6, fmt("|f - closed| = %.2e", e2));
        o.check(e3 < 1e-6, fmt("|nu_dot - closed| = %.2e (bound 1e-6)", e3));
        return o;
    });

    criterion(2, "Bessel delta=1.5 spectral quadrature vs closed forms, 5x5 grid", 30.0, [&] {
        Outcome o;
        const SpectralOptions so;
        const double y = 0.8;
        double ep = 0, ef = 0, en = 0;
        for (double t : {0.25, 0.5, 1.0, 2.0, 4.0}) {
            en = std::max(en, std::abs(levy_density(b15, t, so) - b15.oracles.levy_density(t)));
            for (double x : {0.2, 0.5, 1.0, 1.5, 2.0}) {
                ep = std::max(ep, std::abs(transition_density(b15, x, y, t, true, so) - b15.oracles.killed_density(t, x, y)));
                ef = std::max(ef, std::abs(hitting_density(b15, x, t, so) - b15.oracles.hitting_density(x, t)));
            }
        }
        o.check(ep < 1e-6, fmt("max |p_hat err| = %.2e", ep));
        o.check(ef < 1e-6, fmt("max |f err| = %.2e", ef));
        o.check(en < 1e-6, fmt("max |nu_dot err| = %.2e (bound 1e-6)", en));
        return o;
    });

    criterion(3, "Levy tail log-log slope equals -alpha", 10.0, [&] {
        Outcome o;
        const SpectralOptions so;
        for (double a : {0.25, 0.5, 0.75}) {
            const auto s = bessel_spec(2.0 - 2.0 * a);
            // least squares over log-spaced t in [10, 1e4]
            double sx = 0, sy = 0, sxx = 0, sxy = 0;
            const int k = 13;
            for (int i = 0; i < k; ++i) {
                const double lt = std::log(10.0) * (1.0 + 3.0 * i / (k - 1));
                const double ly = std::log(levy_tail(s, std::exp(lt), so));
                sx += lt, sy += ly, sxx += lt * lt, sxy += lt * ly;
            }
            const double slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
            o.check(std::abs(slope + a) < 1e-3, fmt("alpha %.2f: slope %.6f", a, slope));
        }
        return o;
    });

    criterion(4, "P_0(L_t <= 1) / nu((t,inf)), Brownian, t=1e4", 60.0, [&] {
        Outcome o;
        const double t = 1e4;
        const auto e = estimate_localtime_tail(bm, 0.0, 1.0, t, 100000, seed);
        const double r = e.mean / levy_tail(bm, t);
        const double stable = 1.0 * std::sqrt(2.0 / (std::numbers::pi * t));
        o.check(r >= 0.97 && r <= 1.03, fmt("ratio %.5f +- %.5f in [0.97, 1.03]", r, e.std_error / levy_tail(bm, t)));
        o.check(std::abs(levy_tail(bm, t) / stable - 1.0) < 1e-9, "nu tail = stable-law oracle");
        return o;
    });

    criterion(5, "P_1(L_t <= 1) / ((S(1)+1) nu((t,inf))), delta=1.5, t=1e4", 300.0, [&] {
        Outcome o;
        const double t = 1e4;
        const auto e = estimate_localtime_tail(b15, 1.0, 1.0, t, 100000, seed);
        const double den = (b15.scale(1.0) + 1.0) * levy_tail(b15, t);
        const double r = e.mean / den;
        o.check(r >= 0.8 && r <= 1.2, fmt("ratio %.4f +- %.4f in [0.8, 1.2]", r, e.std_error / den));
        return o;
    });

    criterion(6, "E_0[S(X_t)] = E_0[L_t], n=1e5, dt=1e-4", 300.0, [&] {
        Outcome o;
        for (const auto* s : {&bm, &b15}) {
            const auto rows = mean_identity(*s, {0.5, 1.0, 2.0}, 100000, 1e-4, seed);
            for (const auto& r : rows) {
                const double z = std::abs(r.difference.mean) / r.difference.std_error;
                o.check(z < 3.0, fmt("%s t=%.1f: diff %.4f, %.2f SE", s->label.c_str(), r.t, r.difference.mean, z));
            }
        }
        return o;
    });

    criterion(7, "E_0[M^h_u] = 1 within 3 SE", 180.0, [&] {
        Outcome o;
        const auto ind = WeightFunction::indicator(1.0);
        const auto tri = WeightFunction::triangular(2.0);
        std::uint64_t k = 0;
        for (const auto* s : {&bm, &b15})
            for (const auto* h : {&ind, &tri})
                for (double u : {0.5, 1.0}) {
                    const auto e = martingale_mean_mc(*s, *h, u, 100000, seed + k++);
                    const double z = std::abs(e.mean - 1.0) / e.std_error;
                    o.check(z < 3.0, fmt("%s %s u=%.1f: %.2f SE", s->label.c_str(), h->label().c_str(), u, z));
                }
        return o;
    });

    criterion(8, "Penalized L_inf law vs H, Brownian, h=1_[0,1)", 300.0, [&] {
        Outcome o;
        const auto r = linfty_law_check(bm, WeightFunction::indicator(1.0), 100000, seed);
        o.check(r.max_gap < 0.02, fmt("u=%g (unabsorbed %.4f), max gap %.4f < 0.02", r.u, r.unabsorbed, r.max_gap));
        return o;
    });

    criterion(9, "Subexponential diagnostics", 10.0, [&] {
        Outcome o;
        const auto p = pareto_tail(0.5);
        const double r = subexp_ratio(p, 1e4);
        const double m = mixed_ratio(p, scaled_tail(p, 3.0), 1e4);
        const double e = subexp_ratio(exp_tail(1.0), 20.0);
        o.check(r >= 1.9 && r <= 2.1, fmt("Pareto(0.5) ratio %.5f", r));
        o.check(m >= 0.95 && m <= 1.05, fmt("mixed c=3 %.5f", m));
        o.check(e > 10.0, fmt("Exp(1) ratio %.3f > 10", e));
        return o;
    });

    criterion(10, "hitting_tail / (S(1) levy_tail), delta=1.5, t=1e3, quadrature", 10.0, [&] {
        Outcome o;
        const SpectralOptions so;  // quadrature only; the closed forms are just the reference
        const double r = hitting_tail(b15, 1.0, 1e3, so) / (b15.scale(1.0) * levy_tail(b15, 1e3, so));
        o.check(r >= 0.97 && r <= 1.03, fmt("ratio %.5f in [0.97, 1.03]", r));
        return o;
    });

    criterion(11, "h-transform normalization", 30.0, [&] {
        Outcome o;
        const UparrowOptions so{DensitySource::Spectral, {}};
        double worst = 0;
        for (const auto* s : {&bm, &b15})
            for (double t : {0.5, 1.0, 2.0}) worst = std::max(worst, std::abs(uparrow_normalization(*s, t, so).value - 1.0));
        o.check(worst < 1e-4, fmt("max |integral - 1| = %.2e (spectral densities, bound 1e-4)", worst));
        return o;
    });

    criterion(12, "Same seed gives byte-identical output", 300.0, [&] {
        Outcome o;
        RunConfig a;
        a.command = "mc";
        a.subcommand = "localtime-tail";
        a.spec = "bessel:1.5";
        a.params = {{"x", {1.0}}, {"ell", {1.0}}, {"t", {1e4}}, {"n", {100000}}};
        a.seed = seed;
        RunConfig b;
        b.command = "penalize";
        b.subcommand = "mean";
        b.spec = "bessel:1.5";
        b.weight = R"({"kind":"triangular","K":2})";
        b.params = {{"u", {0.5, 1.0}}, {"n", {100000}}};
        b.seed = seed;
        RunConfig c;
        c.command = "mc";
        c.subcommand = "mean-identity";
        c.params = {{"t", {0.5}}, {"n", {4000}}, {"dt", {1e-4}}};
        c.seed = seed;
        for (auto [cfg, name] : {std::pair{a, "localtime-tail"}, {b, "penalize-mean"}, {c, "mean-identity"}}) {
            const std::string first = run_bytes(cfg, std::string(name) + "_1");
            cfg.threads = 2;
            const std::string second = run_bytes(cfg, std::string(name) + "_2");
            o.check(!first.empty() && first == second, fmt("%s: %zu bytes %s", name, first.size(), first == second ? "identical" : "DIFFER"));
        }
        return o;
    });

    std::printf("%d of 12 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
