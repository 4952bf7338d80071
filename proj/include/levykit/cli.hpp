#ifndef LEVYKIT_CLI_HPP
#define LEVYKIT_CLI_HPP

// Command-line front end.  A RunConfig names a command, an optional
// subcommand, the diffusion and a bag of numeric parameters; run() dispatches
// it and writes a table as CSV (with a "# levykit v..." header) or JSON.
// Exit codes: 0 success, 2 invalid input, 3 numerical tolerance not reached.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "levykit/diffusion.hpp"
#include "levykit/errors.hpp"
#include "levykit/montecarlo.hpp"
#include "levykit/penalization.hpp"
#include "levykit/spectral.hpp"
#include "levykit/subexp.hpp"

namespace levykit {

inline constexpr const char* version_string = "0.1.0";

enum class ExitCode : int { Ok = 0, Invalid = 2, Tolerance = 3 };

struct RunConfig {
    std::string command;     // density, tails, eigen, subexp-check, mc, penalize
    std::string subcommand;  // per command, may be empty
    std::string spec = "bessel:1.0";  // shorthand or JSON text
    std::string measure;              // optional spectral measure JSON
    std::string weight = R"({"kind":"indicator","ell0":1.0})";
    std::map<std::string, std::vector<double>> params;
    std::map<std::string, std::string> text;  // non-numeric options (family, method, source, ...)
    std::string output;  // empty: stdout
    std::uint64_t seed = default_seed;
    std::string format = "csv";
    std::optional<unsigned> threads;
    double tol = 1e-9;
};

namespace cli {

// ---------------------------------------------------------------------------
// Tables

using Cell = std::variant<double, long long, std::string>;

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;
    std::vector<std::string> notes;  // CSV comment lines / JSON "notes"

    void add(std::vector<Cell> row) {
        if (row.size() != columns.size()) throw Error("internal: row width does not match columns");
        rows.push_back(std::move(row));
    }
};

inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

inline std::string cell_text(const Cell& c) {
    if (const auto* d = std::get_if<double>(&c)) return format_double(*d);
    if (const auto* i = std::get_if<long long>(&c)) return std::to_string(*i);
    return std::get<std::string>(c);
}

inline void write_csv(std::ostream& out, const RunConfig& cfg, const Table& t) {
    out << "# levykit v" << version_string << "\n";
    out << "# command: " << cfg.command << (cfg.subcommand.empty() ? "" : " " + cfg.subcommand) << "\n";
    for (const auto& n : t.notes) out << "# " << n << "\n";
    for (std::size_t i = 0; i < t.columns.size(); ++i) out << (i ? "," : "") << t.columns[i];
    out << "\n";
    for (const auto& r : t.rows) {
        for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << cell_text(r[i]);
        out << "\n";
    }
}

inline void write_json(std::ostream& out, const RunConfig& cfg, const Table& t) {
    nlohmann::ordered_json j;
    j["levykit"] = version_string;
    j["command"] = cfg.command;
    if (!cfg.subcommand.empty()) j["subcommand"] = cfg.subcommand;
    j["columns"] = t.columns;
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& r : t.rows) {
        nlohmann::ordered_json o;
        for (std::size_t i = 0; i < r.size(); ++i) {
            if (const auto* d = std::get_if<double>(&r[i])) {
                if (std::isfinite(*d)) o[t.columns[i]] = std::stod(format_double(*d));
                else o[t.columns[i]] = format_double(*d);
            } else if (const auto* n = std::get_if<long long>(&r[i])) {
                o[t.columns[i]] = *n;
            } else {
                o[t.columns[i]] = std::get<std::string>(r[i]);
            }
        }
        rows.push_back(std::move(o));
    }
    j["rows"] = std::move(rows);
    if (!t.notes.empty()) j["notes"] = t.notes;
    out << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// JSON inputs

// nlohmann reports a byte offset; users want line and column.
inline nlohmann::json parse_json(const std::string& text, const std::string& what) {
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        std::size_t line = 1, col = 1;
        const std::size_t stop = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
        for (std::size_t i = 0; i < stop; ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        std::ostringstream os;
        os << what << ": malformed JSON at line " << line << ", column " << col;
        throw ValidationError(os.str());
    }
}

// "@path" reads the file, anything else is literal text
inline std::string read_text_arg(const std::string& arg, const std::string& what) {
    if (arg.empty() || arg[0] != '@') return arg;
    std::ifstream in(arg.substr(1));
    if (!in) throw ValidationError(what + ": cannot open " + arg.substr(1));
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

inline double json_number(const nlohmann::json& j, const char* key, const std::string& what) {
    if (!j.contains(key) || !j[key].is_number()) throw ValidationError(what + ": field '" + key + "' must be a number");
    return j[key].get<double>();
}

inline std::string json_string(const nlohmann::json& j, const char* key, const std::string& what) {
    if (!j.contains(key) || !j[key].is_string()) throw ValidationError(what + ": field '" + key + "' must be a string");
    return j[key].get<std::string>();
}

inline std::vector<double> json_numbers(const nlohmann::json& j, const char* key, const std::string& what) {
    if (!j.contains(key) || !j[key].is_array()) throw ValidationError(what + ": field '" + key + "' must be an array");
    std::vector<double> out;
    for (const auto& v : j[key]) {
        if (!v.is_number()) throw ValidationError(what + ": '" + key + "' must hold numbers");
        out.push_back(v.get<double>());
    }
    return out;
}

/// "bessel:<delta>", "brownian", or JSON {"kind":"bessel","delta":..} /
/// {"kind":"custom","scale":"..","speed_density":".."}.
inline DiffusionSpec parse_spec(const std::string& arg) {
    const std::string text = read_text_arg(arg, "spec");
    if (text == "brownian") return brownian_spec();
    if (text.rfind("bessel:", 0) == 0) {
        char* end = nullptr;
        const std::string num = text.substr(7);
        const double d = std::strtod(num.c_str(), &end);
        if (num.empty() || *end != '\0') throw ValidationError("spec: cannot read delta in '" + text + "'");
        return bessel_spec(d);
    }
    const auto j = parse_json(text, "spec");
    if (!j.is_object()) throw ValidationError("spec: expected a JSON object, 'bessel:<delta>' or 'brownian'");
    const std::string kind = json_string(j, "kind", "spec");
    if (kind == "bessel") return bessel_spec(json_number(j, "delta", "spec"));
    if (kind == "brownian") return brownian_spec();
    if (kind == "custom") return custom_spec(json_string(j, "scale", "spec"), json_string(j, "speed_density", "spec"));
    throw ValidationError("spec: unknown kind '" + kind + "'");
}

/// {"kind":"bessel_hat","alpha":a} (killed), {"kind":"bessel","alpha":a}
/// (principal) or {"kind":"table","gammas":[..],"densities":[..],"measure":"killed"|"principal"}.
inline SpectralMeasure parse_measure(const std::string& arg) {
    const auto j = parse_json(read_text_arg(arg, "measure"), "measure");
    if (!j.is_object()) throw ValidationError("measure: expected a JSON object");
    const std::string kind = json_string(j, "kind", "measure");
    if (kind == "bessel_hat") return bessel_measure(json_number(j, "alpha", "measure"), MeasureKind::Killed);
    if (kind == "bessel") return bessel_measure(json_number(j, "alpha", "measure"), MeasureKind::Principal);
    if (kind == "table") {
        MeasureKind mk = MeasureKind::Killed;
        if (j.contains("measure")) {
            const std::string m = json_string(j, "measure", "measure");
            if (m == "principal") mk = MeasureKind::Principal;
            else if (m != "killed") throw ValidationError("measure: 'measure' must be killed or principal");
        }
        return table_measure(json_numbers(j, "gammas", "measure"), json_numbers(j, "densities", "measure"), mk);
    }
    throw ValidationError("measure: unknown kind '" + kind + "'");
}

/// {"kind":"indicator","ell0":..}, {"kind":"triangular","K":..} or
/// {"kind":"table","xs":[..],"hs":[..]}; "mode":"compact" tightens validation.
inline WeightFunction parse_weight(const std::string& arg) {
    const auto j = parse_json(read_text_arg(arg, "weight"), "weight");
    if (!j.is_object()) throw ValidationError("weight: expected a JSON object");
    const std::string kind = json_string(j, "kind", "weight");
    WeightMode mode = WeightMode::General;
    if (j.contains("mode")) {
        const std::string m = json_string(j, "mode", "weight");
        if (m == "compact") mode = WeightMode::Compact;
        else if (m != "general") throw ValidationError("weight: 'mode' must be general or compact");
    }
    if (kind == "indicator") return WeightFunction::indicator(json_number(j, "ell0", "weight"));
    if (kind == "triangular") return WeightFunction::triangular(json_number(j, "K", "weight"));
    if (kind == "table") return WeightFunction::table(json_numbers(j, "xs", "weight"), json_numbers(j, "hs", "weight"), mode);
    throw ValidationError("weight: unknown kind '" + kind + "'");
}

/// pareto:<alpha>[:<scale>], exp:<rate>, csv:<path>
inline TailDistribution parse_family(const std::string& text) {
    const auto colon = text.find(':');
    if (colon == std::string::npos) throw ValidationError("family: expected pareto:<alpha>, exp:<rate> or csv:<path>");
    const std::string kind = text.substr(0, colon);
    const std::string rest = text.substr(colon + 1);
    if (kind == "csv") return tail_from_csv_file(rest);
    std::vector<double> nums;
    std::istringstream in(rest);
    std::string tok;
    while (std::getline(in, tok, ':')) {
        char* end = nullptr;
        const double v = std::strtod(tok.c_str(), &end);
        if (tok.empty() || *end != '\0') throw ValidationError("family: cannot read '" + tok + "' in '" + text + "'");
        nums.push_back(v);
    }
    if (kind == "pareto" && (nums.size() == 1 || nums.size() == 2))
        return pareto_tail(nums[0], nums.size() == 2 ? nums[1] : 1.0);
    if (kind == "exp" && nums.size() == 1) return exp_tail(nums[0]);
    throw ValidationError("family: unknown family '" + text + "'");
}

// ---------------------------------------------------------------------------
// Parameter access

class Params {
public:
    explicit Params(const RunConfig& c) : c_(c) {}

    std::vector<double> list(const std::string& key) const {
        const auto it = c_.params.find(key);
        if (it == c_.params.end() || it->second.empty()) throw ValidationError("missing --" + key);
        return it->second;
    }
    std::vector<double> list_or(const std::string& key, std::vector<double> d) const {
        const auto it = c_.params.find(key);
        return it == c_.params.end() || it->second.empty() ? d : it->second;
    }
    double one(const std::string& key) const {
        const auto v = list(key);
        if (v.size() != 1) throw ValidationError("--" + key + " takes a single value here");
        return v[0];
    }
    double one_or(const std::string& key, double d) const { return has(key) ? one(key) : d; }
    bool has(const std::string& key) const {
        const auto it = c_.params.find(key);
        return it != c_.params.end() && !it->second.empty();
    }
    std::size_t count(const std::string& key, std::size_t d) const {
        if (!has(key)) return d;
        const double v = one(key);
        if (!(v >= 1.0) || v != std::floor(v) || v > 1e12) throw ValidationError("--" + key + " must be a positive integer");
        return static_cast<std::size_t>(v);
    }
    std::string text(const std::string& key, const std::string& d) const {
        const auto it = c_.text.find(key);
        return it == c_.text.end() || it->second.empty() ? d : it->second;
    }

private:
    const RunConfig& c_;
};

inline SpectralOptions spectral_options(const RunConfig& cfg) {
    SpectralOptions o;
    o.tol = cfg.tol;
    if (!cfg.measure.empty()) o.measure = parse_measure(cfg.measure);
    return o;
}

// ---------------------------------------------------------------------------
// Commands

inline Table cmd_density(const RunConfig& cfg, const DiffusionSpec& spec) {
    const Params p(cfg);
    const SpectralOptions so = spectral_options(cfg);
    const std::string sub = cfg.subcommand.empty() ? "transition" : cfg.subcommand;
    Table t;
    if (sub == "transition" || sub == "killed") {
        const bool killed = sub == "killed";
        t.columns = {"t", "x", "y", "value", "abs_err_est"};
        for (double tt : p.list("t"))
            for (double x : p.list("x"))
                for (double y : p.list("y")) {
                    const QuadResult r = transition_density_with_error(spec, x, y, tt, killed, so);
                    t.add({tt, x, y, r.value, r.abs_error});
                }
    } else if (sub == "hitting") {
        t.columns = {"t", "x", "value", "abs_err_est"};
        for (double tt : p.list("t"))
            for (double x : p.list("x")) {
                const QuadResult r = hitting_density_with_error(spec, x, tt, so);
                t.add({tt, x, r.value, r.abs_error});
            }
    } else {
        throw ValidationError("density: subcommand must be transition, killed or hitting");
    }
    return t;
}

inline Table cmd_tails(const RunConfig& cfg, const DiffusionSpec& spec) {
    const Params p(cfg);
    const SpectralOptions so = spectral_options(cfg);
    Table t;
    const bool with_x = p.has("x");
    t.columns = {"t", "nu_dot", "nu_dot_err", "nu_tail", "nu_tail_err"};
    if (with_x) {
        t.columns.insert(t.columns.end(), {"x", "hitting_tail", "hitting_tail_err"});
    }
    for (double tt : p.list("t")) {
        const QuadResult d = levy_density_with_error(spec, tt, so);
        const QuadResult tail = levy_tail_with_error(spec, tt, so);
        if (!with_x) {
            t.add({tt, d.value, d.abs_error, tail.value, tail.abs_error});
            continue;
        }
        for (double x : p.list("x")) {
            const QuadResult h = hitting_tail_with_error(spec, x, tt, so);
            t.add({tt, d.value, d.abs_error, tail.value, tail.abs_error, x, h.value, h.abs_error});
        }
    }
    return t;
}

inline Table cmd_eigen(const RunConfig& cfg, const DiffusionSpec& spec) {
    const Params p(cfg);
    Table t;
    t.columns = {"x", "gamma", "A", "A_err", "C", "C_err", "terms"};
    for (double x : p.list("x")) {
        for (double g : p.list("gamma")) {
            std::vector<Cell> row{x, g};
            long long terms = 0;
            for (EigenKind k : {EigenKind::A, EigenKind::C}) {
                EigenSeries s = eigen_coefficients(spec, x, k, 8);
                const std::size_t need = required_order(s, g, 0.25 * cfg.tol);
                if (need > s.order()) s = eigen_coefficients(spec, x, k, need + need / 10 + 4);
                const QuadResult r = eigen_value_with_error(s, g, cfg.tol);
                row.push_back(r.value);
                row.push_back(r.abs_error);
                terms = std::max<long long>(terms, static_cast<long long>(s.terms()));
            }
            row.push_back(terms);
            t.add(std::move(row));
        }
    }
    return t;
}

inline Table cmd_subexp(const RunConfig& cfg) {
    const Params p(cfg);
    const TailDistribution F = parse_family(p.text("family", "pareto:0.5"));
    const TailDistribution Fc = F.coarsened();
    Table t;
    // abs_err_est: change of the ratio when every other grid node is dropped
    const std::string family2 = p.text("family2", "");
    if (!family2.empty() || p.has("c")) {
        const TailDistribution base = family2.empty() ? F : parse_family(family2);
        const TailDistribution G = p.has("c") ? scaled_tail(base, p.one("c")) : base;
        const TailDistribution Gc = G.coarsened();
        t.columns = {"x", "tail_f", "tail_g", "conv_tail", "mixed_ratio", "abs_err_est"};
        for (double x : p.list("x")) {
            const double r = mixed_ratio(F, G, x);
            t.add({x, F(x), G(x), conv_tail(F, G, x), r, std::abs(r - mixed_ratio(Fc, Gc, x))});
        }
        return t;
    }
    t.columns = {"x", "tail", "conv_tail", "ratio", "abs_err_est"};
    for (double x : p.list("x")) {
        const double r = subexp_ratio(F, x);
        t.add({x, F(x), conv_tail(F, F, x), r, std::abs(r - subexp_ratio(Fc, x))});
    }
    return t;
}

inline TailMcOptions tail_options(const RunConfig& cfg, const Params& p) {
    TailMcOptions o;
    const std::string m = p.text("method", "exact");
    if (m == "path") o.method = McMethod::Path;
    else if (m != "exact") throw ValidationError("--method must be exact or path");
    o.dt = p.one_or("dt", 1e-3);
    o.path.epsilon = p.one_or("eps", 0.0);
    o.path.threads = cfg.threads;
    return o;
}

inline Table cmd_mc(const RunConfig& cfg, const DiffusionSpec& spec) {
    const Params p(cfg);
    const std::size_t n = p.count("n", 100000);
    const long long seed = static_cast<long long>(cfg.seed);
    Table t;
    const std::string sub = cfg.subcommand;
    if (sub == "localtime-tail") {
        // ratio against the subexponential asymptote (S(x) + ell) nu((t, inf))
        t.columns = {"x", "ell", "t", "mean", "std_error", "n", "seed", "asymptote", "ratio", "ratio_se"};
        const TailMcOptions o = tail_options(cfg, p);
        for (double x : p.list_or("x", {0.0}))
            for (double l : p.list("ell"))
                for (double tt : p.list("t")) {
                    const McEstimate e = estimate_localtime_tail(spec, x, l, tt, n, cfg.seed, o);
                    const double a = (spec.scale(x) + l) * spec.oracles.levy_tail(tt);
                    t.add({x, l, tt, e.mean, e.std_error, static_cast<long long>(e.n_paths), seed, a, e.mean / a,
                           e.std_error / a});
                }
    } else if (sub == "hitting-tail") {
        t.columns = {"x", "t", "mean", "std_error", "n", "seed", "asymptote", "ratio", "ratio_se"};
        const TailMcOptions o = tail_options(cfg, p);
        for (double x : p.list("x"))
            for (double tt : p.list("t")) {
                const McEstimate e = estimate_hitting_tail(spec, x, tt, n, cfg.seed, o);
                const double a = spec.scale(x) * spec.oracles.levy_tail(tt);
                t.add({x, tt, e.mean, e.std_error, static_cast<long long>(e.n_paths), seed, a, e.mean / a, e.std_error / a});
            }
    } else if (sub == "mean-identity") {
        t.columns = {"t", "scale_mean", "scale_se", "local_time_mean", "local_time_se", "difference", "difference_se",
                     "n", "seed"};
        PathOptions o;
        o.epsilon = p.one_or("eps", 0.0);
        o.threads = cfg.threads;
        const auto rows = mean_identity(spec, p.list("t"), n, p.one_or("dt", 1e-4), cfg.seed, o);
        for (const auto& r : rows)
            t.add({r.t, r.scale_mean.mean, r.scale_mean.std_error, r.local_time_mean.mean, r.local_time_mean.std_error,
                   r.difference.mean, r.difference.std_error, static_cast<long long>(n), seed});
    } else if (sub == "levy-exponent") {
        t.columns = {"lambda", "ell", "mean", "std_error", "n", "seed", "exact"};
        const detail::Preset pr = detail::require_preset(spec, "mc levy-exponent");
        for (double lambda : p.list("lambda"))
            for (double l : p.list_or("ell", {1.0})) {
                const McEstimate e = levy_exponent_mc(spec, lambda, l, n, cfg.seed, cfg.threads);
                t.add({lambda, l, e.mean, e.std_error, static_cast<long long>(e.n_paths), seed,
                       pr.kappa * std::pow(lambda, pr.alpha)});
            }
    } else if (sub == "path") {
        // one path; the error column is the band half-width in S units
        t.columns = {"t", "x", "local_time", "band_scale"};
        PathOptions o;
        o.epsilon = p.one_or("eps", 0.0);
        const PathSample s = simulate_path(spec, p.one_or("x", 0.0), p.one("t"), p.one_or("dt", 1e-3), cfg.seed, o);
        const double band = spec.scale(s.epsilon);
        for (std::size_t k = 0; k < s.times.size(); ++k) t.add({s.times[k], s.positions[k], s.local_time[k], band});
        t.notes.push_back("corrected_local_time=" + format_double(s.corrected_local_time));
    } else {
        throw ValidationError("mc: subcommand must be localtime-tail, hitting-tail, mean-identity, levy-exponent or path");
    }
    return t;
}

inline Table cmd_penalize(const RunConfig& cfg, const DiffusionSpec& spec) {
    const Params p(cfg);
    const WeightFunction h = parse_weight(cfg.weight);
    const std::size_t n = p.count("n", 100000);
    const long long seed = static_cast<long long>(cfg.seed);
    Table t;
    const std::string sub = cfg.subcommand;
    if (sub == "value") {
        t.columns = {"x", "ell", "value", "abs_err_est"};
        for (double x : p.list("x"))
            for (double l : p.list("ell")) t.add({x, l, martingale_value(spec, h, x, l), 0.0});
    } else if (sub == "mean") {
        t.columns = {"u", "mean", "std_error", "n", "seed"};
        for (double u : p.list("u")) {
            const McEstimate e = martingale_mean_mc(spec, h, u, n, cfg.seed, cfg.threads);
            t.add({u, e.mean, e.std_error, static_cast<long long>(e.n_paths), seed});
        }
    } else if (sub == "martingale") {
        MartingaleCheckOptions o;
        o.dt = p.one_or("dt", 1e-3);
        o.path.threads = cfg.threads;
        t.columns = {"x_lo", "x_hi", "l_lo", "l_hi", "at_t", "at_t_se", "at_s", "at_s_se", "difference", "difference_se",
                     "pass", "n", "seed"};
        for (const auto& r : martingale_property_mc(spec, h, p.one("s"), p.one("t"), n, cfg.seed, o))
            t.add({r.phi.x_lo, r.phi.x_hi, r.phi.l_lo, r.phi.l_hi, r.at_t.mean, r.at_t.std_error, r.at_s.mean,
                   r.at_s.std_error, r.difference.mean, r.difference.std_error, static_cast<long long>(r.pass),
                   static_cast<long long>(n), seed});
    } else if (sub == "linfty") {
        LinftyOptions o;
        o.u = p.one_or("u", 0.0);
        o.threads = cfg.threads;
        const LinftyReport r = linfty_law_check(spec, h, n, cfg.seed, o);
        t.columns = {"ell", "weighted_cdf", "std_error", "H", "gap"};
        for (std::size_t j = 0; j < r.ell.size(); ++j)
            t.add({r.ell[j], r.weighted_cdf[j], r.cdf_std_error[j], r.target_cdf[j],
                   std::abs(r.weighted_cdf[j] - r.target_cdf[j])});
        t.notes.push_back("u=" + format_double(r.u) + " unabsorbed=" + format_double(r.unabsorbed) +
                          " max_gap=" + format_double(r.max_gap) + " total_mass=" + format_double(r.total_mass) +
                          " n=" + std::to_string(n) + " seed=" + std::to_string(cfg.seed));
    } else if (sub == "uparrow") {
        UparrowOptions o;
        const std::string src = p.text("source", "auto");
        if (src == "oracle") o.source = DensitySource::Oracle;
        else if (src == "spectral") o.source = DensitySource::Spectral;
        else if (src != "auto") throw ValidationError("--source must be auto, oracle or spectral");
        o.spectral = spectral_options(cfg);
        const bool spectral = o.source == DensitySource::Spectral ||
                              !(spec.oracles.hitting_density && spec.oracles.killed_density);
        t.columns = {"t", "x", "y", "value", "abs_err_est"};
        for (double tt : p.list("t"))
            for (double x : p.list_or("x", {0.0}))
                for (double y : p.list("y")) {
                    const double v = uparrow_density(spec, x, y, tt, o);
                    // the spectral target is absolute in p^ or f; rescale it
                    const double err = spectral ? cfg.tol / (x > 0.0 ? spec.scale(x) * spec.scale(y) : spec.scale(y)) : 0.0;
                    t.add({tt, x, y, v, err});
                }
    } else if (sub == "normalization") {
        UparrowOptions o;
        if (p.text("source", "auto") == "spectral") o.source = DensitySource::Spectral;
        o.spectral = spectral_options(cfg);
        t.columns = {"t", "value", "abs_err_est"};
        for (double tt : p.list("t")) {
            const QuadResult r = uparrow_normalization(spec, tt, o);
            t.add({tt, r.value, r.abs_error});
        }
    } else if (sub == "post-lastzero") {
        PostLastZeroOptions o;
        o.u = p.one_or("u", 0.0);
        o.threshold = p.one_or("threshold", 0.05);
        o.horizon.threads = cfg.threads;
        const PostLastZeroReport r = post_lastzero_marginal_check(spec, h, p.one("v"), n, cfg.seed, o);
        t.columns = {"y_lo", "y_hi", "weighted_mass", "target_mass"};
        for (std::size_t b = 0; b < r.weighted_mass.size(); ++b)
            t.add({r.bin_edges[b], r.bin_edges[b + 1], r.weighted_mass[b], r.target_mass[b]});
        t.notes.push_back("u=" + format_double(r.u) + " distance=" + format_double(r.distance) +
                          " pass=" + (r.pass ? "1" : "0") + " correlation=" + format_double(r.correlation) +
                          " correlation_se=" + format_double(r.correlation_std_error) + " n=" + std::to_string(n) +
                          " seed=" + std::to_string(cfg.seed));
    } else if (sub == "numerator") {
        t.columns = {"a", "t", "mean", "std_error", "n", "seed", "limit"};
        for (double a : p.list_or("x", {1.0}))
            for (double tt : p.list("t")) {
                const McEstimate e = numerator_ratio_mc(spec, h, a, tt, n, cfg.seed, cfg.threads);
                t.add({a, tt, e.mean, e.std_error, static_cast<long long>(e.n_paths), seed,
                       spec.scale(a) * h.h(0.0) + 1.0});
            }
    } else {
        throw ValidationError(
            "penalize: subcommand must be value, mean, martingale, linfty, uparrow, normalization, post-lastzero or numerator");
    }
    return t;
}

inline Table dispatch(const RunConfig& cfg) {
    if (cfg.command == "subexp-check") return cmd_subexp(cfg);
    const DiffusionSpec spec = parse_spec(cfg.spec);
    if (cfg.command == "density") return cmd_density(cfg, spec);
    if (cfg.command == "tails") return cmd_tails(cfg, spec);
    if (cfg.command == "eigen") return cmd_eigen(cfg, spec);
    if (cfg.command == "mc") return cmd_mc(cfg, spec);
    if (cfg.command == "penalize") return cmd_penalize(cfg, spec);
    throw ValidationError("unknown command '" + cfg.command + "'");
}

}  // namespace cli

/// Runs one configuration.  Diagnostics go to err.
inline int run(const RunConfig& cfg, std::ostream& err = std::cerr) {
    try {
        if (cfg.format != "csv" && cfg.format != "json") throw ValidationError("--format must be csv or json");
        if (!(cfg.tol > 0.0)) throw ValidationError("--tol must be > 0");
        const cli::Table t = cli::dispatch(cfg);
        std::ostringstream buf;
        if (cfg.format == "csv") cli::write_csv(buf, cfg, t);
        else cli::write_json(buf, cfg, t);
        if (cfg.output.empty() || cfg.output == "-") {
            std::cout << buf.str();
            std::cout.flush();
        } else {
            std::ofstream out(cfg.output, std::ios::binary);
            if (!out) throw ValidationError("cannot write " + cfg.output);
            out << buf.str();
        }
        return static_cast<int>(ExitCode::Ok);
    } catch (const ToleranceError& e) {
        err << "levykit: tolerance failure: " << e.what() << "\n";
        return static_cast<int>(ExitCode::Tolerance);
    } catch (const TruncationError& e) {
        err << "levykit: tolerance failure: " << e.what() << "\n";
        return static_cast<int>(ExitCode::Tolerance);
    } catch (const Error& e) {
        err << "levykit: " << e.what() << "\n";
        return static_cast<int>(ExitCode::Invalid);
    } catch (const std::exception& e) {
        err << "levykit: invalid input: " << e.what() << "\n";
        return static_cast<int>(ExitCode::Invalid);
    }
}

/// Reads a RunConfig from JSON: {"command":..,"subcommand":..,"spec":<string or
/// object>,"measure":<object>,"weight":<object>,"params":{"t":[..] or number,
/// "family":"pareto:0.5",..},"output":..,"seed":..,"format":..,"threads":..,"tol":..}.
inline RunConfig config_from_json(const std::string& text) {
    const auto j = cli::parse_json(text, "config");
    if (!j.is_object()) throw ValidationError("config: expected a JSON object");
    RunConfig c;
    c.command = cli::json_string(j, "command", "config");
    if (j.contains("subcommand")) c.subcommand = cli::json_string(j, "subcommand", "config");
    auto as_text = [](const nlohmann::json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
    if (j.contains("spec")) c.spec = as_text(j["spec"]);
    if (j.contains("measure")) c.measure = as_text(j["measure"]);
    if (j.contains("weight")) c.weight = as_text(j["weight"]);
    if (j.contains("params")) {
        if (!j["params"].is_object()) throw ValidationError("config: 'params' must be an object");
        for (const auto& [k, v] : j["params"].items()) {
            if (v.is_number()) {
                c.params[k] = {v.get<double>()};
            } else if (v.is_array()) {
                c.params[k] = cli::json_numbers(j["params"], k.c_str(), "config params");
            } else if (v.is_string()) {
                c.text[k] = v.get<std::string>();
            } else {
                throw ValidationError("config: params." + k + " must be a number, array or string");
            }
        }
    }
    if (j.contains("output")) c.output = cli::json_string(j, "output", "config");
    if (j.contains("seed")) {
        if (!j["seed"].is_number_unsigned()) throw ValidationError("config: 'seed' must be a non-negative integer");
        c.seed = j["seed"].get<std::uint64_t>();
    }
    if (j.contains("format")) c.format = cli::json_string(j, "format", "config");
    if (j.contains("threads")) c.threads = static_cast<unsigned>(cli::json_number(j, "threads", "config"));
    if (j.contains("tol")) c.tol = cli::json_number(j, "tol", "config");
    return c;
}

}  // namespace levykit

#endif  // LEVYKIT_CLI_HPP
