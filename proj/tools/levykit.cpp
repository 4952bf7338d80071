// levykit command-line tool.  Parsing only; the work happens in levykit::run.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "levykit/cli.hpp"

namespace {

const char* columns_help = R"(
Commands and CSV columns (JSON mirrors them as fields):
  density [transition|killed|hitting]  --t --x [--y]
      t,x,y,value,abs_err_est          (hitting: t,x,value,abs_err_est)
  tails  --t [--x]
      t,nu_dot,nu_dot_err,nu_tail,nu_tail_err[,x,hitting_tail,hitting_tail_err]
  eigen  --x --gamma
      x,gamma,A,A_err,C,C_err,terms
  subexp-check  --family pareto:<a>[:<scale>]|exp:<rate>|csv:<path> --x [--family2 ..] [--c]
      x,tail,conv_tail,ratio,abs_err_est
      x,tail_f,tail_g,conv_tail,mixed_ratio,abs_err_est   (with --family2 or --c)
  mc localtime-tail  [--x] --ell --t --n [--method exact|path --dt --eps]
      x,ell,t,mean,std_error,n,seed,asymptote,ratio,ratio_se
  mc hitting-tail  --x --t --n [--method exact|path --dt --eps]
      x,t,mean,std_error,n,seed,asymptote,ratio,ratio_se
  mc mean-identity  --t --n --dt
      t,scale_mean,scale_se,local_time_mean,local_time_se,difference,difference_se,n,seed
  mc levy-exponent  --lambda [--ell] --n
      lambda,ell,mean,std_error,n,seed,exact
  mc path  --t [--x --dt --eps]
      t,x,local_time,band_scale
  penalize value --x --ell                 x,ell,value,abs_err_est
  penalize mean --u --n                    u,mean,std_error,n,seed
  penalize martingale --s --t --n --dt     x_lo,x_hi,l_lo,l_hi,at_t,at_t_se,at_s,at_s_se,difference,difference_se,pass,n,seed
  penalize linfty [--u] --n                ell,weighted_cdf,std_error,H,gap
  penalize uparrow --t [--x] --y [--source auto|oracle|spectral]   t,x,y,value,abs_err_est
  penalize normalization --t [--source]    t,value,abs_err_est
  penalize post-lastzero --v [--u] --n     y_lo,y_hi,weighted_mass,target_mass
  penalize numerator --x --t --n           a,t,mean,std_error,n,seed,limit

Lists take comma-separated values (--t 0.5,1,2).  --spec accepts bessel:<delta>,
brownian, a JSON object or @file.  Exit codes: 0 ok, 2 invalid input, 3 tolerance.
LEVYKIT_THREADS caps the number of worker threads.
)";

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"levykit: spectral and Monte Carlo tools for diffusions on [0, inf)"};
    app.footer(columns_help);
    levykit::RunConfig cfg;
    std::string config_file;

    app.add_option("command", cfg.command, "density | tails | eigen | subexp-check | mc | penalize");
    app.add_option("subcommand", cfg.subcommand, "see below");
    app.add_option("--config", config_file, "JSON RunConfig file; other flags are ignored");
    app.add_option("--spec", cfg.spec, "diffusion (default bessel:1.0)");
    app.add_option("--measure", cfg.measure, "spectral measure JSON");
    app.add_option("--weight", cfg.weight, "weight function JSON");
    app.add_option("--seed", cfg.seed, "random seed");
    app.add_option("--threads", cfg.threads, "worker threads");
    app.add_option("--format", cfg.format, "csv | json")->check(CLI::IsMember({"csv", "json"}));
    app.add_option("--out", cfg.output, "output file (default stdout)");
    app.add_option("--tol", cfg.tol, "absolute tolerance for quadrature results");

    const std::vector<std::string> numeric = {"t", "x", "y", "ell", "gamma", "lambda", "u", "s", "v",
                                              "c", "n", "dt", "eps", "threshold"};
    std::map<std::string, std::vector<double>> values;
    for (const auto& k : numeric) app.add_option("--" + k, values[k])->delimiter(',');
    for (const char* k : {"family", "family2", "method", "source"}) app.add_option(std::string("--") + k, cfg.text[k]);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return static_cast<int>(levykit::ExitCode::Invalid);
    }

    if (!config_file.empty()) {
        try {
            cfg = levykit::config_from_json(levykit::cli::read_text_arg("@" + config_file, "config"));
        } catch (const levykit::Error& e) {
            std::cerr << "levykit: " << e.what() << "\n";
            return static_cast<int>(levykit::ExitCode::Invalid);
        }
    } else {
        if (cfg.command.empty()) {
            std::cerr << app.help();
            return static_cast<int>(levykit::ExitCode::Invalid);
        }
        for (auto& [k, v] : values)
            if (!v.empty()) cfg.params[k] = v;
        std::erase_if(cfg.text, [](const auto& kv) { return kv.second.empty(); });
    }
    return levykit::run(cfg);
}
