// psca_bench: run SCA / P-SCA / GD / PGD experiments on the benchmark
// problems and write trajectory CSVs and JSON reports.
//
//   psca_bench run --problem saddle_quartic:d=10 --algo psca --eps 0.01 --seed 7
//   psca_bench run --problem matrix_factorization:d=6,r=2 --seeds 100 --start-radius 0.05
//   psca_bench scaling --problem rosenbrock:d=10 --algo psca --eps-list 0.1,0.03,0.01,0.003
//   psca_bench problems
//   psca_bench contracts --problem saddle_quartic:d=10

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "psca/psca.hpp"

namespace {

int cmd_run(const std::vector<std::string>& args) {
  const psca::ParsedConfig parsed = psca::parse_config(args);
  if (!parsed.ok()) {
    std::cerr << "invalid configuration:\n";
    for (const auto& v : parsed.violations) std::cerr << "  - " << v << "\n";
    return 2;
  }
  const psca::ExperimentConfig& cfg = parsed.config;
  psca::SweepSummary summary;
  const int code = psca::run_experiment(cfg, &summary);
  for (const psca::Report& r : summary.reports) {
    std::cout << "seed " << r.seed << ": " << r.status;
    if (r.status == "ok") {
      std::cout << " termination=" << r.termination << " iterations=" << r.iterations
                << " f_out=" << psca::format_double(r.f_out);
      if (r.certificate)
        std::cout << " certificate=" << psca::to_string(r.certificate->classification);
    } else {
      std::cout << " error=" << r.error;
    }
    std::cout << "\n";
  }
  if (cfg.seeds)
    std::cout << "eps_sosp " << summary.successes << "/" << summary.runs
              << " (95% CI " << summary.ci_low << " .. " << summary.ci_high << ")\n";
  std::cout << "output: " << cfg.out_dir << "\n";
  return code;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Successive convex approximation with saddle escape: experiments"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "run one experiment or a seed sweep");
  run->allow_extras();
  run->prefix_command();

  auto* scaling = app.add_subcommand("scaling", "eps-scaling study of iterations to an eps-FOSP");
  std::string problem = "rosenbrock:d=10", algo = "psca", eps_list = "0.1,0.03,0.01,0.003";
  std::string out_file;
  int seeds = 10;
  psca::ScalingOptions sopt;
  scaling->add_option("--problem", problem, "problem spec");
  scaling->add_option("--algo", algo, "sca|psca|gd|pgd");
  scaling->add_option("--eps-list", eps_list, "comma-separated, strictly decreasing");
  scaling->add_option("--seeds", seeds, "seeds per eps");
  scaling->add_option("--seed", sopt.seed, "first seed");
  scaling->add_option("--max-iters", sopt.max_iters, "iteration budget per run");
  scaling->add_option("--start-radius", sopt.start_radius, "seeded start spread");
  scaling->add_option("--out", out_file, "write the table as JSON here");

  auto* problems = app.add_subcommand("problems", "list registered problems");

  auto* contracts = app.add_subcommand("contracts", "sample-check declared smoothness constants");
  std::string cproblem = "saddle_quartic:d=2";
  int samples = 1000;
  contracts->add_option("--problem", cproblem, "problem spec");
  contracts->add_option("--samples", samples, "number of sampled pairs (>= 100)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(run->remaining());

    if (*scaling) {
      const auto a = psca::algo_from_string(algo);
      if (!a) {
        std::cerr << "unknown algorithm '" << algo << "'\n";
        return 2;
      }
      const psca::ScalingResult res =
          psca::scaling_study(problem, *a, parse_list(eps_list), seeds, sopt);
      for (const auto& row : res.rows)
        std::cout << "eps " << row.eps << "  median iterations " << row.median
                  << (row.flagged ? "  [flagged: budget exhausted]" : "") << "\n";
      std::cout << "slope " << res.slope << " +- " << res.half_width << " ("
                << res.points_used << " points)\n";
      if (!out_file.empty())
        psca::write_text(out_file, psca::to_json(res).dump(2) + "\n");
      return 0;
    }

    if (*problems) {
      for (const auto& name : psca::registered_problems()) std::cout << name << "\n";
      return 0;
    }

    if (*contracts) {
      const psca::ProblemInstance p = psca::make_problem(cproblem);
      psca::RngStream rng(0);
      const psca::ContractReport rep = psca::validate_contracts(p, rng, samples);
      const auto& k = p.objective.constants;
      std::cout << "L0 ratio " << rep.max_value_ratio << " (declared "
                << (k.L0 ? std::to_string(*k.L0) : std::string("n/a")) << ")\n"
                << "L1 ratio " << rep.max_gradient_ratio << " (declared " << k.L1 << ")\n"
                << "L2 ratio " << rep.max_hessian_ratio << " (declared " << k.L2 << ")\n"
                << (rep.ok() ? "ok" : "VIOLATION") << "\n";
      return rep.ok() ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
