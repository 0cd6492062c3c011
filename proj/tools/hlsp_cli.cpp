// Command-line front end: generate random hierarchies, solve single problem
// files with any of the three solvers, run benchmark sweeps, and emit solution
// sensitivities.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include "hlsp/admm.hpp"
#include "hlsp/baseline.hpp"
#include "hlsp/bench.hpp"
#include "hlsp/generator.hpp"
#include "hlsp/gradient.hpp"
#include "hlsp/ipm.hpp"
#include "hlsp/problem_io.hpp"

namespace {

void print_report(const hlsp::SolveReport& rep) {
  std::printf("solver:     %s\n", rep.solver.c_str());
  std::printf("status:     %s\n", rep.status.c_str());
  std::printf("iterations: %d\n", rep.iterations);
  std::printf("residual:   %.6e\n", rep.kkt_residual);
  std::printf("time:       %.3f ms\n", rep.wall_time_ms);
  std::printf("x:         ");
  for (hlsp::Index i = 0; i < rep.x.size(); ++i) std::printf(" % .10e", rep.x[i]);
  std::printf("\n");
  for (hlsp::Index l = 0; l < rep.per_level_objective.size(); ++l)
    std::printf("objective[%ld]: %.10e\n", static_cast<long>(l + 1), rep.per_level_objective[l]);
  if (rep.solver == "dhadm")
    std::printf("phase ms: kkt=%.3f rhs=%.3f solve=%.3f lambda=%.3f proj=%.3f (roots=%.3f) dual=%.3f, refactors=%d\n",
                rep.timings.kkt_ms, rep.timings.rhs_ms, rep.timings.solve_ms,
                rep.timings.lambda_ms, rep.timings.proj_ms, rep.timings.proj_roots_ms,
                rep.timings.dual_ms, rep.rho_refactor_count);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hierarchical least-squares solvers and benchmarks"};
  app.require_subcommand(1);

  // --- generate ---
  auto* gen = app.add_subcommand("generate", "write a random problem file");
  int gen_p = 3;
  std::uint64_t gen_seed = 0;
  std::string gen_out = "problem.txt";
  bool gen_full_rank = false;
  gen->add_option("--p", gen_p, "number of priority levels")->required();
  gen->add_option("--seed", gen_seed, "random seed");
  gen->add_option("--out", gen_out, "output path")->required();
  gen->add_flag("--full-rank", gen_full_rank, "disable dependent-row substitution");

  // --- solve ---
  auto* solve = app.add_subcommand("solve", "solve one problem file");
  std::string solve_problem, solve_solver = "dhadm";
  double solve_chi = -1.0;
  int solve_max_iters = -1;
  bool solve_no_precondition = false;
  bool solve_projection_ipm = false;
  solve->add_option("--problem", solve_problem, "problem file")->required();
  solve->add_option("--solver", solve_solver, "dhadm | dhipm | baseline")
      ->check(CLI::IsMember({"dhadm", "dhipm", "baseline"}));
  solve->add_option("--chi", solve_chi, "convergence threshold override");
  solve->add_option("--max-iters", solve_max_iters, "iteration cap override");
  solve->add_flag("--no-precondition", solve_no_precondition, "skip equilibration (dhadm)");
  solve->add_flag("--projection-ipm", solve_projection_ipm,
                  "use the interior-point projection path (dhadm)");

  // --- bench ---
  auto* bench = app.add_subcommand("bench", "run a benchmark sweep and emit CSV");
  hlsp::ExperimentConfig bench_cfg;
  std::string bench_out = "records.csv";
  std::string bench_solvers = "dhadm,dhipm,baseline";
  long bp_min = 1, bp_max = 10;
  bench->add_option("--p-min", bp_min, "smallest level count");
  bench->add_option("--p-max", bp_max, "largest level count");
  bench->add_option("--reps", bench_cfg.reps, "repetitions per level count");
  bench->add_option("--seed", bench_cfg.seed, "base seed");
  bench->add_option("--solvers", bench_solvers, "comma-separated solver list");
  bench->add_flag("--full-rank", bench_cfg.full_rank, "disable dependent-row substitution");
  bench->add_option("--out", bench_out, "output CSV path")->required();

  // --- gradient ---
  auto* grad = app.add_subcommand("gradient", "emit the Jacobian of x w.r.t. every b entry as CSV");
  std::string grad_problem, grad_out = "jacobian.csv";
  grad->add_option("--problem", grad_problem, "problem file")->required();
  grad->add_option("--out", grad_out, "output CSV path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      hlsp::GeneratorOptions opts;
      opts.dependent_rows = !gen_full_rank;
      const auto problem = hlsp::generate_random_hierarchy(gen_p, gen_seed, opts);
      hlsp::save_problem(problem, gen_out);
      std::printf("wrote %s (p=%d, n_x=%ld)\n", gen_out.c_str(), gen_p,
                  static_cast<long>(problem.n_x));
    } else if (*solve) {
      const auto problem = hlsp::load_problem(solve_problem);
      hlsp::SolveReport rep;
      if (solve_solver == "dhadm") {
        hlsp::AdmmConfig cfg;
        if (solve_chi > 0) cfg.chi = solve_chi;
        if (solve_max_iters > 0) cfg.max_iters = solve_max_iters;
        cfg.precondition = !solve_no_precondition;
        cfg.projection_ipm = solve_projection_ipm;
        rep = hlsp::solve_dhadm(problem, cfg);
      } else if (solve_solver == "dhipm") {
        hlsp::IpmConfig cfg;
        if (solve_chi > 0) cfg.chi = solve_chi;
        if (solve_max_iters > 0) cfg.max_iters = solve_max_iters;
        rep = hlsp::solve_dhipm(problem, cfg);
      } else {
        rep = hlsp::solve_baseline(problem);
      }
      print_report(rep);
    } else if (*bench) {
      bench_cfg.p_min = bp_min;
      bench_cfg.p_max = bp_max;
      bench_cfg.solvers.clear();
      std::stringstream ss(bench_solvers);
      std::string tok;
      while (std::getline(ss, tok, ','))
        if (!tok.empty()) bench_cfg.solvers.push_back(tok);
      const auto records = hlsp::run_suite(bench_cfg);
      hlsp::emit_csv(records, bench_out);
      std::printf("wrote %zu records to %s\n", records.size(), bench_out.c_str());
    } else if (*grad) {
      const auto problem = hlsp::load_problem(grad_problem);
      hlsp::IpmConfig cfg;
      hlsp::KktPoint point;
      const auto rep = hlsp::solve_dhipm(problem, cfg, &point);
      if (!rep.converged)
        throw hlsp::Error(hlsp::Error::Code::point_not_converged,
                          "reference solve did not converge");
      const hlsp::Matrix J = hlsp::jacobian_x_wrt_b(problem, point);
      std::ofstream out(grad_out);
      if (!out)
        throw hlsp::Error(hlsp::Error::Code::io_error, "cannot open for writing: " + grad_out);
      out << "x_index";
      hlsp::Index at = 0;
      for (hlsp::Index l = 0; l < problem.num_levels(); ++l)
        for (hlsp::Index i = 0; i < problem.level_rows(l); ++i)
          out << ",db_" << (l + 1) << '_' << (i + 1), ++at;
      out << '\n';
      for (hlsp::Index r = 0; r < J.rows(); ++r) {
        out << (r + 1);
        for (hlsp::Index c = 0; c < J.cols(); ++c)
          out << ',' << hlsp::detail::format_decimal(J(r, c));
        out << '\n';
      }
      std::printf("wrote %ldx%ld Jacobian to %s\n", static_cast<long>(J.rows()),
                  static_cast<long>(J.cols()), grad_out.c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
