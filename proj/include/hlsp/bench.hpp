#pragma once

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "hlsp/admm.hpp"
#include "hlsp/baseline.hpp"
#include "hlsp/generator.hpp"
#include "hlsp/ipm.hpp"
#include "hlsp/problem_io.hpp"
#include "hlsp/report.hpp"
#include "hlsp/types.hpp"

namespace hlsp {

struct ExperimentConfig {
  Index p_min = 1;
  Index p_max = 10;
  int reps = 100;
  std::uint64_t seed = 0;
  std::vector<std::string> solvers = {"dhadm", "dhipm", "baseline"};
  bool full_rank = false;  ///< disable dependent-row substitution in the generator
  AdmmConfig admm;
  IpmConfig ipm;
  BaselineOptions baseline;

  void check() const {
    if (p_min < 1 || p_max < p_min)
      throw Error(Error::Code::invalid_argument, "level range must satisfy 1 <= p_min <= p_max");
    if (reps < 1) throw Error(Error::Code::invalid_argument, "reps must be >= 1");
    for (const auto& s : solvers)
      if (s != "dhadm" && s != "dhipm" && s != "baseline")
        throw Error(Error::Code::invalid_argument, "unknown solver: " + s);
  }
};

/// One benchmark cell: a solver run on a generated hierarchy.
struct BenchRecord {
  Index p = 0;
  std::string solver;
  std::uint64_t seed = 0;
  std::string status = "ok";
  double time_ms = 0.0;
  int iters = 0;
  double residual = 0.0;
  std::vector<double> objectives;
  int refactors = 0;
  PhaseTimings timings;
};

inline BenchRecord run_cell(const HlspProblem& problem, const std::string& solver,
                            std::uint64_t seed, const ExperimentConfig& cfg) {
  BenchRecord rec;
  rec.p = problem.num_levels();
  rec.solver = solver;
  rec.seed = seed;
  try {
    SolveReport rep;
    if (solver == "dhadm")
      rep = solve_dhadm(problem, cfg.admm);
    else if (solver == "dhipm")
      rep = solve_dhipm(problem, cfg.ipm);
    else
      rep = solve_baseline(problem, cfg.baseline);
    rec.status = rep.status;
    rec.time_ms = rep.wall_time_ms;
    rec.iters = rep.iterations;
    rec.residual = rep.kkt_residual;
    rec.objectives.assign(rep.per_level_objective.data(),
                          rep.per_level_objective.data() + rep.per_level_objective.size());
    rec.refactors = rep.rho_refactor_count;
    rec.timings = rep.timings;
  } catch (const std::exception& e) {
    rec.status = std::string("error: ") + e.what();
  }
  return rec;
}

inline int bench_thread_cap() {
  if (const char* env = std::getenv("HLSP_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return 1;
}

/// Runs every (p, rep, solver) cell. Cell seeds are derived deterministically
/// from the base seed, so two runs of the same configuration agree on all
/// non-timing columns. Cells run in parallel up to the HLSP_THREADS cap.
inline std::vector<BenchRecord> run_suite(const ExperimentConfig& cfg) {
  cfg.check();
  struct Cell {
    Index p;
    int rep;
    std::size_t solver;
  };
  std::vector<Cell> cells;
  for (Index p = cfg.p_min; p <= cfg.p_max; ++p)
    for (int r = 0; r < cfg.reps; ++r)
      for (std::size_t s = 0; s < cfg.solvers.size(); ++s)
        cells.push_back({p, r, s});

  std::vector<BenchRecord> records(cells.size());
  const int threads = std::min<int>(bench_thread_cap(), static_cast<int>(cells.size()));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < cells.size(); i = next.fetch_add(1)) {
      const Cell& c = cells[i];
      const std::uint64_t cell_seed =
          mix_seed(cfg.seed, static_cast<std::uint64_t>(c.p), static_cast<std::uint64_t>(c.rep));
      GeneratorOptions gopts;
      gopts.dependent_rows = !cfg.full_rank;
      const HlspProblem problem = generate_random_hierarchy(c.p, cell_seed, gopts);
      records[i] = run_cell(problem, cfg.solvers[c.solver], cell_seed, cfg);
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return records;
}

// ============================================================================
// CSV emission / parsing
// ============================================================================

inline std::string csv_header(Index p_max) {
  std::string h = "p,solver,seed,status,time_ms,iters,residual";
  for (Index l = 1; l <= p_max; ++l) h += ",obj_" + std::to_string(l);
  h += ",refactors,t_kkt,t_rhs,t_solve,t_lambda,t_proj,t_dual";
  return h;
}

inline void emit_csv(const std::vector<BenchRecord>& records, std::ostream& out) {
  Index p_max = 0;
  for (const auto& r : records) p_max = std::max(p_max, r.p);
  out << csv_header(p_max) << '\n';
  for (const auto& r : records) {
    std::string status = r.status;
    for (auto& ch : status)
      if (ch == ',' || ch == '\n') ch = ';';
    out << r.p << ',' << r.solver << ',' << r.seed << ',' << status << ','
        << detail::format_decimal(r.time_ms) << ',' << r.iters << ','
        << detail::format_decimal(r.residual);
    for (Index l = 0; l < p_max; ++l) {
      out << ',';
      if (l < static_cast<Index>(r.objectives.size()))
        out << detail::format_decimal(r.objectives[static_cast<std::size_t>(l)]);
    }
    out << ',' << r.refactors << ',' << detail::format_decimal(r.timings.kkt_ms) << ','
        << detail::format_decimal(r.timings.rhs_ms) << ','
        << detail::format_decimal(r.timings.solve_ms) << ','
        << detail::format_decimal(r.timings.lambda_ms) << ','
        << detail::format_decimal(r.timings.proj_ms) << ','
        << detail::format_decimal(r.timings.dual_ms) << '\n';
  }
}

inline void emit_csv(const std::vector<BenchRecord>& records, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(Error::Code::io_error, "cannot open for writing: " + path);
  emit_csv(records, out);
  if (!out) throw Error(Error::Code::io_error, "write failed: " + path);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  fields.push_back(cur);
  return fields;
}

/// Parses a file previously written by emit_csv (losslessly, timing included).
inline std::vector<BenchRecord> parse_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(Error::Code::parse_error, "empty record file");
  const auto header = split_csv_line(line);
  Index p_max = 0;
  for (const auto& h : header)
    if (h.rfind("obj_", 0) == 0) ++p_max;

  std::vector<BenchRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (static_cast<Index>(f.size()) != static_cast<Index>(header.size()))
      throw Error(Error::Code::parse_error, "record with wrong field count");
    BenchRecord r;
    std::size_t i = 0;
    r.p = std::stoll(f[i++]);
    r.solver = f[i++];
    r.seed = std::stoull(f[i++]);
    r.status = f[i++];
    r.time_ms = std::stod(f[i++]);
    r.iters = std::stoi(f[i++]);
    r.residual = std::stod(f[i++]);
    for (Index l = 0; l < p_max; ++l) {
      const std::string& cell = f[i++];
      if (!cell.empty()) r.objectives.push_back(std::stod(cell));
    }
    r.refactors = std::stoi(f[i++]);
    r.timings.kkt_ms = std::stod(f[i++]);
    r.timings.rhs_ms = std::stod(f[i++]);
    r.timings.solve_ms = std::stod(f[i++]);
    r.timings.lambda_ms = std::stod(f[i++]);
    r.timings.proj_ms = std::stod(f[i++]);
    r.timings.dual_ms = std::stod(f[i++]);
    records.push_back(std::move(r));
  }
  return records;
}

inline std::vector<BenchRecord> parse_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Error::Code::io_error, "cannot open for reading: " + path);
  return parse_csv(in);
}

}  // namespace hlsp
