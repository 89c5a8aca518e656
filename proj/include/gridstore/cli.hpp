#pragma once

// Command-line front end. run_cli() is the whole program; tools/gridstore.cpp
// only forwards argv and the standard streams.
//
// Exit codes: 0 success, 1 parse or validation error (including bad flags),
// 2 infeasible (or a checked solution that violates the tolerance),
// 3 node or time limit, 4 solver numerical failure.
//
// Defaults for any flag can come from a TOML options file given by --options
// or the GRIDSTORE_OPTIONS environment variable, with one table per
// subcommand:
//
//   [solve]
//   formulation = "soc-mi"
//   time-limit = 600

#include <array>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "gridstore/case_io.hpp"
#include "gridstore/formulation.hpp"
#include "gridstore/lp_format.hpp"
#include "gridstore/solution.hpp"
#include "gridstore/solve.hpp"
#include "gridstore/verify.hpp"

namespace gridstore {

inline constexpr const char* kOptionsEnv = "GRIDSTORE_OPTIONS";

namespace cli_detail {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
}

// Writes to the file if a path is given, otherwise to `out`.
inline void emit(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty()) out << text;
  else write_file(path, text);
}

inline int exit_code(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal:
    case SolveStatus::gap_limit: return 0;
    case SolveStatus::infeasible:
    case SolveStatus::unbounded: return 2;
    case SolveStatus::node_limit:
    case SolveStatus::time_limit: return 3;
    case SolveStatus::numerical_error: return 4;
  }
  return 4;
}

struct ModelFlags {
  std::string formulation = "dc-mi";
  std::string discretization;
  int segments = 32;
};

struct SolverFlags {
  double time_limit = 3600.0;
  double mip_gap = 1e-4;
  double cone_tol = 1e-6;
  std::uint64_t seed = 0;
  bool verbose = false;
};

inline void add_model_flags(CLI::App* cmd, ModelFlags& m, const std::vector<std::string>& formulations) {
  cmd->add_option("--formulation,-f", m.formulation, "Formulation")
      ->check(CLI::IsMember(formulations))
      ->capture_default_str();
  cmd->add_option("--discretization", m.discretization, "Override the case's time discretization rule")
      ->check(CLI::IsMember({"endpoint", "trapezoid"}));
  cmd->add_option("--segments", m.segments, "Piecewise-linear cost segments per generator")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

inline void add_solver_flags(CLI::App* cmd, SolverFlags& s) {
  cmd->add_option("--time-limit", s.time_limit, "Wall-clock limit in seconds")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--mip-gap", s.mip_gap, "Relative optimality gap")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--cone-tol", s.cone_tol, "Cone feasibility tolerance")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--seed", s.seed, "Deterministic seed")->capture_default_str();
  cmd->add_flag("--verbose,-v", s.verbose, "Print solver log lines to stderr");
}

inline SolveOptions solve_options(const SolverFlags& s, std::ostream& err) {
  SolveOptions o;
  o.time_limit = s.time_limit;
  o.mip_gap = s.mip_gap;
  o.cone_tol = s.cone_tol;
  o.deterministic_seed = s.seed;
  if (s.verbose) o.on_log = [&err](const std::string& line) { err << line << "\n"; };
  return o;
}

inline Case load_with_rule(const std::string& path, const ModelFlags& m) {
  Case c = load_case(path);
  if (!m.discretization.empty()) c.grid.rule = parse_rule(m.discretization);
  return c;
}

inline std::array<double, 3> parse_splits(const std::string& text) {
  const auto parts = detail::split(text, ',');
  if (parts.size() != 3) throw ParseError("--splits: expected three comma-separated fractions");
  std::array<double, 3> out{};
  for (std::size_t i = 0; i < 3; ++i) out[i] = detail::parse_number(parts[i], "--splits");
  return out;
}

inline std::string trajectory_csv(const Network& net, const TimeGrid& grid,
                                  const std::map<std::string, BufferTrajectory>& runs) {
  std::ostringstream os;
  os << "step,time_h,device,p_charge_mw,p_discharge_mw,energy_mwh,increment_mwh,clipped\n";
  for (const auto& d : net.storages) {
    auto it = runs.find(d.id);
    if (it == runs.end()) continue;
    const auto& tr = it->second;
    for (std::size_t k = 0; k < grid.steps(); ++k) {
      bool clipped = false;
      for (const auto& c : tr.clips) clipped = clipped || c.step == k;
      os << k << ',' << format_number(grid.start_time(k)) << ',' << d.id << ',' << format_number(tr.p_c[k]) << ','
         << format_number(tr.p_d[k]) << ',' << format_number(tr.energy[k]) << ','
         << format_number(tr.increment[k]) << ',' << (clipped ? 1 : 0) << '\n';
    }
  }
  return os.str();
}

inline int cmd_solve(const std::string& case_path, const ModelFlags& m, const SolverFlags& s,
                     const std::string& out_dir, std::ostream& out, std::ostream& err) {
  const Case c = load_with_rule(case_path, m);
  const auto pi = build_problem(c.network, c.grid, {parse_formulation(m.formulation), m.segments});
  const auto r = solve(pi, solve_options(s, err));
  nlohmann::json summary = summary_json(r);
  summary["case"] = c.network.name;
  summary["formulation"] = m.formulation;
  summary["discretization"] = to_string(c.grid.rule);
  summary["segments"] = m.segments;
  summary["pwl_error_bound"] = pi.pwl_error_bound;
  const std::filesystem::path dir(out_dir);
  write_file(dir / "summary.json", summary.dump(2) + "\n");
  if (r.has_solution()) {
    const auto sol = extract_solution(pi, r);
    write_file(dir / "solution.json", solution_to_json(sol, c.network).dump(1) + "\n");
    write_file(dir / "dispatch.csv", dispatch_csv(c.network, c.grid, sol));
  }
  out << m.formulation << " " << to_string(r.status) << " objective " << format_number(r.objective) << " bound "
      << format_number(r.bound) << " gap " << format_number(r.gap) << " seconds " << format_number(r.seconds) << "\n";
  if (!r.message.empty()) err << r.message << "\n";
  return exit_code(r.status);
}

inline int cmd_check(const std::string& case_path, const std::string& sol_path, double tol, bool as_json,
                     std::ostream& out) {
  const Case c = load_case(case_path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(sol_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("solution '" + sol_path + "': " + e.what());
  }
  const auto rep = check_solution(c.network, c.grid, solution_from_json(doc), tol);
  out << (as_json ? rep.to_json().dump(2) + "\n" : rep.text());
  return rep.feasible ? 0 : 2;
}

inline int cmd_simulate(const std::string& case_path, const std::string& schedule_path, const std::string& out_path,
                        std::ostream& out, std::ostream& err) {
  const Case c = load_case(case_path);
  const auto schedule = read_schedule_csv(read_file(schedule_path));
  std::map<std::string, BufferTrajectory> runs;
  for (const auto& [id, steps] : schedule) {
    const StorageDevice* dev = nullptr;
    for (const auto& d : c.network.storages)
      if (d.id == id) dev = &d;
    if (!dev) throw ValidationError("schedule names unknown device '" + id + "'");
    runs[id] = simulate_buffer(*dev, c.grid, steps);
  }
  emit(out_path, trajectory_csv(c.network, c.grid, runs), out);
  for (const auto& [id, tr] : runs) {
    for (const auto& e : tr.clips)
      err << "clip " << id << " step " << e.step << " " << e.quantity << " " << e.reason << " commanded "
          << format_number(e.commanded) << " applied " << format_number(e.applied) << "\n";
    if (tr.unresolved > 0.0) err << "unresolved " << id << " " << format_number(tr.unresolved) << " MWh\n";
  }
  return 0;
}

inline int cmd_export(const std::string& case_path, const ModelFlags& m, const std::string& format, bool snapshot,
                      const SolverFlags& s, const std::string& out_path, std::ostream& out, std::ostream& err) {
  const Case c = load_with_rule(case_path, m);
  auto pi = build_problem(c.network, c.grid, {parse_formulation(m.formulation), m.segments});
  if (snapshot && !pi.cones.empty()) {
    const auto r = solve(pi, solve_options(s, err));
    pi = oa_snapshot(pi, r.cut_pool);
  }
  emit(out_path, format == "lp" ? lp_text(pi) : problem_to_json(pi).dump(1) + "\n", out);
  return 0;
}

}  // namespace cli_detail

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  using namespace cli_detail;
  CLI::App app{"Multi-period storage dispatch: formulation, solve, verification and export"};
  app.name("gridstore");
  app.require_subcommand(1);
  app.set_config("--options", "", "TOML file with default flag values")->envname(kOptionsEnv);

  const std::vector<std::string> solvable{"dc-mi", "soc-mi", "relaxed-dc", "relaxed-soc"};
  const std::vector<std::string> exportable{"dc-mi", "soc-mi", "relaxed-dc", "relaxed-soc", "ac-nl", "ac-mi"};

  std::string case_path, second_path, out_path, splits = "0.36,0.33,0.31", format = "lp";
  ModelFlags model;
  SolverFlags solver;
  double tol = 1e-6;
  bool as_json = false, snapshot = false;

  auto* solve_cmd = app.add_subcommand("solve", "Solve a case and write solution.json, summary.json and dispatch.csv");
  solve_cmd->add_option("case", case_path, "Case JSON")->required();
  add_model_flags(solve_cmd, model, solvable);
  add_solver_flags(solve_cmd, solver);
  out_path = ".";
  solve_cmd->add_option("--out,-o", out_path, "Output directory")->capture_default_str();

  auto* check_cmd = app.add_subcommand("check", "Evaluate a solution against the storage relations");
  check_cmd->add_option("case", case_path, "Case JSON")->required();
  check_cmd->add_option("solution", second_path, "Solution JSON")->required();
  check_cmd->add_option("--tol", tol, "Feasibility tolerance")->check(CLI::PositiveNumber)->capture_default_str();
  check_cmd->add_flag("--json", as_json, "Print the report as JSON");

  auto* sim_cmd = app.add_subcommand("simulate", "Integrate storage energy under a commanded schedule");
  sim_cmd->add_option("case", case_path, "Case JSON")->required();
  sim_cmd->add_option("schedule", second_path, "Schedule CSV (step, device, p_charge_mw, p_discharge_mw)")->required();
  std::string sim_out;
  sim_cmd->add_option("--out,-o", sim_out, "Trajectory CSV (default stdout)");

  auto* rep_cmd = app.add_subcommand("replicate3p", "Build a three-phase case from a single-phase one");
  rep_cmd->add_option("case", case_path, "Case JSON")->required();
  rep_cmd->add_option("--splits", splits, "Per-phase load fractions")->capture_default_str();
  std::string rep_out;
  rep_cmd->add_option("--out,-o", rep_out, "Case JSON (default stdout)");

  auto* exp_cmd = app.add_subcommand("export", "Write the optimization instance as LP or JSON");
  exp_cmd->add_option("case", case_path, "Case JSON")->required();
  add_model_flags(exp_cmd, model, exportable);
  add_solver_flags(exp_cmd, solver);
  exp_cmd->add_option("--format", format, "Output format")->check(CLI::IsMember({"lp", "json"}))->capture_default_str();
  exp_cmd->add_flag("--oa-snapshot", snapshot, "Solve first and replace cones by the collected cuts");
  std::string exp_out;
  exp_cmd->add_option("--out,-o", exp_out, "Output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return 1;
  }

  try {
    if (*solve_cmd) return cmd_solve(case_path, model, solver, out_path, out, err);
    if (*check_cmd) return cmd_check(case_path, second_path, tol, as_json, out);
    if (*sim_cmd) return cmd_simulate(case_path, second_path, sim_out, out, err);
    if (*rep_cmd) {
      const Case c = load_case(case_path);
      const auto net3 = make_three_phase(c.network, parse_splits(splits));
      emit(rep_out, dump_case(net3, c.grid) + "\n", out);
      return 0;
    }
    if (*exp_cmd) return cmd_export(case_path, model, format, snapshot, solver, exp_out, out, err);
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace gridstore
