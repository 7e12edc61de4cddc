#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "gdtre/gdtre_c.h"
#include "json.hpp"

using Json = nlohmann::ordered_json;

namespace {

// One flag set shared by all subcommands; only flags the user actually set
// are forwarded, so library defaults stay in charge.
struct Flags {
  std::optional<double> tol;
  std::optional<long> max_sweeps;
  std::optional<unsigned long long> seed;
  std::optional<long> trajectories;
  std::optional<long> horizon;
  std::optional<long> perturbations;
  std::optional<long> t0;
  std::optional<std::string> x0;
  std::optional<std::string> noise_law;
  std::optional<std::string> format;
  bool antithetic = false;
  std::string out_path;
  std::string solution_path;
};

int exit_code(gdtre_status status) {
  switch (status) {
    case GDTRE_OK:
      return 0;
    case GDTRE_ERR_VALIDATION:
      return 2;
    case GDTRE_ERR_PARSE:
    case GDTRE_ERR_INVALID_ARGUMENT:
    case GDTRE_ERR_INTERNAL:
      return 3;
    case GDTRE_ERR_NO_CONVERGENCE:
    case GDTRE_ERR_SINGULAR:
      return 4;
    case GDTRE_ERR_NOT_STABILIZING:
      return 5;
    case GDTRE_ERR_SADDLE_VIOLATION:
      return 6;
  }
  return 3;
}

int fail_io(const std::string& message) {
  std::cerr << "error: " << message << "\n";
  return 3;
}

bool read_file(const std::string& path, std::string& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) return false;
  std::stringstream ss;
  ss << in.rdbuf();
  out = ss.str();
  return true;
}

bool write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out.good()) return false;
  out << content;
  return out.good();
}

// "1,0.5,-2" -> JSON array of doubles.
bool parse_x0_csv(const std::string& csv, Json& arr) {
  arr = Json::array();
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      size_t pos = 0;
      double v = std::stod(item, &pos);
      while (pos < item.size() &&
             std::isspace(static_cast<unsigned char>(item[pos]))) {
        ++pos;
      }
      if (pos != item.size()) return false;
      arr.push_back(v);
    } catch (const std::exception&) {
      return false;
    }
  }
  return !arr.empty();
}

std::string take(char* s) {
  std::string out = s == nullptr ? std::string() : std::string(s);
  gdtre_string_free(s);
  return out;
}

// Report to stdout (pretty) and, when requested, raw bytes to --out.
int emit_report(const std::string& report, const std::string& out_path) {
  if (!report.empty()) {
    std::cout << Json::parse(report).dump(2) << "\n";
  }
  if (!out_path.empty() && !write_file(out_path, report)) {
    return fail_io("cannot write report to " + out_path);
  }
  return 0;
}

int finish(gdtre_status status, const std::string& report,
           const std::string& out_path) {
  if (int rc = emit_report(report, out_path); rc != 0) return rc;
  if (status != GDTRE_OK) {
    std::cerr << "error: " << gdtre_last_error() << "\n";
  }
  return exit_code(status);
}

struct ProblemGuard {
  gdtre_problem* p = nullptr;
  ~ProblemGuard() { gdtre_problem_free(p); }
};

struct SolutionGuard {
  gdtre_solution* s = nullptr;
  ~SolutionGuard() { gdtre_solution_free(s); }
};

int run(const std::string& command, const std::string& path,
        const Flags& flags) {
  std::string problem_text;
  if (!read_file(path, problem_text)) {
    return fail_io("cannot read " + path);
  }

  ProblemGuard problem;
  if (gdtre_problem_parse(problem_text.c_str(), &problem.p) != GDTRE_OK) {
    std::cerr << "error: " << gdtre_last_error() << "\n";
    return 3;
  }

  Json options = Json::object();
  if (flags.tol) options["tol"] = *flags.tol;
  if (flags.max_sweeps) options["max_sweeps"] = *flags.max_sweeps;
  if (flags.seed) options["seed"] = *flags.seed;
  if (flags.trajectories) options["trajectories"] = *flags.trajectories;
  if (flags.horizon) options["horizon"] = *flags.horizon;
  if (flags.perturbations) options["perturbations"] = *flags.perturbations;
  if (flags.t0) options["t0"] = *flags.t0;
  if (flags.noise_law) options["noise_law"] = *flags.noise_law;
  if (flags.format) options["format"] = *flags.format;
  if (flags.antithetic) options["antithetic"] = true;
  if (flags.x0) {
    Json arr;
    if (!parse_x0_csv(*flags.x0, arr)) {
      return fail_io("--x0 expects a comma-separated list of numbers");
    }
    options["x0"] = arr;
  }
  std::string options_text = options.dump();

  if (command == "validate") {
    char* report = nullptr;
    gdtre_status status = gdtre_validate(problem.p, &report);
    return finish(status, take(report), flags.out_path);
  }

  // Every other pipeline is gated on a clean validation pass.
  {
    char* report = nullptr;
    gdtre_status status = gdtre_validate(problem.p, &report);
    std::string text = take(report);
    if (status != GDTRE_OK) return finish(status, text, flags.out_path);
  }

  SolutionGuard solution;
  if (!flags.solution_path.empty() && command != "solve") {
    std::string solution_text;
    if (!read_file(flags.solution_path, solution_text)) {
      return fail_io("cannot read " + flags.solution_path);
    }
    gdtre_status status = gdtre_solution_from_json(
        problem.p, solution_text.c_str(), &solution.s);
    if (status != GDTRE_OK) {
      std::cerr << "error: " << gdtre_last_error() << "\n";
      return exit_code(status);
    }
  }

  char* report = nullptr;
  gdtre_status status = GDTRE_ERR_INTERNAL;
  if (command == "solve") {
    gdtre_solution* solved = nullptr;
    status = gdtre_solve(problem.p, options_text.c_str(), &solved, &report);
    solution.s = solved;
    if (status == GDTRE_OK && !flags.solution_path.empty()) {
      char* exported = nullptr;
      if (gdtre_solution_to_json(problem.p, solution.s, &exported) !=
          GDTRE_OK) {
        gdtre_string_free(report);
        return fail_io(gdtre_last_error());
      }
      if (!write_file(flags.solution_path, take(exported))) {
        gdtre_string_free(report);
        return fail_io("cannot write solution to " + flags.solution_path);
      }
    }
  } else if (command == "membership") {
    status = gdtre_membership(problem.p, solution.s, options_text.c_str(),
                              &report);
  } else if (command == "detect") {
    status = gdtre_detect(problem.p, &report);
  } else if (command == "verify") {
    status = gdtre_verify(problem.p, solution.s, options_text.c_str(),
                          &report);
  } else if (command == "simulate") {
    status = gdtre_simulate(problem.p, solution.s, options_text.c_str(),
                            &report);
  }
  return finish(status, take(report), flags.out_path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Solver and game-theoretic synthesis toolkit for coupled "
      "discrete-time Riccati equations over Markov jump linear systems"};
  app.require_subcommand(1);
  app.set_version_flag("--version", gdtre_version());

  Flags flags;
  std::string path;
  std::string command;

  auto add_path = [&](CLI::App* sub) {
    sub->add_option("problem", path, "Problem file (JSON)")
        ->required()
        ->type_name("PATH");
    sub->add_option("--out", flags.out_path, "Write the report to PATH")
        ->type_name("PATH");
    sub->callback([&, sub] { command = sub->get_name(); });
  };
  auto add_solve_flags = [&](CLI::App* sub) {
    sub->add_option("--tol", flags.tol, "Convergence tolerance");
    sub->add_option("--max-sweeps", flags.max_sweeps,
                    "Sweep budget for the value iteration");
  };
  auto add_sim_flags = [&](CLI::App* sub) {
    sub->add_option("--seed", flags.seed, "RNG seed");
    sub->add_option("--trajectories", flags.trajectories,
                    "Monte Carlo trajectory count");
    sub->add_option("--horizon", flags.horizon,
                    "Simulation horizon (default from the closed-loop decay)");
    sub->add_option("--noise-law", flags.noise_law,
                    "Noise law: gaussian or rademacher");
    sub->add_flag("--antithetic", flags.antithetic,
                  "Pair trajectories with negated noise");
    sub->add_option("--x0", flags.x0, "Initial state as comma-separated list")
        ->type_name("CSV");
    sub->add_option("--t0", flags.t0, "Start time");
  };

  CLI::App* validate = app.add_subcommand(
      "validate", "Check the problem data against the model assumptions");
  add_path(validate);

  CLI::App* solve = app.add_subcommand(
      "solve", "Compute the stabilizing solution and equilibrium gains");
  add_path(solve);
  add_solve_flags(solve);
  solve
      ->add_option("--solution", flags.solution_path,
                   "Write the solution to PATH for later handoff")
      ->type_name("PATH");

  CLI::App* membership = app.add_subcommand(
      "membership", "Test the synthesized gain pair for stabilizing-set "
                    "membership");
  add_path(membership);
  add_solve_flags(membership);
  membership
      ->add_option("--solution", flags.solution_path,
                   "Reuse a stored solution instead of solving")
      ->type_name("PATH");

  CLI::App* detect = app.add_subcommand(
      "detect", "Run the stochastic detectability analysis");
  add_path(detect);

  CLI::App* verify = app.add_subcommand(
      "verify", "Verify the saddle point against gain perturbations and a "
                "Monte Carlo cross-check");
  add_path(verify);
  add_solve_flags(verify);
  add_sim_flags(verify);
  verify->add_option("--perturbations", flags.perturbations,
                     "Number of random gain perturbations");
  verify
      ->add_option("--solution", flags.solution_path,
                   "Reuse a stored solution instead of solving")
      ->type_name("PATH");

  CLI::App* simulate = app.add_subcommand(
      "simulate", "Roll out the equilibrium feedback pair and report batch "
                  "statistics");
  add_path(simulate);
  add_solve_flags(simulate);
  add_sim_flags(simulate);
  simulate->add_option("--format", flags.format,
                       "Report format: json or csv");
  simulate
      ->add_option("--solution", flags.solution_path,
                   "Reuse a stored solution instead of solving")
      ->type_name("PATH");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 3;
  }

  return run(command, path, flags);
}
