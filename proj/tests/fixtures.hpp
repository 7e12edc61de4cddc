#pragma once

#include "gdtre/model.hpp"

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fixtures {

inline std::string path(const std::string& name) {
  return std::string(GDTRE_FIXTURE_DIR) + "/" + name;
}

inline std::string read_file(const std::string& file_path) {
  std::ifstream in(file_path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + file_path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline gdtre::ProblemSpec load(const std::string& name) {
  return gdtre::parse_problem(read_file(path(name)));
}

/// Fixtures on which stabilizing_solve is expected to converge.
inline const std::vector<std::string>& solvable_names() {
  static const std::vector<std::string> names = {
      "scalar_lqr.json",   "scalar_game.json", "scalar_game_noisy.json",
      "period2.json",      "multi.json",       "multi_p2.json"};
  return names;
}

}  // namespace fixtures
