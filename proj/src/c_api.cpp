#include "gdtre/gdtre_c.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <new>
#include <string>

#include "gdtre/jsonio.hpp"
#include "gdtre/model.hpp"
#include "gdtre/report.hpp"
#include "gdtre/riccati.hpp"
#include "gdtre/synthesis.hpp"

struct gdtre_problem {
  gdtre::ProblemSpec spec;
};

struct gdtre_solution {
  gdtre::StabilizingSolution sol;
};

namespace {

thread_local std::string g_last_error;

void clear_error() { g_last_error.clear(); }

gdtre_status fail(gdtre_status code, const std::string& message) {
  g_last_error = message;
  return code;
}

gdtre_status map_error(const gdtre::Error& e) {
  using gdtre::ErrorCode;
  switch (e.code) {
    case ErrorCode::ParseError:
    case ErrorCode::StructuralError:
      return GDTRE_ERR_PARSE;
    case ErrorCode::NotStable:
    case ErrorCode::NotAdmissible:
      return GDTRE_ERR_NOT_STABILIZING;
    case ErrorCode::SingularRcal:
      return GDTRE_ERR_SINGULAR;
    case ErrorCode::NonConvergence:
      return GDTRE_ERR_NO_CONVERGENCE;
    case ErrorCode::InvalidArgument:
    case ErrorCode::PreconditionFailed:
      return GDTRE_ERR_INVALID_ARGUMENT;
    case ErrorCode::InternalError:
      return GDTRE_ERR_INTERNAL;
  }
  return GDTRE_ERR_INTERNAL;
}

gdtre_status map_solve_status(gdtre::SolveStatus status) {
  switch (status) {
    case gdtre::SolveStatus::Converged:
      return GDTRE_OK;
    case gdtre::SolveStatus::NoConvergence:
      return GDTRE_ERR_NO_CONVERGENCE;
    case gdtre::SolveStatus::SingularRcal:
      return GDTRE_ERR_SINGULAR;
    case gdtre::SolveStatus::NotStabilizing:
    case gdtre::SolveStatus::NotAdmissible:
      return GDTRE_ERR_NOT_STABILIZING;
  }
  return GDTRE_ERR_INTERNAL;
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) return nullptr;
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

gdtre_status emit(const std::string& s, char** out) {
  if (out == nullptr) return GDTRE_OK;
  *out = copy_string(s);
  if (*out == nullptr) return fail(GDTRE_ERR_INTERNAL, "out of memory");
  return GDTRE_OK;
}

gdtre::Json parse_options_json(const char* options_json) {
  if (options_json == nullptr || options_json[0] == '\0') {
    return gdtre::Json::object();
  }
  gdtre::Json j = gdtre::Json::parse(options_json, nullptr, false);
  if (j.is_discarded()) {
    throw gdtre::Error(gdtre::ErrorCode::InvalidArgument,
                       "options string is not valid JSON");
  }
  if (!j.is_object()) {
    throw gdtre::Error(gdtre::ErrorCode::InvalidArgument,
                       "options must be a JSON object");
  }
  return j;
}

template <typename Fn>
gdtre_status guarded(Fn&& fn) {
  clear_error();
  try {
    return fn();
  } catch (const gdtre::Error& e) {
    return fail(map_error(e), e.what());
  } catch (const std::bad_alloc&) {
    return fail(GDTRE_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(GDTRE_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(GDTRE_ERR_INTERNAL, "unknown error");
  }
}

gdtre_status require_problem(const gdtre_problem* p) {
  if (p == nullptr) {
    return fail(GDTRE_ERR_INVALID_ARGUMENT, "problem handle is null");
  }
  return GDTRE_OK;
}

}  // namespace

extern "C" {

const char* gdtre_version(void) { return gdtre::kToolVersion; }

const char* gdtre_last_error(void) { return g_last_error.c_str(); }

void gdtre_string_free(char* s) { std::free(s); }

gdtre_status gdtre_problem_parse(const char* json, gdtre_problem** out) {
  return guarded([&]() -> gdtre_status {
    if (json == nullptr) {
      return fail(GDTRE_ERR_INVALID_ARGUMENT, "json string is null");
    }
    if (out == nullptr) {
      return fail(GDTRE_ERR_INVALID_ARGUMENT, "output handle is null");
    }
    *out = nullptr;
    auto* p = new gdtre_problem{gdtre::parse_problem(json)};
    *out = p;
    return GDTRE_OK;
  });
}

void gdtre_problem_free(gdtre_problem* p) { delete p; }

gdtre_status gdtre_problem_canonical(const gdtre_problem* p, char** out) {
  return guarded([&]() -> gdtre_status {
    if (auto rc = require_problem(p); rc != GDTRE_OK) return rc;
    if (out == nullptr) {
      return fail(GDTRE_ERR_INVALID_ARGUMENT, "output pointer is null");
    }
    return emit(gdtre::serialize_problem(p->spec), out);
  });
}

gdtre_status gdtre_problem_digest(const gdtre_problem* p, char** out) {
  return guarded([&]() -> gdtre_status {
    if (auto rc = require_problem(p); rc != GDTRE_OK) return rc;
    if (out == nullptr) {
      return fail(GDTRE_ERR_INVALID_ARGUMENT, "output pointer is null");
    }
    return emit(gdtre::problem_digest(p->spec), out);
  });
}

gdtre_status gdtre_validate(const gdtre_problem* p, char** report_out) {
  return guarded([&]() -> gdtre_status {
    if (auto rc = require_problem(p); rc != GDTRE_OK) return rc;
    gdtre::Json report = gdtre::validate_pipeline(p->spec);
    bool ok = report.at("result").at("ok").get<bool>();
    if (auto rc = emit(gdtre::canonical_dump(report), report_out);
        rc != GDTRE_OK) {
      return rc;
    }
    if (!ok) {
      return fail(GDTRE_ERR_VALIDATION, "problem data violates assumptions");
    }
    return GDTRE_OK;
  });
}

gdtre_status gdtre_solve(const gdtre_problem* p, const char* options_json,
                         gdtre_solution** sol_out, char** report_out) {
  return guarded([&]() -> gdtre_status {
    if (auto rc = require_problem(p); rc != GDTRE_OK) return rc;
    if (sol_out != nullptr) *sol_out = nullptr;
    gdtre::PipelineOptions options =
        gdtre::parse_options(parse_options_json(options_json), p->spec);
    gdtre::SolveOutput output = gdtre::solve_pipeline(p->spec, options);
    if (auto rc = emit(gdtre::canonical_dump(output.report), report_out);
        rc != GDTRE_OK) {
      return rc;
    }
    gdtre_status status = map_solve_status(output.sol.status);
    if (status != GDTRE_OK) {
      return fail(status, output.sol.detail.empty()
                              ? std::string("solve did not converge")
                              : output.sol.detail);
    }
    if (sol_out != nullptr) {
      *sol_out = new gdtre_solution{std::move(output.sol)};
    }
    return GDTRE_OK;
  });
}

gdtre_status gdtre_membership(const gdtre_problem* p,
                              const gdtre_solution* sol,
                              const char* options_json, char** report_out) {
  return guarded([&]() -> gdtre_status {
    if (auto rc = require_problem(p); rc != GDTRE_OK) return rc;
    gdtre::PipelineOptions options =
        gdtre::parse_options(parse_options_json(options_json), p->spec);
    gdtre::Json report = gdtre::membership_pipeline(
        p->spec, sol == nullptr ? nullptr : &sol->sol, options);
    bool member = report.at("result").at("status").get<std::string>() ==
                  gdtre::membership_status_name(gdtre::MembershipStatus::Member);
    if (auto rc = emit(gdtre::canonical_dump(report), report_out);
        rc != GDTRE_OK) {
      return rc;
    }
    if (!member) {
      return fail(GDTRE_ERR_NOT_STABILIZING,
                  "gain pair is not a stabilizing-set member");
    }
    return GDTRE_OK;
  });
}

gdtre_status gdtre_detect(const gdtre_problem* p, char** report_out) {
  return guarded([&]() -> gdtre_status {
    if (auto rc = require_problem(p); rc != GDTRE_OK) return rc;
    gdtre::Json report = gdtre::detect_pipeline(p->spec);
    return emit(gdtre::canonical_dump(report), report_out);
  });
}

gdtre_status gdtre_verify(const gdtre_problem* p, const gdtre_solution* sol,
                          const char* options_json, char** report_out) {
  return guarded([&]() -> gdtre_status {
    if (auto rc = require_problem(p); rc != GDTRE_OK) return rc;
    gdtre::PipelineOptions options =
        gdtre::parse_options(parse_options_json(options_json), p->spec);
    gdtre::Json report = gdtre::verify_pipeline(
        p->spec, sol == nullptr ? nullptr : &sol->sol, options);
    bool ok = report.at("result").at("ok").get<bool>();
    if (auto rc = emit(gdtre::canonical_dump(report), report_out);
        rc != GDTRE_OK) {
      return rc;
    }
    if (!ok) {
      return fail(GDTRE_ERR_SADDLE_VIOLATION,
                  "saddle-point verification failed");
    }
    return GDTRE_OK;
  });
}

gdtre_status gdtre_simulate(const gdtre_problem* p, const gdtre_solution* sol,
                            const char* options_json, char** report_out) {
  return guarded([&]() -> gdtre_status {
    if (auto rc = require_problem(p); rc != GDTRE_OK) return rc;
    gdtre::PipelineOptions options =
        gdtre::parse_options(parse_options_json(options_json), p->spec);
    gdtre::Json report = gdtre::simulate_pipeline(
        p->spec, sol == nullptr ? nullptr : &sol->sol, options);
    return emit(gdtre::canonical_dump(report), report_out);
  });
}

gdtre_status gdtre_solution_to_json(const gdtre_problem* p,
                                    const gdtre_solution* sol, char** out) {
  return guarded([&]() -> gdtre_status {
    if (auto rc = require_problem(p); rc != GDTRE_OK) return rc;
    if (sol == nullptr) {
      return fail(GDTRE_ERR_INVALID_ARGUMENT, "solution handle is null");
    }
    if (out == nullptr) {
      return fail(GDTRE_ERR_INVALID_ARGUMENT, "output pointer is null");
    }
    return emit(
        gdtre::canonical_dump(gdtre::solution_to_json(p->spec, sol->sol)),
        out);
  });
}

gdtre_status gdtre_solution_from_json(const gdtre_problem* p, const char* json,
                                      gdtre_solution** out) {
  return guarded([&]() -> gdtre_status {
    if (auto rc = require_problem(p); rc != GDTRE_OK) return rc;
    if (json == nullptr) {
      return fail(GDTRE_ERR_INVALID_ARGUMENT, "json string is null");
    }
    if (out == nullptr) {
      return fail(GDTRE_ERR_INVALID_ARGUMENT, "output handle is null");
    }
    *out = nullptr;
    gdtre::Json j = gdtre::Json::parse(json, nullptr, false);
    if (j.is_discarded()) {
      return fail(GDTRE_ERR_PARSE, "solution string is not valid JSON");
    }
    auto* s = new gdtre_solution{gdtre::solution_from_json(p->spec, j)};
    *out = s;
    return GDTRE_OK;
  });
}

void gdtre_solution_free(gdtre_solution* s) { delete s; }

}  // extern "C"
