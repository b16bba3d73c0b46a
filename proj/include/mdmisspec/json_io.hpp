#pragma once

#include <json.hpp>

#include <string>
#include <vector>

#include "mdmisspec/core_model.hpp"
#include "mdmisspec/error.hpp"
#include "mdmisspec/harness.hpp"
#include "mdmisspec/inference.hpp"
#include "mdmisspec/scenarios.hpp"

namespace mdm {

using nlohmann::json;

namespace detail {

inline const json& require_field(const json& j, const char* name) {
  if (!j.is_object()) fail(ErrorCode::input, "expected a JSON object");
  const auto it = j.find(name);
  if (it == j.end()) fail(ErrorCode::input, std::string("missing field \"") + name + "\"");
  return *it;
}

inline double number_of(const json& j, const std::string& where) {
  if (!j.is_number()) fail(ErrorCode::input, where + " must be a number");
  return j.get<double>();
}

inline Vector vector_of(const json& j, const std::string& where) {
  if (!j.is_array()) fail(ErrorCode::input, where + " must be an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    v(static_cast<Eigen::Index>(i)) = number_of(j[i], where + "[" + std::to_string(i) + "]");
  }
  return v;
}

inline Matrix matrix_of(const json& j, Eigen::Index rows, Eigen::Index cols, const std::string& where) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) {
    fail(ErrorCode::input, where + " must be an array of " + std::to_string(rows) + " rows");
  }
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      fail(ErrorCode::input, where + " row " + std::to_string(r) + " must have " +
                                 std::to_string(cols) + " entries");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(r, c) = number_of(row[static_cast<std::size_t>(c)], where);
    }
  }
  return m;
}

inline Eigen::Index positive_int(const json& j, const char* name) {
  const json& f = require_field(j, name);
  if (!f.is_number_integer() || f.get<long long>() <= 0) {
    fail(ErrorCode::input, std::string("field \"") + name + "\" must be a positive integer");
  }
  return static_cast<Eigen::Index>(f.get<long long>());
}

inline json to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline json to_json(const Matrix& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

inline json to_json(const Interval& iv) {
  if (iv.empty) return json{{"lower", nullptr}, {"upper", nullptr}, {"empty", true}, {"singleton", false}};
  return json{{"lower", iv.lower}, {"upper", iv.upper}, {"empty", false}, {"singleton", iv.singleton}};
}

}  // namespace detail

/// {"k","p","Y","X","W"}; dimensions and model invariants are validated.
inline ModelInstance model_from_json(const json& j) {
  const Eigen::Index k = detail::positive_int(j, "k");
  const Eigen::Index p = detail::positive_int(j, "p");
  const Vector y = detail::vector_of(detail::require_field(j, "Y"), "Y");
  if (y.size() != k) fail(ErrorCode::input, "Y must have k = " + std::to_string(k) + " entries");
  const Matrix x = detail::matrix_of(detail::require_field(j, "X"), k, p, "X");
  const Matrix w = detail::matrix_of(detail::require_field(j, "W"), k, k, "W");
  if (k < p) fail(ErrorCode::model_validation, "k >= p is required");
  return ModelInstance(y, x, w);
}

inline json model_to_json(const ModelInstance& model) {
  return json{{"k", model.k()},
              {"p", model.p()},
              {"Y", detail::to_json(model.Y())},
              {"X", detail::to_json(model.X())},
              {"W", detail::to_json(model.W())}};
}

inline json report_to_json(const InferenceReport& report) {
  json sets = json::array();
  for (const auto& entry : report.identified_sets) {
    json e = detail::to_json(entry.interval);
    e["d"] = entry.d;
    sets.push_back(std::move(e));
  }
  json out{{"theta_w", detail::to_json(report.theta_w)},
           {"j_stat", report.j_stat},
           {"sigma_v", report.sigma_v},
           {"identified_sets", std::move(sets)}};
  if (report.ci) {
    out["ci"] = json{{"lower", report.ci->lower}, {"upper", report.ci->upper}};
  } else {
    out["ci"] = nullptr;
  }
  return out;
}

inline json coverage_to_json(const CoverageResult& r) {
  return json{{"reps", r.reps},
              {"hits", r.hits},
              {"coverage", r.coverage},
              {"std_err", r.std_err},
              {"seed", r.seed},
              {"config", json{{"level", r.level}, {"radial", r.radial}, {"c", r.c}}},
              {"warnings", r.warnings}};
}

inline json pivotality_to_json(const PivotalityResult& r) {
  return json{{"ks", r.ks}, {"threshold", r.threshold}, {"reps", r.reps},
              {"seed", r.seed}, {"dof", r.dof}, {"passes", r.passes()}};
}

/// {"k","theta_ate","beta_vec","first_stage","z_cov", optional "dgp":{...}}
inline IVScenario iv_scenario_from_json(const json& j) {
  IVScenario s;
  s.k = detail::positive_int(j, "k");
  s.theta_ate = detail::number_of(detail::require_field(j, "theta_ate"), "theta_ate");
  s.beta_vec = detail::vector_of(detail::require_field(j, "beta_vec"), "beta_vec");
  s.first_stage = detail::vector_of(detail::require_field(j, "first_stage"), "first_stage");
  s.z_cov = detail::matrix_of(detail::require_field(j, "z_cov"), s.k, s.k, "z_cov");
  s.validate();
  return s;
}

inline IVDgpParams iv_dgp_from_json(const json& j) {
  IVDgpParams dgp;
  if (!j.is_object() || !j.contains("dgp")) return dgp;
  const json& d = j.at("dgp");
  if (d.contains("c0")) dgp.c0 = detail::number_of(d.at("c0"), "dgp.c0");
  if (d.contains("c")) dgp.c = detail::vector_of(d.at("c"), "dgp.c");
  if (d.contains("delta")) dgp.delta = detail::number_of(d.at("delta"), "dgp.delta");
  if (d.contains("theta_bar")) dgp.theta_bar = detail::number_of(d.at("theta_bar"), "dgp.theta_bar");
  if (d.contains("instrument_law")) {
    const std::string law = d.at("instrument_law").get<std::string>();
    if (law == "gaussian") {
      dgp.instrument_law = InstrumentLaw::gaussian;
    } else if (law == "centered_exponential") {
      dgp.instrument_law = InstrumentLaw::centered_exponential;
    } else {
      fail(ErrorCode::input, "dgp.instrument_law must be gaussian or centered_exponential");
    }
  }
  return dgp;
}

/// {"support","probs","cond_means","x_star":[x1,x2]}
inline LogitScenario logit_scenario_from_json(const json& j) {
  LogitScenario s;
  s.support = detail::vector_of(detail::require_field(j, "support"), "support");
  s.probs = detail::vector_of(detail::require_field(j, "probs"), "probs");
  s.cond_means = detail::vector_of(detail::require_field(j, "cond_means"), "cond_means");
  const Vector xs = detail::vector_of(detail::require_field(j, "x_star"), "x_star");
  if (xs.size() != 2) fail(ErrorCode::input, "x_star must have two entries");
  s.x_star = {xs(0), xs(1)};
  s.validate();
  return s;
}

/// Wraps nlohmann parse and type errors as input errors.
inline json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::input, std::string("invalid JSON: ") + e.what());
  }
}

}  // namespace mdm
