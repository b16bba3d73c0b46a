#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mdmisspec/mdmisspec.hpp"

namespace mdm::cli {

namespace detail {

inline std::vector<double> parse_csv(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      fail(ErrorCode::input, std::string("cannot parse ") + what + " entry '" + item + "'");
    }
  }
  if (out.empty()) fail(ErrorCode::input, std::string(what) + " is empty");
  return out;
}

inline Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::input, "cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline ModelInstance load_model(const std::string& path) { return model_from_json(parse_json(read_file(path))); }

inline void emit(const std::string& text, const std::string& out_path, std::ostream& out) {
  if (out_path.empty()) {
    out << text;
    return;
  }
  std::ofstream file(out_path);
  if (!file) fail(ErrorCode::input, "cannot write '" + out_path + "'");
  file << text;
}

inline Vector v_or_first_axis(const std::string& text, Eigen::Index p) {
  if (text.empty()) return Vector::Unit(p, 0);
  return to_vector(parse_csv(text, "--v"));
}

}  // namespace detail

/// Runs the command line; results go to `out` (or --out files), diagnostics to `err`.
/// Exit codes: 0 success, 1 validation/usage error, 2 numerical error.
inline int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Inference for misspecified linear minimum-distance models", "mdmisspec"};
  app.require_subcommand(1);

  // analyze
  std::string model_path, v_text, d_text, out_path;
  std::optional<double> level;
  auto* analyze = app.add_subcommand("analyze", "pseudo-true value, J, CI and identified sets");
  analyze->add_option("--model", model_path, "ModelInstance JSON")->required();
  analyze->add_option("--v", v_text, "linear combination (csv), default e1");
  analyze->add_option("--level", level, "confidence level 1-beta");
  analyze->add_option("--d", d_text, "norm bounds d (csv)");
  analyze->add_option("--out", out_path, "output file");

  // shared experiment options
  std::string radial_text = "normal";
  double c = 1.0;
  std::uint64_t reps = 0;
  std::uint64_t seed = 42;
  double cov_level = 0.95;
  std::string c_grid_text, eps_text;
  std::size_t grid_points = 2001;

  double theta_sd = 10.0;
  unsigned workers = 1;
  auto* coverage = app.add_subcommand("coverage", "Monte Carlo ex-ante coverage of the CI");
  coverage->add_option("--model", model_path, "ModelInstance JSON supplying (X, W); default k=5, p=2 design");
  coverage->add_option("--radial", radial_text, "normal | t:<dof>");
  coverage->add_option("--c", c, "prior scale c");
  coverage->add_option("--theta-sd", theta_sd, "sd of the Gaussian theta prior");
  coverage->add_option("--level", cov_level, "confidence level");
  coverage->add_option("--v", v_text, "linear combination (csv)");
  coverage->add_option("--reps", reps, "replications (default 20000)");
  coverage->add_option("--seed", seed, "master seed");
  coverage->add_option("--workers", workers, "worker threads");
  coverage->add_option("--out", out_path, "output JSON file");

  bool negative_control = false;
  auto* pivot = app.add_subcommand("pivot", "KS test of the pivotal t statistic against t_{k-p}");
  pivot->add_option("--model", model_path, "ModelInstance JSON supplying (X, W); default k=4, p=1 design");
  pivot->add_option("--radial", radial_text, "normal | t:<dof>");
  pivot->add_option("--c", c, "prior scale c");
  pivot->add_option("--v", v_text, "linear combination (csv)");
  pivot->add_option("--reps", reps, "replications (default 10000)");
  pivot->add_option("--seed", seed, "master seed");
  pivot->add_flag("--negative-control", negative_control, "draw eta from independent Exp(1)-1 coordinates");
  pivot->add_option("--out", out_path, "output JSON file");

  auto* concentration = app.add_subcommand("concentration", "posterior concentration sweep over c");
  concentration->add_option("--model", model_path, "ModelInstance JSON (default canonical fixture)");
  concentration->add_option("--radial", radial_text, "normal | t:<dof> | powerlaw:<alpha>");
  concentration->add_option("--c-grid", c_grid_text, "c values (csv)");
  concentration->add_option("--eps", eps_text, "ball radii (csv)");
  concentration->add_option("--grid-points", grid_points, "points per axis");
  concentration->add_option("--out", out_path, "output CSV file");

  std::string contaminant_text = "normal";
  double contaminant_c = 1.0;
  double phi = 0.01;
  auto* contaminate = app.add_subcommand("contaminate", "contamination sweep over c");
  contaminate->add_option("--model", model_path, "ModelInstance JSON (default canonical fixture)");
  contaminate->add_option("--radial", radial_text, "base family: normal | t:<dof>");
  contaminate->add_option("--contaminant", contaminant_text, "contaminant family");
  contaminate->add_option("--contaminant-c", contaminant_c, "contaminant scale");
  contaminate->add_option("--phi", phi, "contamination weight in (0,1)");
  contaminate->add_option("--c-grid", c_grid_text, "c values (csv)");
  contaminate->add_option("--eps", eps_text, "ball radii (csv)");
  contaminate->add_option("--grid-points", grid_points, "points per axis");
  contaminate->add_option("--out", out_path, "output CSV file");

  Eigen::Index tails_k = 2;
  std::string a_text = "1.5,2,4", tau_text = "1,10";
  auto* tails = app.add_subcommand("tails", "conditional radial tail ratios");
  tails->add_option("--radial", radial_text, "normal | t:<dof>");
  tails->add_option("--k", tails_k, "moment dimension");
  tails->add_option("--a", a_text, "multipliers a > 1 (csv)");
  tails->add_option("--tau", tau_text, "thresholds tau (csv)");
  tails->add_option("--c-grid", c_grid_text, "c values (csv)");
  tails->add_option("--out", out_path, "output CSV file");

  std::string scenario_kind, params_path;
  std::size_t sample_n = 0;
  auto* scenario = app.add_subcommand("scenario", "write a ModelInstance for a running example");
  scenario->add_option("kind", scenario_kind, "iv | logit")->required()->check(CLI::IsMember({"iv", "logit"}));
  scenario->add_option("--params", params_path, "scenario JSON")->required();
  scenario->add_option("--sample", sample_n, "draw a finite IV sample of this size");
  scenario->add_option("--seed", seed, "seed for --sample");
  scenario->add_option("--out", out_path, "output JSON file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n" << app.help();
    return 1;
  }

  try {
    if (*analyze) {
      const ModelInstance model = detail::load_model(model_path);
      const InferenceConfig cfg{detail::v_or_first_axis(v_text, model.p()), level.value_or(0.95)};
      const std::vector<double> d_list = d_text.empty() ? std::vector<double>{} : detail::parse_csv(d_text, "--d");
      // A just-identified model only errors when a CI was explicitly requested.
      const bool with_ci = model.over_identified() || level.has_value();
      const InferenceReport report = make_inference_report(model, cfg, d_list, with_ci);
      detail::emit(report_to_json(report).dump(2) + "\n", out_path, out);
    } else if (*coverage) {
      Matrix x = fixtures::coverage_design();
      Matrix w = Matrix::Identity(x.rows(), x.rows());
      if (!model_path.empty()) {
        const ModelInstance model = detail::load_model(model_path);
        x = model.X();
        w = model.W();
      }
      const InferenceConfig cfg{detail::v_or_first_axis(v_text, x.cols()), cov_level};
      const ScaledPrior eta(RadialFamily::parse(radial_text), c, w);
      const ThetaPrior theta = ThetaPrior::gaussian(Vector::Zero(x.cols()), Vector::Constant(x.cols(), theta_sd));
      const CoverageResult r = run_coverage(x, w, theta, eta, cfg, reps == 0 ? 20000 : reps, seed, workers);
      for (const auto& warning : r.warnings) err << "warning: " << warning << "\n";
      detail::emit(coverage_to_json(r).dump(2) + "\n", out_path, out);
    } else if (*pivot) {
      Matrix x = fixtures::pivot_design();
      Matrix w = Matrix::Identity(x.rows(), x.rows());
      if (!model_path.empty()) {
        const ModelInstance model = detail::load_model(model_path);
        x = model.X();
        w = model.W();
      }
      const InferenceConfig cfg{detail::v_or_first_axis(v_text, x.cols()), 0.95};
      const Vector theta = Vector::Zero(x.cols());
      const std::uint64_t n = reps == 0 ? 10000 : reps;
      const PivotalityResult r =
          negative_control
              ? run_pivotality(x, w, shifted_exponential_draw(x.rows()), theta, cfg, n, seed)
              : run_pivotality(x, w, ScaledPrior(RadialFamily::parse(radial_text), c, w), theta, cfg, n, seed);
      detail::emit(pivotality_to_json(r).dump(2) + "\n", out_path, out);
    } else if (*concentration) {
      const ModelInstance model = model_path.empty() ? fixtures::canonical() : detail::load_model(model_path);
      const auto c_grid = c_grid_text.empty() ? std::vector<double>{1e-6, 1e-4, 1e-2, 1.0}
                                              : detail::parse_csv(c_grid_text, "--c-grid");
      const auto eps = eps_text.empty() ? std::vector<double>{0.1} : detail::parse_csv(eps_text, "--eps");
      const SweepTrace trace = run_concentration(model, RadialFamily::parse(radial_text), c_grid, eps, grid_points);
      std::ostringstream os;
      write_trace_csv(os, trace);
      detail::emit(os.str(), out_path, out);
    } else if (*contaminate) {
      const ModelInstance model = model_path.empty() ? fixtures::canonical() : detail::load_model(model_path);
      const auto c_grid = c_grid_text.empty() ? std::vector<double>{1e-6, 1e-4, 1e-2}
                                              : detail::parse_csv(c_grid_text, "--c-grid");
      const auto eps = eps_text.empty() ? std::vector<double>{0.05} : detail::parse_csv(eps_text, "--eps");
      const ScaledPrior contaminant(RadialFamily::parse(contaminant_text), contaminant_c, model.W());
      const SweepTrace trace =
          run_contamination(model, RadialFamily::parse(radial_text), contaminant, phi, c_grid, eps, grid_points);
      std::ostringstream os;
      write_trace_csv(os, trace);
      detail::emit(os.str(), out_path, out);
    } else if (*tails) {
      const auto c_grid = c_grid_text.empty() ? std::vector<double>{1e-6, 1e-4} : detail::parse_csv(c_grid_text, "--c-grid");
      if (tails_k < 1) fail(ErrorCode::input, "--k must be positive");
      const auto rows = run_tails(RadialFamily::parse(radial_text), tails_k, detail::parse_csv(a_text, "--a"),
                                  detail::parse_csv(tau_text, "--tau"), c_grid);
      std::ostringstream os;
      write_tails_csv(os, rows);
      detail::emit(os.str(), out_path, out);
    } else if (*scenario) {
      const json params = parse_json(detail::read_file(params_path));
      json model_json;
      if (scenario_kind == "iv") {
        const IVScenario s = iv_scenario_from_json(params);
        if (sample_n > 0) {
          model_json = model_to_json(to_model(iv_sample(s, sample_n, iv_dgp_from_json(params), seed)));
        } else {
          model_json = model_to_json(iv_population_model(s));
        }
      } else {
        if (sample_n > 0) fail(ErrorCode::input, "--sample is only available for the iv scenario");
        model_json = model_to_json(logit_population_model(logit_scenario_from_json(params)));
      }
      detail::emit(model_json.dump(2) + "\n", out_path, out);
    }
  } catch (const Error& e) {
    err << json{{"code", std::string(to_string(e.code()))}, {"message", e.what()}}.dump() << "\n";
    return is_numerical(e.code()) ? 2 : 1;
  } catch (const json::exception& e) {
    err << json{{"code", "input"}, {"message", e.what()}}.dump() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace mdm::cli
