#include "swingcert/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <optional>
#include <ostream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "swingcert/eac.hpp"
#include "swingcert/error.hpp"
#include "swingcert/io.hpp"
#include "swingcert/log.hpp"

namespace swingcert::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

struct Common {
  std::string input;
  std::string mode;
  std::optional<double> step;
  std::optional<double> horizon;
  bool expect_stable = false;
  std::string out_dir = ".";
};

struct EacArgs {
  eac::SmibCase smib;
  int points = 361;
};

struct CctArgs {
  std::optional<double> t_lo;
  std::optional<double> t_hi;
  std::optional<double> tol;
};

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  std::replace(s.begin(), s.end(), '\r', ' ');
  return s;
}

fs::path output_dir(const Common& c) {
  const fs::path dir(c.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw Error(ErrorKind::Io, fmt::format("output directory '{}' is not usable", c.out_dir));
  }
  return dir;
}

void emit(const fs::path& dir, const char* name, const std::string& content) {
  io::write_atomic(dir / name, content);
  logger()->info("wrote {}", (dir / name).string());
}

// Scenario plus command-line overrides.
struct Prepared {
  io::ScenarioDocument doc;
  NetworkModel model;
  Mode mode;
  ScenarioConfig config;
};

Prepared prepare(const Common& c) {
  auto doc = io::read_scenario(c.input);
  NetworkModel model = io::scenario_model(doc);
  Mode mode = doc.mode;
  if (c.mode == "full") mode = Mode::Full;
  if (c.mode == "reduced") mode = Mode::Reduced;
  if (c.horizon) {
    doc.scenario.horizon = *c.horizon;
    doc.scenario.validate(model.size());
  }
  ScenarioConfig config;
  config.integrator.step = c.step ? c.step : doc.step;
  return {std::move(doc), std::move(model), mode, config};
}

std::string num(double x) { return format_number(x); }

int cmd_simulate(const Common& c, std::ostream& out) {
  auto p = prepare(c);
  const auto dir = output_dir(c);
  const auto res = run_scenario(p.model, p.doc.scenario, p.mode, p.config);
  std::optional<TimescaleReport> ts;
  if (res.post_eq && !res.trajectory.empty()) {
    ts = timescale_ratio(p.model, res.trajectory, p.doc.scenario.post_k);
  }
  emit(dir, "trajectory.csv", io::trajectory_csv(res.trajectory));
  emit(dir, "events.csv", io::events_csv(res.trajectory));
  emit(dir, "certificate.csv", io::certificate_csv(res.certificate));
  emit(dir, "verdict.json", io::verdict_report(res.verdict, ts));
  out << fmt::format("verdict {} {} max_excursion {}\n", to_string(res.verdict.status),
                     to_string(res.verdict.reason), num(res.verdict.max_pairwise_excursion));
  if (c.expect_stable && res.verdict.status == VerdictStatus::Unstable) return kExitUnstable;
  return kExitOk;
}

int cmd_equilibria(const Common& c, std::ostream& out) {
  const auto doc = io::read_network(c.input);
  const auto dir = output_dir(c);
  const auto& model = doc.model;
  const auto sep = solve_equilibrium(model, model.k(), Vector::Zero(static_cast<Eigen::Index>(model.size())));
  const auto ueps = boundary_ueps(model, sep);
  emit(dir, "equilibria.json", io::equilibria_report(model, sep, ueps));
  out << fmt::format("{} max_coupled_angle {} boundary_ueps {}\n", to_string(sep.classification),
                     num(max_coupled_angle(sep.theta_star, sep.k)), ueps.size());
  return kExitOk;
}

int cmd_certify(const Common& c, std::ostream& out) {
  auto p = prepare(c);
  const auto dir = output_dir(c);
  const auto res = run_scenario(p.model, p.doc.scenario, p.mode, p.config);
  json j;
  j["status"] = to_string(res.verdict.status);
  j["reason"] = to_string(res.verdict.reason);
  bool descent = true;
  double max_rate = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < res.certificate.size(); ++i) {
    max_rate = std::max(max_rate, res.certificate[i].h_rate);
    if (i > 0 && res.certificate[i].h_value > res.certificate[i - 1].h_value + 1e-9) descent = false;
  }
  bool in_box = false;
  double margin = 0.0;
  if (!res.certificate.empty()) {
    in_box = res.certificate.front().in_box;
    margin = res.certificate.front().min_margin;
  }
  j["clearing_state_in_box"] = in_box;
  j["clearing_margin"] = std::stod(num(margin));
  j["h_non_increasing"] = descent;
  j["max_h_rate"] = res.certificate.empty() ? json(nullptr) : json(std::stod(num(max_rate)));
  if (res.post_eq && !res.trajectory.empty()) {
    const auto ts = timescale_ratio(p.model, res.trajectory, p.doc.scenario.post_k);
    j["timescale"] = {{"tau_max", std::stod(num(ts.tau_max))},
                      {"lambda", std::stod(num(ts.lambda))},
                      {"ratio", std::stod(num(ts.ratio))},
                      {"separated", ts.separated}};
  }
  emit(dir, "certificate.csv", io::certificate_csv(res.certificate));
  emit(dir, "certificate.json", j.dump(2) + "\n");
  out << fmt::format("certificate in_box {} h_non_increasing {} verdict {}\n", in_box ? 1 : 0,
                     descent ? 1 : 0, to_string(res.verdict.status));
  if (c.expect_stable && res.verdict.status == VerdictStatus::Unstable) return kExitUnstable;
  return kExitOk;
}

int cmd_eac(const Common& c, const EacArgs& a, std::ostream& out) {
  a.smib.validate();
  const auto dir = output_dir(c);
  const auto cr = eac::critical_clearing_angle(a.smib);
  emit(dir, "eac.csv", eac::dataset_csv(a.smib, a.points));
  out << fmt::format("delta_cr {} delta_0 {} delta_max {} extended_boundary {} status {}\n",
                     num(cr.angle), num(cr.delta_0), num(cr.delta_max),
                     num(eac::extended_boundary(a.smib.p_ref, a.smib.k_post)),
                     eac::to_string(cr.status));
  return kExitOk;
}

int cmd_cct(const Common& c, const CctArgs& a, std::ostream& out) {
  auto p = prepare(c);
  const auto dir = output_dir(c);
  const double t_lo = a.t_lo ? *a.t_lo : p.doc.cct_lo.value_or(p.doc.scenario.t_fault + 1e-3);
  const double t_hi = a.t_hi ? *a.t_hi : p.doc.cct_hi.value_or(p.doc.scenario.horizon * 0.5);
  const double tol = a.tol.value_or(p.doc.cct_tol);
  p.config.certificate = false;
  const auto r = cct_search(p.model, p.doc.scenario, p.mode, t_lo, t_hi, tol, p.config);
  json j;
  j["cct"] = std::stod(num(r.cct));
  j["fault_duration"] = std::stod(num(r.cct - p.doc.scenario.t_fault));
  j["iterations"] = r.iterations;
  j["tol"] = std::stod(num(tol));
  j["at_lo"] = to_string(r.at_lo.status);
  j["at_hi"] = to_string(r.at_hi.status);
  emit(dir, "cct.json", j.dump(2) + "\n");
  out << fmt::format("cct {} iterations {}\n", num(r.cct), r.iterations);
  // The scenario's own clearing time is unsafe once it exceeds the bracket.
  if (c.expect_stable && p.doc.scenario.t_clear > r.cct + tol) return kExitUnstable;
  return kExitOk;
}

int cmd_sweep(const Common& c, bool serial, std::ostream& out) {
  auto p = prepare(c);
  if (p.doc.sweep.empty()) throw Error(ErrorKind::Validation, "scenario has no 'sweep' cases");
  const auto dir = output_dir(c);
  p.config.certificate = false;
  const auto rows = tau_sweep(p.doc.network.model, p.doc.scenario, std::span<const SweepCase>(p.doc.sweep),
                              p.doc.keep_droop, p.config, !serial);
  for (const auto& r : rows) {
    if (!r.error.empty()) logger()->warn("tau {}: {}", num(r.params.tau), one_line(r.error));
  }
  emit(dir, "sweep.csv", io::sweep_csv(rows));
  for (const auto& r : rows) {
    out << fmt::format("tau {} {}\n", num(r.params.tau),
                       r.verdict ? to_string(r.verdict->status) : "error");
  }
  return kExitOk;
}

void add_common(CLI::App* sub, Common& c, bool input, bool scenario_flags) {
  if (input) sub->add_option("input", c.input, "input file")->required()->check(CLI::ExistingFile);
  sub->add_option("--out", c.out_dir, "output directory");
  if (!scenario_flags) return;
  sub->add_option("--mode", c.mode, "full or reduced")->check(CLI::IsMember({"full", "reduced"}));
  sub->add_option("--step", c.step, "fixed step, s")->check(CLI::PositiveNumber);
  sub->add_option("--horizon", c.horizon, "end time, s")->check(CLI::PositiveNumber);
  sub->add_flag("--expect-stable", c.expect_stable, "exit 2 on an unstable verdict");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Transient angle stability of swing-equation networks", "swingcert"};
  app.require_subcommand(1);

  Common common;
  EacArgs eac_args;
  CctArgs cct_args;
  bool serial = false;

  auto* simulate = app.add_subcommand("simulate", "run a fault scenario");
  add_common(simulate, common, true, true);
  auto* equilibria = app.add_subcommand("equilibria", "SEP and boundary UEPs of a network");
  add_common(equilibria, common, true, false);
  auto* certify = app.add_subcommand("certify", "Lyapunov certificate along a scenario");
  add_common(certify, common, true, true);
  auto* eac_cmd = app.add_subcommand("eac", "equal-area baseline for a single machine");
  add_common(eac_cmd, common, false, false);
  eac_cmd->add_option("--p-ref", eac_args.smib.p_ref);
  eac_cmd->add_option("--k-pre", eac_args.smib.k_pre);
  eac_cmd->add_option("--k-fault", eac_args.smib.k_fault);
  eac_cmd->add_option("--k-post", eac_args.smib.k_post);
  eac_cmd->add_option("--points", eac_args.points)->check(CLI::Range(2, 100000));
  auto* cct = app.add_subcommand("cct", "critical clearing time by bisection");
  add_common(cct, common, true, true);
  cct->add_option("--t-lo", cct_args.t_lo, "secure clearing time, s");
  cct->add_option("--t-hi", cct_args.t_hi, "insecure clearing time, s");
  cct->add_option("--tol", cct_args.tol, "bracket width, s")->check(CLI::PositiveNumber);
  auto* sweep = app.add_subcommand("sweep", "uniform time-constant sweep");
  add_common(sweep, common, true, true);
  sweep->add_flag("--serial", serial, "run rows one at a time");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << fmt::format("swingcert: error[usage]: {}\n", one_line(e.what()));
    return kExitError;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(common, out);
    if (equilibria->parsed()) return cmd_equilibria(common, out);
    if (certify->parsed()) return cmd_certify(common, out);
    if (eac_cmd->parsed()) return cmd_eac(common, eac_args, out);
    if (cct->parsed()) return cmd_cct(common, cct_args, out);
    if (sweep->parsed()) return cmd_sweep(common, serial, out);
  } catch (const Error& e) {
    err << fmt::format("swingcert: error[{}]: {}\n", to_string(e.kind()), one_line(e.what()));
    return kExitError;
  } catch (const std::exception& e) {
    err << fmt::format("swingcert: error[internal]: {}\n", one_line(e.what()));
    return kExitError;
  }
  err << "swingcert: error[usage]: no command\n";
  return kExitError;
}

}  // namespace swingcert::cli
