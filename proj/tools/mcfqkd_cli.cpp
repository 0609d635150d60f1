// Command-line front end: reference table, loss sweep, stability trace,
// fringe visibility, parameter optimization and key rate from a tally.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mcfqkd/mcfqkd.hpp"

namespace {

using namespace mcfqkd;

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string mode;
  std::optional<double> pulses;
  std::string out;
  bool check = false;
};

struct Context {
  ExperimentConfig config;
  std::string hash;
};

Context load_context(const CommonOptions& opts) {
  Context ctx;
  ctx.config = opts.config_path.empty() ? ExperimentConfig{} : load_config(opts.config_path);
  if (opts.seed) {
    ctx.config.seed = *opts.seed;
  } else if (const char* env = std::getenv("HDQKD_SEED")) {
    try {
      ctx.config.seed = std::stoull(env);
    } catch (const std::exception&) {
      throw std::invalid_argument(std::string("HDQKD_SEED is not an unsigned integer: ") + env);
    }
  }
  if (opts.mode == "analytic") ctx.config.mode = RunMode::analytic;
  if (opts.mode == "montecarlo") ctx.config.mode = RunMode::montecarlo;
  if (opts.pulses) {
    if (!(*opts.pulses >= 1.0) || *opts.pulses != std::floor(*opts.pulses))
      throw std::invalid_argument("--pulses must be a positive integer");
    ctx.config.pulses = static_cast<std::int64_t>(*opts.pulses);
  }
  ctx.config.validate();
  ctx.hash = config_hash(ctx.config);
  return ctx;
}

// --out wins; relative paths and the default file name resolve against
// HDQKD_OUT_DIR when it is set. Without either the table goes to stdout.
std::optional<std::filesystem::path> output_path(const CommonOptions& opts,
                                                 const std::string& default_name) {
  const char* dir = std::getenv("HDQKD_OUT_DIR");
  if (!opts.out.empty()) {
    std::filesystem::path p(opts.out);
    if (dir && p.is_relative()) p = std::filesystem::path(dir) / p;
    return p;
  }
  if (dir) return std::filesystem::path(dir) / default_name;
  return std::nullopt;
}

void emit(const CommonOptions& opts, const std::string& default_name, const CsvTable& table) {
  const auto path = output_path(opts, default_name);
  if (!path) {
    table.write(std::cout);
    return;
  }
  if (path->has_parent_path()) std::filesystem::create_directories(path->parent_path());
  std::ofstream out(*path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path->string());
  table.write(out);
  if (!out) throw std::runtime_error("write failed: " + path->string());
}

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config_path, "Experiment config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", opts.seed, "Random seed (overrides HDQKD_SEED and the config)");
  cmd->add_option("--mode", opts.mode, "Pipeline mode")
      ->check(CLI::IsMember({"analytic", "montecarlo"}));
  cmd->add_option("--pulses", opts.pulses, "Monte Carlo pulse budget per operating point");
  cmd->add_option("--out", opts.out, "Output CSV path");
  cmd->add_flag("--check", opts.check, "Exit non-zero when a validity check fails");
}

bool report(bool ok, const std::string& what) {
  if (!ok) std::cerr << "check failed: " << what << "\n";
  return ok;
}

QberOverride override_from(const OperatingPoint& p) {
  QberOverride q;
  for (Basis b : all_bases)
    for (Intensity k : all_intensities)
      q.qber[static_cast<std::size_t>(b)][static_cast<std::size_t>(k)] = p.qber(b, k);
  return q;
}

int cmd_table1(const CommonOptions& opts, const std::vector<double>& losses, bool measured,
               bool pretty) {
  const auto ctx = load_context(opts);
  const auto& cfg = ctx.config;
  const bool mc = cfg.mode == RunMode::montecarlo;

  std::vector<std::string> header{"loss_db",    "mu1",        "mu2",        "p_mu1",
                                  "p_z",        "qber_z_mu1", "qber_z_mu2", "qber_x_mu1",
                                  "qber_x_mu2", "r_sk_bits_per_s", "block_time_s"};
  if (mc)
    for (const char* c : {"qber_z_mu1_sd", "qber_z_mu2_sd", "qber_x_mu1_sd", "qber_x_mu2_sd"})
      header.push_back(c);
  CsvTable table(header);
  CsvTable pretty_table({"loss [dB]", "mu1", "mu2", "p_mu1", "p_Z", "QBER_Zmu1 [%]",
                         "QBER_Zmu2 [%]", "QBER_Xmu1 [%]", "QBER_Xmu2 [%]", "R_sk [kbit/s]"});
  table.add_comment(provenance_comment(ctx.hash, cfg.seed));
  table.add_comment(std::string("mode=") + to_string(cfg.mode) +
                    (measured ? " qber=measured" : " qber=model"));

  bool ok = true;
  std::size_t selected = 0;
  for (std::size_t i = 0; i < reference_points.size(); ++i) {
    const auto& point = reference_points[i];
    if (!losses.empty() &&
        std::none_of(losses.begin(), losses.end(),
                     [&](double l) { return std::abs(l - point.loss_db) < 1e-6; }))
      continue;
    ++selected;
    const LinkConfig link = apply_operating_point(cfg.link, point);

    std::optional<QberOverride> qber;
    std::array<double, 4> q{}, sd{};
    if (measured) {
      qber = override_from(point);
    } else if (mc) {
      const auto session = run_session_pulses(link, cfg.pulses, cfg.seed + i);
      ok &= report(session.tally.consistent(), "tally consistency");
      QberOverride o;
      for (Basis b : all_bases)
        for (Intensity k : all_intensities) {
          const auto& c = session.tally.cell(b, k);
          const double qb = session.tally.qber(b, k);
          o.qber[static_cast<std::size_t>(b)][static_cast<std::size_t>(k)] = qb;
          sd[static_cast<std::size_t>(b) * 2 + static_cast<std::size_t>(k)] =
              c.n_detected > 0 ? std::sqrt(qb * (1.0 - qb) / static_cast<double>(c.n_detected))
                               : 0.0;
        }
      qber = o;
    }
    const auto result = evaluate_key_rate(link, cfg.security, qber);
    const auto rates = expected_rates(link);
    for (Basis b : all_bases)
      for (Intensity k : all_intensities) {
        const auto idx = static_cast<std::size_t>(b) * 2 + static_cast<std::size_t>(k);
        q[idx] = qber ? qber->at(b, k) : rates.cell(b, k).qber;
      }
    std::vector<std::string> row{format_full(point.loss_db), format_full(point.mu1),
                                 format_full(point.mu2),     format_full(point.p_mu1),
                                 format_full(point.p_z)};
    for (double v : q) row.push_back(format_full(v));
    row.push_back(format_full(result.r_sk));
    row.push_back(format_full(result.block_time));
    if (mc)
      for (double v : sd) row.push_back(format_full(v));
    table.add_row(row);

    std::vector<std::string> prow{format_pretty(point.loss_db), format_pretty(point.mu1),
                                  format_pretty(point.mu2),     format_pretty(point.p_mu1),
                                  format_pretty(point.p_z)};
    for (double v : q) prow.push_back(format_pretty(100.0 * v));
    prow.push_back(format_pretty(result.r_sk / 1e3));
    pretty_table.add_row(prow);
  }
  if (selected == 0) throw std::invalid_argument("--loss matches no reference operating point");

  emit(opts, "table1.csv", table);
  if (pretty) pretty_table.write_pretty(std::cerr);
  return opts.check && !ok ? 1 : 0;
}

int cmd_sweep(const CommonOptions& opts, double from, double to, double step) {
  if (!(from >= 0.0 && to <= 40.0)) throw std::invalid_argument("sweep range must lie in [0, 40] dB");
  if (!(to >= from)) throw std::invalid_argument("sweep range is empty");
  if (!(step > 0.0)) throw std::invalid_argument("sweep step must be > 0");
  const auto ctx = load_context(opts);
  CsvTable table({"loss_db", "mu1", "mu2", "p_mu1", "p_z", "qber_z", "qber_x",
                  "r_sk_bits_per_s"});
  table.add_comment(provenance_comment(ctx.hash, ctx.config.seed));

  std::vector<double> rates;
  const auto points = static_cast<int>(std::floor((to - from) / step + 1e-9)) + 1;
  for (int i = 0; i < points; ++i) {
    const double loss = from + i * step;
    LinkConfig link = ctx.config.link;
    link.channel.core_loss_db = loss;
    const auto opt = optimize_params(link, ctx.config.security);
    const auto er = expected_rates(with_source_params(link, opt.params));
    table.add_row({format_full(loss), format_full(opt.params[0]), format_full(opt.params[1]),
                   format_full(opt.params[2]), format_full(opt.params[3]),
                   format_full(er.qber(Basis::Z)), format_full(er.qber(Basis::X)),
                   format_full(opt.key.r_sk)});
    rates.push_back(opt.key.r_sk);
  }
  emit(opts, "sweep.csv", table);

  bool ok = true;
  for (std::size_t i = 1; i < rates.size(); ++i)
    if (rates[i] > 0.0 && !(rates[i] < rates[i - 1])) {
      ok = report(false, "key rate not decreasing at point " + std::to_string(i));
    }
  return opts.check && !ok ? 1 : 0;
}

int cmd_stability(const CommonOptions& opts, std::optional<double> duration, double window,
                  double nu, const std::string& telemetry_path) {
  const auto ctx = load_context(opts);
  StabilityOptions so;
  so.window = window;
  so.nu = nu;
  std::vector<PllTelemetry> telemetry;
  const auto trace = stability_trace(duration.value_or(ctx.config.duration), ctx.config.link,
                                     ctx.config.seed, so,
                                     telemetry_path.empty() ? nullptr : &telemetry);

  CsvTable table({"t_start_s", "qber", "phase_contribution", "switch_contribution",
                  "locked_fraction", "lock_losses"});
  table.add_comment(provenance_comment(ctx.hash, ctx.config.seed));
  table.add_comment("mean_qber=" + format_full(trace.mean_qber) +
                    " mean_phase_contribution=" + format_full(trace.mean_phase_contribution) +
                    " mean_switch_contribution=" + format_full(trace.mean_switch_contribution) +
                    " lock_losses=" + std::to_string(trace.lock_losses) +
                    " disturbances=" + std::to_string(trace.disturbances) +
                    " all_recovered=" + (trace.all_recovered ? "true" : "false"));
  for (const auto& w : trace.windows)
    table.add_row({format_full(w.t_start), format_full(w.qber), format_full(w.phase_contribution),
                   format_full(w.switch_contribution), format_full(w.locked_fraction),
                   std::to_string(w.lock_losses)});
  emit(opts, "stability.csv", table);

  if (!telemetry_path.empty()) {
    CsvTable t({"time_s", "basis", "pair", "residual_rad", "locked", "counts"});
    t.add_comment(provenance_comment(ctx.hash, ctx.config.seed));
    for (const auto& s : telemetry)
      t.add_row({format_full(s.time), to_string(s.basis), std::to_string(s.pair),
                 format_full(s.residual), s.locked ? "1" : "0", std::to_string(s.counts)});
    CommonOptions topts = opts;
    topts.out = telemetry_path;
    emit(topts, "telemetry.csv", t);
  }
  return opts.check && !report(trace.all_recovered, "lock recovery within timeout") ? 1 : 0;
}

int cmd_fringes(const CommonOptions& opts, const std::string& polarization) {
  const auto ctx = load_context(opts);
  std::vector<PolarizationMode> modes;
  if (polarization != "aligned") modes.push_back(PolarizationMode::orthogonal);
  if (polarization != "orthogonal") modes.push_back(PolarizationMode::aligned);

  CsvTable table({"polarization", "time_s", "modulator_on", "counts"});
  table.add_comment(provenance_comment(ctx.hash, ctx.config.seed));
  bool ok = true;
  for (auto mode : modes) {
    const auto trace = simulate_fringes(mode, ctx.config.link.pll, ctx.config.seed);
    table.add_comment(std::string(to_string(mode)) +
                      " visibility_on=" + format_full(trace.visibility_on) +
                      " visibility_off=" + format_full(trace.visibility_off));
    for (const auto& s : trace.samples)
      table.add_row({to_string(mode), format_full(s.time), s.modulator_on ? "1" : "0",
                     std::to_string(s.counts)});
    ok &= report(trace.visibility_off > 0.9, std::string(to_string(mode)) + " idle visibility");
    if (mode == PolarizationMode::orthogonal)
      ok &= report(trace.visibility_on > 0.9, "orthogonal visibility with modulation");
    else
      ok &= report(trace.visibility_on < 0.2, "aligned visibility with modulation");
  }
  emit(opts, "fringes.csv", table);
  return opts.check && !ok ? 1 : 0;
}

int cmd_optimize(const CommonOptions& opts, std::optional<double> loss) {
  const auto ctx = load_context(opts);
  LinkConfig link = ctx.config.link;
  if (loss) link.channel.core_loss_db = *loss;
  const auto opt = optimize_params(link, ctx.config.security);
  CsvTable table({"loss_db", "has_key", "mu1", "mu2", "p_mu1", "p_z", "r_sk_bits_per_s",
                  "block_time_s", "evaluations"});
  table.add_comment(provenance_comment(ctx.hash, ctx.config.seed));
  table.add_row({format_full(link.channel.core_loss_db), opt.has_key ? "1" : "0",
                 format_full(opt.params[0]), format_full(opt.params[1]),
                 format_full(opt.params[2]), format_full(opt.params[3]),
                 format_full(opt.key.r_sk), format_full(opt.key.block_time),
                 std::to_string(opt.evaluations)});
  emit(opts, "optimize.csv", table);
  return opts.check && !report(opt.has_key, "a positive key rate exists") ? 1 : 0;
}

int cmd_keyrate(const CommonOptions& opts, const std::string& tally_path,
                const std::string& format) {
  const auto ctx = load_context(opts);
  std::ifstream in(tally_path);
  if (!in) throw std::invalid_argument("cannot open tally " + tally_path);
  const Tally tally = read_tally_csv(in);
  const auto result = key_rate_from_tally(tally, ctx.config.security, ctx.config.link.source);
  const auto table = key_rate_table(result);

  if (format == "json") {
    nlohmann::ordered_json j;
    j["config_hash"] = ctx.hash;
    j["seed"] = ctx.config.seed;
    for (const auto& row : table.rows()) j[row[0]] = std::stod(row[1]);
    const auto path = output_path(opts, "keyrate.json");
    if (!path) {
      std::cout << j.dump(2) << "\n";
    } else {
      std::ofstream out(*path, std::ios::binary);
      if (!out) throw std::runtime_error("cannot write " + path->string());
      out << j.dump(2) << "\n";
    }
  } else {
    CsvTable t = table;
    t.add_comment(provenance_comment(ctx.hash, ctx.config.seed));
    emit(opts, "keyrate.csv", t);
  }
  return opts.check && !report(!result.bounds.clamped, "decoy bounds needed no clamping") ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulator for four-dimensional QKD over multicore fiber"};
  app.require_subcommand(1);

  CommonOptions table1_opts, sweep_opts, stability_opts, fringes_opts, optimize_opts, keyrate_opts;

  auto* table1 = app.add_subcommand("table1", "Key rate at the six reference operating points");
  add_common(table1, table1_opts);
  std::vector<double> table1_losses;
  bool table1_measured = false, table1_pretty = false;
  table1->add_option("--loss", table1_losses, "Restrict to these losses (dB)");
  table1->add_flag("--measured", table1_measured, "Use the measured QBERs instead of the model");
  table1->add_flag("--pretty", table1_pretty, "Also print an aligned table in kbit/s to stderr");

  auto* sweep = app.add_subcommand("sweep", "Optimized key rate versus channel loss");
  add_common(sweep, sweep_opts);
  double sweep_from = 5.8, sweep_to = 25.8, sweep_step = 4.0;
  sweep->add_option("--from", sweep_from, "First loss (dB)");
  sweep->add_option("--to", sweep_to, "Last loss (dB)");
  sweep->add_option("--step", sweep_step, "Loss step (dB)");

  auto* stability = app.add_subcommand("stability", "QBER trace under phase stabilization");
  add_common(stability, stability_opts);
  std::optional<double> stability_duration;
  double stability_window = 1.0, stability_nu = 0.24;
  std::string stability_telemetry;
  stability->add_option("--duration", stability_duration, "Trace length (s), at least 60");
  stability->add_option("--window", stability_window, "Window width (s)");
  stability->add_option("--nu", stability_nu, "Mean photon number during the trace");
  stability->add_option("--telemetry", stability_telemetry, "Also write controller telemetry CSV");

  auto* fringes = app.add_subcommand("fringes", "Stabilization-channel fringes, modulator on/off");
  add_common(fringes, fringes_opts);
  std::string fringes_pol = "both";
  fringes->add_option("--polarization", fringes_pol, "Reference polarization")
      ->check(CLI::IsMember({"aligned", "orthogonal", "both"}));

  auto* optimize = app.add_subcommand("optimize", "Optimal source parameters at one loss");
  add_common(optimize, optimize_opts);
  std::optional<double> optimize_loss;
  optimize->add_option("--loss", optimize_loss, "Channel loss (dB)");

  auto* keyrate = app.add_subcommand("keyrate", "Key rate from a recorded tally CSV");
  add_common(keyrate, keyrate_opts);
  std::string keyrate_tally, keyrate_format = "csv";
  keyrate->add_option("--tally", keyrate_tally, "Tally CSV")->required()->check(CLI::ExistingFile);
  keyrate->add_option("--format", keyrate_format, "Output format")
      ->check(CLI::IsMember({"csv", "json"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*table1) return cmd_table1(table1_opts, table1_losses, table1_measured, table1_pretty);
    if (*sweep) return cmd_sweep(sweep_opts, sweep_from, sweep_to, sweep_step);
    if (*stability)
      return cmd_stability(stability_opts, stability_duration, stability_window, stability_nu,
                           stability_telemetry);
    if (*fringes) return cmd_fringes(fringes_opts, fringes_pol);
    if (*optimize) return cmd_optimize(optimize_opts, optimize_loss);
    if (*keyrate) return cmd_keyrate(keyrate_opts, keyrate_tally, keyrate_format);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
