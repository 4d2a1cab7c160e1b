// Command-line front end: runs built-in or file-based scenarios, writes
// time-series CSV, manifest and optional SVG plots, and reports VUF
// threshold crossings.
//
// Exit status: 0 success, 1 simulation abort, 2 input error.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mbbsim/log.hpp"
#include "mbbsim/run_output.hpp"
#include "mbbsim/scenario.hpp"
#include "mbbsim/simulation.hpp"
#include "svg_plot.hpp"

namespace fs = std::filesystem;
using namespace mbbsim;

namespace {

void print_error_block(const std::string& kind, const std::string& message) {
  std::cerr << "{\"error\":\"" << kind << "\",\"message\":\"";
  for (char c : message) {
    if (c == '"' || c == '\\') std::cerr << '\\';
    if (c == '\n') {
      std::cerr << "\\n";
      continue;
    }
    std::cerr << c;
  }
  std::cerr << "\"}\n";
}

struct RunOptions {
  std::string scenario_ref;
  std::string out_dir = "results";
  double dt = 0.001;
  double t_end = 0.0;  // 0 = scenario horizon
  int decimation = 10;
  double tolerance_va = 1.0;
  int max_iterations = 50;
  std::string format = "csv";
  long seed = 0;  // reserved; simulations are deterministic
  bool plots = false;
  bool all = false;
};

Scenario resolve_scenario(const std::string& ref) {
  if (auto sc = builtin_scenario(ref)) return *sc;
  if (!fs::exists(ref)) {
    throw ParseError("scenario '" + ref + "' is neither a built-in name nor an existing file");
  }
  return load_scenario(ref);
}

void write_plots(const RunResult& result, const NetworkModel& model, const Scenario& scenario,
                 const std::string& out_dir, std::vector<std::string>& written) {
  using plot::Series;

  auto path_of = [&](const std::string& name) { return (fs::path(out_dir) / name).string(); };

  {  // island frequencies
    std::map<std::string, Series> by_island;
    for (const TimeSeriesRecord& rec : result.records) {
      for (const IslandRecord& ir : rec.islands) {
        if (!ir.energized) continue;
        Series& s = by_island["island " + ir.head_bus];
        s.label = "island " + ir.head_bus;
        s.points.push_back({rec.t, ir.frequency_hz});
      }
    }
    std::vector<Series> series;
    for (auto& [k, s] : by_island) series.push_back(std::move(s));
    const std::string p = path_of("fig_frequencies.svg");
    plot::write_svg(p, scenario.name + ": island frequencies", "t (s)", "f (Hz)", series);
    written.push_back(p);
  }
  {  // unbalance factors
    std::map<std::string, Series> by_key;
    for (const TimeSeriesRecord& rec : result.records) {
      for (const auto& [bus, m] : rec.vuf) {
        if (m.degenerate) continue;
        Series& s2 = by_key["vuf2 @" + bus];
        s2.label = "vuf2 @" + bus;
        s2.points.push_back({rec.t, m.vuf2_percent});
        Series& s0 = by_key["vuf0 @" + bus];
        s0.label = "vuf0 @" + bus;
        s0.points.push_back({rec.t, m.vuf0_percent});
      }
    }
    std::vector<Series> series;
    for (auto& [k, s] : by_key) series.push_back(std::move(s));
    const std::string p = path_of("fig_vuf.svg");
    plot::write_svg(p, scenario.name + ": voltage unbalance factors", "t (s)", "VUF (%)", series);
    written.push_back(p);
  }
  {  // BTB power and DC voltage
    std::vector<Series> power, vdc;
    std::map<std::string, Series> pl, pr, vd;
    for (const TimeSeriesRecord& rec : result.records) {
      for (const auto& [id, b] : rec.btb) {
        pl[id].label = id + " local";
        pl[id].points.push_back({rec.t, b.p_local_kw});
        pr[id].label = id + " remote";
        pr[id].points.push_back({rec.t, b.p_remote_kw});
        vd[id].label = id + " vdc";
        vd[id].points.push_back({rec.t, b.vdc_pu});
      }
    }
    for (auto& [k, s] : pl) power.push_back(std::move(s));
    for (auto& [k, s] : pr) power.push_back(std::move(s));
    for (auto& [k, s] : vd) vdc.push_back(std::move(s));
    const std::string p1 = path_of("fig_btb_power.svg");
    plot::write_svg(p1, scenario.name + ": BTB terminal power", "t (s)", "P (kW)", power);
    written.push_back(p1);
    const std::string p2 = path_of("fig_vdc.svg");
    plot::write_svg(p2, scenario.name + ": BTB DC-link voltage", "t (s)", "vdc (pu)", vdc);
    written.push_back(p2);
  }
  {  // device powers
    std::map<std::string, Series> by_dev;
    for (const TimeSeriesRecord& rec : result.records) {
      for (const auto& [id, d] : rec.devices) {
        by_dev[id].label = id;
        by_dev[id].points.push_back({rec.t, d.p_kw});
      }
    }
    std::vector<Series> series;
    for (auto& [k, s] : by_dev) series.push_back(std::move(s));
    const std::string p = path_of("fig_device_power.svg");
    plot::write_svg(p, scenario.name + ": device active power", "t (s)", "P (kW)", series);
    written.push_back(p);
  }
  {  // monitored bus voltages (phase A)
    std::map<std::string, Series> by_bus;
    for (const TimeSeriesRecord& rec : result.records) {
      for (const std::string& bus : scenario.monitored_buses) {
        auto it = rec.bus_voltage_v.find(bus);
        if (it == rec.bus_voltage_v.end()) continue;
        const double pu = std::abs(it->second[0]) / model.bus(bus).nominal_v_ln();
        by_bus[bus].label = "bus " + bus + " (A)";
        by_bus[bus].points.push_back({rec.t, pu});
      }
    }
    std::vector<Series> series;
    for (auto& [k, s] : by_bus) series.push_back(std::move(s));
    const std::string p = path_of("fig_voltages.svg");
    plot::write_svg(p, scenario.name + ": phase A voltage", "t (s)", "|V| (pu)", series);
    written.push_back(p);
  }
}

int run_one(const Scenario& scenario, const RunOptions& opt, const std::string& out_dir) {
  SimulationConfig cfg;
  cfg.dt_s = opt.dt;
  cfg.t_end_s = opt.t_end;
  cfg.record_decimation = opt.decimation;
  cfg.pf_tolerance_va = opt.tolerance_va;
  cfg.pf_max_iterations = opt.max_iterations;
  if (cfg.t_end_s <= 0.0) cfg.t_end_s = scenario.t_end_s;
  cfg.validate();

  fs::create_directories(out_dir);
  const auto t0 = std::chrono::steady_clock::now();
  const NetworkModel model = materialize_model(scenario);
  const RunResult result = run(model, scenario, cfg);
  const double wall_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  RunManifest manifest;
  manifest.scenario_name = scenario.name;
  manifest.config = cfg;
  manifest.wall_clock_s = wall_s;
  manifest.stats = result.stats;
  manifest.status = to_string(result.status);
  manifest.diagnostic = result.diagnostic;
  manifest.exit_status = result.ok() ? 0 : 1;

  write_run_csvs(result, model, out_dir, manifest.output_files);
  if (opt.plots) write_plots(result, model, scenario, out_dir, manifest.output_files);
  const std::string manifest_path = (fs::path(out_dir) / "manifest.json").string();
  write_manifest(manifest, manifest_path);

  if (!result.ok()) {
    print_error_block(to_string(result.status), result.diagnostic);
    return 1;
  }
  std::cout << scenario.name << ": ok, " << result.stats.total_steps << " steps, "
            << result.stats.total_pf_iterations << " solver iterations, " << wall_s
            << " s wall clock -> " << out_dir << "\n";
  return 0;
}

int cmd_run(const RunOptions& opt) {
  if (opt.format != "csv") {
    print_error_block("input", "unsupported output format '" + opt.format + "'");
    return 2;
  }
  try {
    if (opt.all) {
      std::vector<std::future<int>> futures;
      for (const std::string& name : builtin_scenario_names()) {
        const Scenario sc = *builtin_scenario(name);
        const std::string dir = (fs::path(opt.out_dir) / name).string();
        futures.push_back(
            std::async(std::launch::async, [sc, opt, dir]() { return run_one(sc, opt, dir); }));
      }
      int worst = 0;
      for (auto& f : futures) worst = std::max(worst, f.get());
      return worst;
    }
    const Scenario scenario = resolve_scenario(opt.scenario_ref);
    return run_one(scenario, opt, opt.out_dir);
  } catch (const ParseError& e) {
    print_error_block("parse", e.what());
    return 2;
  } catch (const UnknownTargetError& e) {
    print_error_block("unknown_target", e.what());
    return 2;
  } catch (const ValidationError& e) {
    print_error_block("validation", e.what());
    return 2;
  }
}

int cmd_report(const std::string& run_dir, double vuf_limit) {
  try {
    const std::string manifest_path = (fs::path(run_dir) / "manifest.json").string();
    const RunManifest manifest = read_manifest(manifest_path);
    const std::string vuf_path = (fs::path(run_dir) / "vuf.csv").string();
    const std::vector<VufSample> series = read_vuf_csv(vuf_path);
    const auto crossings = threshold_report(series, vuf_limit);

    std::cout << "run: " << manifest.scenario_name << " (" << manifest.status << ")\n";
    std::cout << format_threshold_report(crossings, vuf_limit);
    const std::string report_path = (fs::path(run_dir) / "report.csv").string();
    write_threshold_report_csv(crossings, report_path);
    std::cout << "report written to " << report_path << "\n";
    return 0;
  } catch (const ParseError& e) {
    print_error_block("parse", e.what());
    return 2;
  }
}

int cmd_list() {
  for (const std::string& name : builtin_scenario_names()) {
    std::cout << name << "  -  " << builtin_scenario_summary(name) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Phasor-domain simulator for networked microgrids coupled through a "
               "back-to-back converter"};
  app.require_subcommand(1);

  RunOptions opt;
  CLI::App* run_cmd = app.add_subcommand("run", "Run a scenario and write CSV results");
  run_cmd->add_option("scenario", opt.scenario_ref,
                      "Built-in scenario name (see 'list') or scenario JSON path");
  run_cmd->add_flag("--all", opt.all, "Run all built-in scenarios (in parallel)");
  run_cmd->add_option("--out", opt.out_dir, "Output directory")->capture_default_str();
  run_cmd->add_option("--dt", opt.dt, "Integration step in seconds")->capture_default_str();
  run_cmd->add_option("--t-end", opt.t_end, "Simulation horizon (0 = scenario default)");
  run_cmd->add_option("--decimation", opt.decimation, "Record every Nth step")
      ->capture_default_str();
  run_cmd->add_option("--tolerance", opt.tolerance_va, "Power-flow tolerance in VA")
      ->capture_default_str();
  run_cmd->add_option("--max-iterations", opt.max_iterations, "Power-flow iteration cap")
      ->capture_default_str();
  run_cmd->add_option("--format", opt.format, "Output format (csv)")->capture_default_str();
  run_cmd->add_option("--seed", opt.seed, "Reserved; simulations are deterministic");
  run_cmd->add_flag("--plots", opt.plots, "Also write SVG plots of the headline quantities");

  std::string report_dir;
  double vuf_limit = 2.0;
  CLI::App* report_cmd =
      app.add_subcommand("report", "Report VUF threshold crossings of a finished run");
  report_cmd->add_option("run_dir", report_dir, "Directory written by 'run'")->required();
  report_cmd->add_option("--vuf-limit", vuf_limit, "Limit in percent")->capture_default_str();

  CLI::App* list_cmd = app.add_subcommand("list", "List built-in scenarios");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (run_cmd->parsed()) {
    if (!opt.all && opt.scenario_ref.empty()) {
      print_error_block("input", "missing scenario (name or file), or pass --all");
      return 2;
    }
    return cmd_run(opt);
  }
  if (report_cmd->parsed()) return cmd_report(report_dir, vuf_limit);
  if (list_cmd->parsed()) return cmd_list();
  return 2;
}
