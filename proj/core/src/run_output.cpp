#include "mbbsim/run_output.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <utility>

#include <nlohmann/json.hpp>

#include "mbbsim/errors.hpp"

namespace mbbsim {

using nlohmann::json;

const char* const kCsvHeader = "t,object_id,phase,quantity,value,unit";

std::string format_full_precision(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

std::string csv_row(double t, const std::string& object, const std::string& phase,
                    const std::string& quantity, double value, const std::string& unit) {
  std::ostringstream os;
  os << format_full_precision(t) << ',' << object << ',' << phase << ',' << quantity << ','
     << format_full_precision(value) << ',' << unit << '\n';
  return os.str();
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path + "'");
  out << kCsvHeader << '\n';
  return out;
}

}  // namespace

void write_run_csvs(const RunResult& result, const NetworkModel& model, const std::string& out_dir,
                    std::vector<std::string>& written) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  const std::string voltages_path = (fs::path(out_dir) / "voltages.csv").string();
  const std::string vuf_path = (fs::path(out_dir) / "vuf.csv").string();
  const std::string btb_path = (fs::path(out_dir) / "btb.csv").string();
  const std::string devices_path = (fs::path(out_dir) / "devices.csv").string();

  {
    std::ofstream out = open_out(voltages_path);
    for (const TimeSeriesRecord& rec : result.records) {
      for (const auto& [bus_id, v] : rec.bus_voltage_v) {
        const Bus& bus = model.bus(bus_id);
        const auto pu = rms_pu(v, bus.nominal_v_ll);
        for (Phase p : kAllPhases) {
          if (!bus.phases.has(p)) continue;
          out << csv_row(rec.t, bus_id, std::string(1, phase_letter(p)), "voltage",
                         pu[index_of(p)], "pu");
        }
      }
    }
  }
  {
    std::ofstream out = open_out(vuf_path);
    for (const TimeSeriesRecord& rec : result.records) {
      for (const auto& [bus_id, m] : rec.vuf) {
        if (m.degenerate) continue;
        out << csv_row(rec.t, bus_id, "-", "vuf2", m.vuf2_percent, "percent");
        out << csv_row(rec.t, bus_id, "-", "vuf0", m.vuf0_percent, "percent");
      }
    }
  }
  {
    std::ofstream out = open_out(btb_path);
    for (const TimeSeriesRecord& rec : result.records) {
      for (const auto& [id, b] : rec.btb) {
        out << csv_row(rec.t, id, "-", "p_local", b.p_local_kw, "kW");
        out << csv_row(rec.t, id, "-", "p_remote", b.p_remote_kw, "kW");
        out << csv_row(rec.t, id, "-", "vdc", b.vdc_pu, "pu");
        out << csv_row(rec.t, id, "-", "dc_energy_in", b.energy_in_j, "J");
      }
      for (const auto& [branch_id, s] : rec.tie_flow_va) {
        for (Phase p : kAllPhases) {
          const Complex sp = s[index_of(p)];
          if (sp == Complex{0.0, 0.0}) continue;
          out << csv_row(rec.t, branch_id, std::string(1, phase_letter(p)), "tie_p",
                         sp.real() / 1000.0, "kW");
        }
      }
    }
  }
  {
    std::ofstream out = open_out(devices_path);
    for (const TimeSeriesRecord& rec : result.records) {
      for (const auto& [id, d] : rec.devices) {
        out << csv_row(rec.t, id, "-", "p", d.p_kw, "kW");
        out << csv_row(rec.t, id, "-", "q", d.q_kvar, "kVAR");
        if (d.grid_forming) {
          out << csv_row(rec.t, id, "-", "frequency", d.frequency_hz, "Hz");
          out << csv_row(rec.t, id, "-", "energy", d.energy_kwh, "kWh");
        }
      }
      for (const IslandRecord& ir : rec.islands) {
        if (!ir.energized) continue;
        const std::string island_id = "island-" + ir.head_bus;
        out << csv_row(rec.t, island_id, "-", "frequency", ir.frequency_hz, "Hz");
        out << csv_row(rec.t, island_id, "-", "gen_p", ir.gen_p_kw, "kW");
        out << csv_row(rec.t, island_id, "-", "load_p", ir.load_p_kw, "kW");
        out << csv_row(rec.t, island_id, "-", "loss_p", ir.loss_p_kw, "kW");
      }
    }
  }

  written.push_back(voltages_path);
  written.push_back(vuf_path);
  written.push_back(btb_path);
  written.push_back(devices_path);
}

void write_manifest(const RunManifest& manifest, const std::string& path) {
  json j;
  j["scenario"] = manifest.scenario_name;
  j["config"] = {{"dt_s", manifest.config.dt_s},
                 {"t_end_s", manifest.config.t_end_s},
                 {"pf_tolerance_va", manifest.config.pf_tolerance_va},
                 {"pf_max_iterations", manifest.config.pf_max_iterations},
                 {"record_decimation", manifest.config.record_decimation}};
  j["outputs"] = manifest.output_files;
  j["wall_clock_s"] = manifest.wall_clock_s;
  j["convergence"] = {{"total_steps", manifest.stats.total_steps},
                      {"total_pf_iterations", manifest.stats.total_pf_iterations},
                      {"max_step_iterations", manifest.stats.max_step_iterations},
                      {"max_mismatch_va", manifest.stats.max_mismatch_va},
                      {"max_s_over_rating", manifest.stats.max_s_over_rating}};
  j["status"] = manifest.status;
  if (!manifest.diagnostic.empty()) j["diagnostic"] = manifest.diagnostic;
  j["exit_status"] = manifest.exit_status;

  std::ofstream out(path);
  if (!out) throw ParseError("cannot write manifest '" + path + "'");
  out << j.dump(2) << "\n";
}

RunManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open manifest '" + path + "'");
  json j;
  try {
    in >> j;
    RunManifest m;
    m.scenario_name = j.at("scenario").get<std::string>();
    const json& c = j.at("config");
    m.config.dt_s = c.at("dt_s").get<double>();
    m.config.t_end_s = c.at("t_end_s").get<double>();
    m.config.pf_tolerance_va = c.at("pf_tolerance_va").get<double>();
    m.config.pf_max_iterations = c.at("pf_max_iterations").get<int>();
    m.config.record_decimation = c.at("record_decimation").get<int>();
    m.output_files = j.value("outputs", std::vector<std::string>{});
    m.wall_clock_s = j.value("wall_clock_s", 0.0);
    const json& v = j.at("convergence");
    m.stats.total_steps = v.at("total_steps").get<long>();
    m.stats.total_pf_iterations = v.at("total_pf_iterations").get<long>();
    m.stats.max_step_iterations = v.at("max_step_iterations").get<int>();
    m.stats.max_mismatch_va = v.at("max_mismatch_va").get<double>();
    m.stats.max_s_over_rating = v.value("max_s_over_rating", 0.0);
    m.status = j.value("status", "ok");
    m.diagnostic = j.value("diagnostic", "");
    m.exit_status = j.value("exit_status", 0);
    return m;
  } catch (const json::exception& e) {
    throw ParseError(std::string{"manifest: "} + e.what());
  }
}

std::vector<VufSample> read_vuf_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty vuf.csv");
  if (line != kCsvHeader) throw ParseError("unexpected vuf.csv header: " + line);

  // Samples arrive as alternating vuf2/vuf0 rows per (t, bus).
  std::map<std::pair<std::string, std::string>, VufSample> pending;  // (t-string, bus)
  std::vector<VufSample> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string t_str, object, phase, quantity, value_str, unit;
    std::getline(ss, t_str, ',');
    std::getline(ss, object, ',');
    std::getline(ss, phase, ',');
    std::getline(ss, quantity, ',');
    std::getline(ss, value_str, ',');
    std::getline(ss, unit, ',');
    if (quantity != "vuf2" && quantity != "vuf0") continue;
    const auto key = std::make_pair(t_str, object);
    auto it = pending.find(key);
    if (it == pending.end()) {
      VufSample s;
      s.t = std::stod(t_str);
      s.bus = object;
      it = pending.emplace(key, s).first;
    }
    if (quantity == "vuf2") {
      it->second.vuf2_percent = std::stod(value_str);
    } else {
      it->second.vuf0_percent = std::stod(value_str);
    }
  }
  out.reserve(pending.size());
  for (auto& [key, s] : pending) out.push_back(s);
  std::sort(out.begin(), out.end(), [](const VufSample& a, const VufSample& b) {
    if (a.t != b.t) return a.t < b.t;
    return a.bus < b.bus;
  });
  return out;
}

std::string format_threshold_report(const std::vector<LimitCrossing>& crossings,
                                    double limit_percent) {
  std::ostringstream os;
  os << "VUF threshold report (limit " << limit_percent << " %)\n";
  if (crossings.empty()) {
    os << "  no crossings\n";
    return os.str();
  }
  for (const LimitCrossing& c : crossings) {
    os << "  bus " << c.bus << "  " << c.metric << "  t=[" << c.t_begin << ", " << c.t_end
       << "] s  peak " << c.peak_percent << " %\n";
  }
  return os.str();
}

void write_threshold_report_csv(const std::vector<LimitCrossing>& crossings,
                                const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path + "'");
  out << "bus,metric,t_begin,t_end,peak_percent\n";
  for (const LimitCrossing& c : crossings) {
    out << c.bus << ',' << c.metric << ',' << format_full_precision(c.t_begin) << ','
        << format_full_precision(c.t_end) << ',' << format_full_precision(c.peak_percent)
        << '\n';
  }
}

}  // namespace mbbsim
