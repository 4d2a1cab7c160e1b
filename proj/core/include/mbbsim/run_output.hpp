#pragma once

#include <string>
#include <vector>

#include "mbbsim/metrics.hpp"
#include "mbbsim/simulation.hpp"

namespace mbbsim {

/// Summary of one CLI run, written to manifest.json even on failure.
struct RunManifest {
  std::string scenario_name;
  SimulationConfig config;
  std::vector<std::string> output_files;
  double wall_clock_s = 0.0;
  RunStatistics stats;
  std::string status = "ok";
  std::string diagnostic;
  int exit_status = 0;
};

/// Long-form CSV layout: t,object_id,phase,quantity,value,unit. Values are
/// printed with 17 significant digits so identical runs produce identical
/// bytes.
extern const char* const kCsvHeader;

std::string format_full_precision(double v);

/// Writes voltages.csv, vuf.csv, btb.csv and devices.csv under `out_dir`
/// and appends the written paths to `written`.
void write_run_csvs(const RunResult& result, const NetworkModel& model, const std::string& out_dir,
                    std::vector<std::string>& written);

void write_manifest(const RunManifest& manifest, const std::string& path);
RunManifest read_manifest(const std::string& path);

/// Reads the unbalance samples back from a run directory's vuf.csv.
std::vector<VufSample> read_vuf_csv(const std::string& path);

/// Renders the threshold report as text (one line per crossing).
std::string format_threshold_report(const std::vector<LimitCrossing>& crossings,
                                    double limit_percent);
void write_threshold_report_csv(const std::vector<LimitCrossing>& crossings,
                                const std::string& path);

}  // namespace mbbsim
