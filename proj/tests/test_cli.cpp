#include <doctest.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

namespace fs = std::filesystem;

namespace {

const char* cli_path() { return MBBSIM_CLI_BINARY; }

struct CommandResult {
  int exit_status = -1;
  std::string stdout_text;
};

CommandResult run_command(const std::string& args) {
  const std::string out_file =
      (fs::temp_directory_path() / ("mbbsim_cli_out_" + std::to_string(::getpid()) + ".txt"))
          .string();
  const std::string cmd = std::string(cli_path()) + " " + args + " > " + out_file + " 2>/dev/null";
  const int rc = std::system(cmd.c_str());
  CommandResult r;
  r.exit_status = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  std::ifstream in(out_file);
  std::stringstream ss;
  ss << in.rdbuf();
  r.stdout_text = ss.str();
  std::remove(out_file.c_str());
  return r;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("list prints the three built-in scenarios, stably") {
  const CommandResult a = run_command("list");
  CHECK(a.exit_status == 0);
  CHECK(a.stdout_text.find("case-a") != std::string::npos);
  CHECK(a.stdout_text.find("case-b") != std::string::npos);
  CHECK(a.stdout_text.find("case-c") != std::string::npos);
  const CommandResult b = run_command("list");
  CHECK(b.exit_status == 0);
  CHECK(a.stdout_text == b.stdout_text);
}

TEST_CASE("run produces the documented file set and a manifest") {
  const fs::path dir = fresh_dir("mbbsim_cli_run");
  const CommandResult r =
      run_command("run case-a --t-end 0.2 --out " + dir.string() + " --plots");
  CHECK(r.exit_status == 0);
  for (const char* name : {"voltages.csv", "vuf.csv", "btb.csv", "devices.csv", "manifest.json"}) {
    CHECK(fs::exists(dir / name));
  }
  CHECK(fs::exists(dir / "fig_vuf.svg"));
  CHECK(fs::exists(dir / "fig_frequencies.svg"));

  // Golden header on every CSV.
  for (const char* name : {"voltages.csv", "vuf.csv", "btb.csv", "devices.csv"}) {
    std::ifstream in(dir / name);
    std::string header;
    std::getline(in, header);
    CHECK(header == "t,object_id,phase,quantity,value,unit");
  }

  // Manifest echoes the overridden horizon.
  const std::string manifest = read_file(dir / "manifest.json");
  CHECK(manifest.find("\"t_end_s\": 0.2") != std::string::npos);
  CHECK(manifest.find("\"status\": \"ok\"") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("manifest echoes a dt override") {
  const fs::path dir = fresh_dir("mbbsim_cli_dt");
  const CommandResult r =
      run_command("run case-c --t-end 0.1 --dt 0.0005 --out " + dir.string());
  CHECK(r.exit_status == 0);
  const std::string manifest = read_file(dir / "manifest.json");
  CHECK(manifest.find("\"dt_s\": 0.0005") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("missing scenario file exits 2") {
  const CommandResult r = run_command("run missing.json --out /tmp/mbbsim_nowhere");
  CHECK(r.exit_status == 2);
}

TEST_CASE("malformed scenario file exits 2") {
  const fs::path bad = fs::temp_directory_path() / "mbbsim_bad_cli.json";
  {
    std::ofstream out(bad);
    out << "{ nope";
  }
  const CommandResult r = run_command("run " + bad.string() + " --out /tmp/mbbsim_nowhere");
  CHECK(r.exit_status == 2);
  fs::remove(bad);
}

TEST_CASE("unsupported format exits 2") {
  const CommandResult r = run_command("run case-a --format parquet");
  CHECK(r.exit_status == 2);
}

TEST_CASE("reruns produce byte-identical CSVs") {
  const fs::path d1 = fresh_dir("mbbsim_cli_det1");
  const fs::path d2 = fresh_dir("mbbsim_cli_det2");
  CHECK(run_command("run case-b --t-end 0.3 --out " + d1.string()).exit_status == 0);
  CHECK(run_command("run case-b --t-end 0.3 --out " + d2.string()).exit_status == 0);
  for (const char* name : {"voltages.csv", "vuf.csv", "btb.csv", "devices.csv"}) {
    CHECK(read_file(d1 / name) == read_file(d2 / name));
  }
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("report reads a run back and writes the crossing table") {
  const fs::path dir = fresh_dir("mbbsim_cli_report");
  REQUIRE(run_command("run case-a --t-end 0.2 --out " + dir.string()).exit_status == 0);

  SUBCASE("normal limit") {
    const CommandResult r = run_command("report " + dir.string() + " --vuf-limit 2.0");
    CHECK(r.exit_status == 0);
    CHECK(fs::exists(dir / "report.csv"));
  }
  SUBCASE("absurd limit produces an empty report") {
    const CommandResult r = run_command("report " + dir.string() + " --vuf-limit 1000");
    CHECK(r.exit_status == 0);
    CHECK(r.stdout_text.find("no crossings") != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("report on a missing run directory exits 2") {
  const CommandResult r = run_command("report /no/such/run/dir");
  CHECK(r.exit_status == 2);
}
