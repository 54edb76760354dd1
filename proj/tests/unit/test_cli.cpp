#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "swingcert/cli.hpp"
#include "swingcert/io.hpp"

using namespace swingcert;
using Catch::Approx;

namespace fs = std::filesystem;

namespace {

const fs::path kData = SWINGCERT_DATA_DIR;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "swingcert");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("swingcert_cli_" + name);
  fs::remove_all(d);
  return d;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> v;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) v.push_back(l);
  return v;
}

std::vector<double> fields(const std::string& line) {
  std::vector<double> v;
  std::istringstream in(line);
  for (std::string f; std::getline(in, f, ',');) v.push_back(std::stod(f));
  return v;
}

bool single_error_line(const std::string& err, const std::string& kind) {
  return err.rfind("swingcert: error[" + kind + "]: ", 0) == 0 && err.find('\n') == err.size() - 1;
}

}  // namespace

TEST_CASE("null fault holds the trajectory at the SEP") {
  const auto dir = scratch("null");
  const auto r = run({"simulate", (kData / "null_fault.json").string(), "--out", dir.string()});
  REQUIRE(r.code == cli::kExitOk);
  CHECK(r.out.rfind("verdict stable resynchronised", 0) == 0);
  const auto rows = lines_of(io::read_text(dir / "trajectory.csv"));
  REQUIRE(rows.size() > 100);
  const auto first = fields(rows[1]);
  for (std::size_t i = 2; i < rows.size(); i += 97) {
    const auto row = fields(rows[i]);
    for (std::size_t c = 1; c < row.size(); ++c) CHECK(row[c] == Approx(first[c]).margin(1e-8));
  }
  CHECK(fs::exists(dir / "events.csv"));
  CHECK(fs::exists(dir / "certificate.csv"));
  CHECK(io::read_text(dir / "verdict.json").find("\"status\": \"stable\"") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("repeated runs are byte-identical") {
  const auto a = scratch("repeat_a");
  const auto b = scratch("repeat_b");
  const auto input = (kData / "hub3_line.json").string();
  REQUIRE(run({"simulate", input, "--out", a.string(), "--step", "1e-3"}).code == 0);
  REQUIRE(run({"simulate", input, "--out", b.string(), "--step", "1e-3"}).code == 0);
  for (const char* f : {"trajectory.csv", "events.csv", "certificate.csv", "verdict.json"}) {
    CHECK(io::read_text(a / f) == io::read_text(b / f));
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("expect-stable exit codes") {
  const auto dir = scratch("expect");
  fs::create_directories(dir);
  const auto late = dir / "late.json";
  io::write_atomic(late, "{\"network\": \"" + (kData / "smib.json").generic_string() +
                             "\", \"fault\": {\"type\": \"bus\", \"bus\": \"G\"},"
                             " \"t_fault\": 0, \"t_clear\": 2.4, \"horizon\": 25}");
  const auto unstable = run({"simulate", late.string(), "--out", dir.string(), "--step", "1e-3", "--expect-stable"});
  CHECK(unstable.code == cli::kExitUnstable);
  CHECK(unstable.out.rfind("verdict unstable pole_slip", 0) == 0);
  CHECK(run({"simulate", late.string(), "--out", dir.string(), "--step", "1e-3"}).code == cli::kExitOk);
  const auto ok = run({"simulate", (kData / "smib_bolted.json").string(), "--out", dir.string(), "--step", "1e-3",
                       "--expect-stable"});
  CHECK(ok.code == cli::kExitOk);
  fs::remove_all(dir);
}

TEST_CASE("errors are one prefixed line") {
  SECTION("unknown command") {
    const auto r = run({"frobnicate"});
    CHECK(r.code == cli::kExitError);
    CHECK(single_error_line(r.err, "usage"));
  }
  SECTION("bad mode") {
    const auto r = run({"simulate", (kData / "null_fault.json").string(), "--mode", "sideways"});
    CHECK(r.code == cli::kExitError);
    CHECK(single_error_line(r.err, "usage"));
  }
  SECTION("schema failure") {
    const auto dir = scratch("schema");
    fs::create_directories(dir);
    io::write_atomic(dir / "net.json", R"({"machines": [{"id": "a", "p_ref": 0, "inertia": 1}], "k_matrix": [[0]]})");
    const auto r = run({"equilibria", (dir / "net.json").string(), "--out", dir.string()});
    CHECK(r.code == cli::kExitError);
    CHECK(single_error_line(r.err, "schema"));
    fs::remove_all(dir);
  }
  SECTION("sweep without cases") {
    const auto r = run({"sweep", (kData / "null_fault.json").string(), "--out", scratch("nosweep").string()});
    CHECK(r.code == cli::kExitError);
    CHECK(single_error_line(r.err, "validation"));
  }
}

TEST_CASE("equal-area command") {
  const auto dir = scratch("eac");
  const auto r = run({"eac", "--out", dir.string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("delta_cr 1.3886") == 0);
  CHECK(io::read_text(dir / "eac.csv").find("delta_cr,1.3886") != std::string::npos);
  CHECK(run({"eac", "--k-fault", "3"}).code == cli::kExitError);
  fs::remove_all(dir);
}

TEST_CASE("equilibria command") {
  const auto dir = scratch("eq");
  const auto r = run({"equilibria", (kData / "ring3.json").string(), "--out", dir.string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind("SEP max_coupled_angle", 0) == 0);
  CHECK(io::read_text(dir / "equilibria.json").find("theta_star") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("certify in the inertia-free limit") {
  const auto dir = scratch("certify");
  const auto r = run({"certify", (kData / "two_area_local.json").string(), "--mode", "reduced", "--out",
                      dir.string(), "--horizon", "4"});
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind("certificate in_box 1 h_non_increasing 1", 0) == 0);
  fs::remove_all(dir);
}

TEST_CASE("sweep verdict pattern") {
  const auto dir = scratch("sweep");
  const auto r = run({"sweep", (kData / "two_area_local.json").string(), "--out", dir.string(), "--step", "1e-4"});
  REQUIRE(r.code == 0);
  const auto rows = lines_of(io::read_text(dir / "sweep.csv"));
  REQUIRE(rows.size() == 4);
  CHECK(rows[0] == "tau,status,reason,max_excursion,ratio,separated");
  CHECK(rows[1].find(",stable,") != std::string::npos);
  CHECK(rows[2].find(",stable,") != std::string::npos);
  CHECK(rows[3].find(",unstable,") != std::string::npos);
  CHECK(rows[1].substr(rows[1].size() - 2) == ",1");
  CHECK(rows[3].substr(rows[3].size() - 2) == ",0");
  fs::remove_all(dir);
}
