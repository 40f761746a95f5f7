#include "mlta/cli.hpp"
#include "mlta/io.hpp"

#include "fixtures.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace mlta;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

Outcome invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "mlta");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Outcome o;
  o.code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  o.out = out.str();
  o.err = err.str();
  return o;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("mlta_test_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& path, const std::string& text) { std::ofstream(path, std::ios::binary) << text; }

}  // namespace

TEST_CASE("fit on the toy matrix") {
  const fs::path dir = scratch_dir("toy");
  write_file(dir / "y.csv", "id,c1,c2\na,1,0\nb,0,1\n");
  const Outcome o = invoke({"fit", "--incidence", (dir / "y.csv").string(), "--G", "1", "--D", "1", "--starts", "2"});
  CHECK(o.code == kExitOk);
  const auto doc = nlohmann::json::parse(o.out);
  CHECK(doc["schema"] == kFitReportSchema);
  CHECK(doc["config"]["G"] == 1);
  CHECK(doc["classification"]["block_probabilities"][0][0].get<double>() == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("unknown flag is a usage error") {
  const Outcome o = invoke({"fit", "--bogus"});
  CHECK(o.code == kExitUsage);
  CHECK(o.err.find("--incidence") != std::string::npos);
}

TEST_CASE("missing mode and bad ranges are usage errors") {
  CHECK(invoke({}).code == kExitUsage);
  CHECK(invoke({"predict"}).code == kExitUsage);
  const fs::path dir = scratch_dir("ranges");
  write_file(dir / "y.csv", "id,c1,c2\na,1,0\nb,0,1\n");
  CHECK(invoke({"select", "--incidence", (dir / "y.csv").string(), "--G-range", "3..1", "--D-range", "1"}).code ==
        kExitUsage);
  CHECK(invoke({"fit", "--incidence", (dir / "y.csv").string(), "--D", "3"}).code == kExitUsage);
}

TEST_CASE("input problems map to the i/o exit code") {
  const fs::path dir = scratch_dir("io");
  write_file(dir / "y.csv", "id,c1,c2\na,2,0\nb,0,1\n");
  const Outcome bad_cell = invoke({"fit", "--incidence", (dir / "y.csv").string()});
  CHECK(bad_cell.code == kExitIo);
  CHECK(bad_cell.err.find("'2'") != std::string::npos);
  CHECK(invoke({"fit", "--incidence", (dir / "absent.csv").string()}).code == kExitIo);
  write_file(dir / "ok.csv", "id,c1,c2\na,1,0\nb,0,1\n");
  CHECK(invoke({"fit", "--incidence", (dir / "ok.csv").string(), "--G", "1", "--out",
                (dir / "no" / "such" / "r.json").string()})
            .code == kExitIo);
}

TEST_CASE("resource limits map to the estimation exit code") {
  const fs::path dir = scratch_dir("resource");
  std::string text = "id";
  for (int k = 0; k < 8; ++k) text += ",c" + std::to_string(k);
  text += "\n";
  for (int i = 0; i < 4; ++i) {
    text += "r" + std::to_string(i);
    for (int k = 0; k < 8; ++k) text += (i + k) % 2 ? ",1" : ",0";
    text += "\n";
  }
  write_file(dir / "y.csv", text);
  CHECK(invoke({"fit", "--incidence", (dir / "y.csv").string(), "--D", "8", "--Q", "20"}).code == kExitEstimation);
}

TEST_CASE("select over a two by two grid") {
  const fs::path dir = scratch_dir("select");
  const SimulatedData sim = generate(fixture::scenario(2, 2, 60, 8, 3), 0);
  save_incidence(sim.y, dir / "y.csv");
  save_covariates(sim.x, sim.y.sending_labels(), dir / "x.csv");
  const Outcome o = invoke({"select", "--incidence", (dir / "y.csv").string(), "--covariates",
                            (dir / "x.csv").string(), "--G-range", "1..2", "--D-range", "1,2", "--starts", "2",
                            "--out", (dir / "grid.json").string()});
  CHECK(o.code == kExitOk);
  std::ifstream in(dir / "grid.json");
  const auto doc = nlohmann::json::parse(in);
  CHECK(doc["schema"] == kSelectionSchema);
  CHECK(doc["rows"].size() == 4);
}

TEST_CASE("config file with flag overrides") {
  const fs::path dir = scratch_dir("config");
  write_file(dir / "y.csv", "id,c1,c2,c3\na,1,0,1\nb,0,1,1\nc,1,1,0\n");
  write_file(dir / "run.json", R"({"mode": "fit", "incidence": "y.csv", "model": {"G": 2, "D": 1, "n_starts": 2}})");
  const Outcome o = invoke({"--config", (dir / "run.json").string(), "--G", "1", "--seed", "17"});
  CHECK(o.code == kExitOk);
  const auto doc = nlohmann::json::parse(o.out);
  CHECK(doc["config"]["G"] == 1);
  CHECK(doc["config"]["seed"] == 17);
  CHECK(doc["config"]["n_starts"] == 2);
}

TEST_CASE("simulate writes data and a deterministic report") {
  const fs::path dir = scratch_dir("simulate");
  const std::vector<std::string> args{"simulate", "--replicates", "2", "--starts", "2", "--seed", "5",
                                      "--data-out", (dir / "data").string()};
  const Outcome a = invoke(args);
  const Outcome b = invoke(args);
  CHECK(a.code == kExitOk);
  CHECK(a.out == b.out);
  CHECK(nlohmann::json::parse(a.out)["replicates"].size() == 2);
  CHECK(load_incidence(dir / "data" / "incidence.csv").n_sending() == 100);
  CHECK(load_covariates(dir / "data" / "covariates.csv").n_covariates() == 2);
}

TEST_CASE("binarize prints the table and logs exclusions") {
  const fs::path dir = scratch_dir("binarize");
  write_file(dir / "raw.csv", "patient,alvarado,wbc\np1,4,7.0\np2,NA,12\np3,2,3.9\n");
  write_file(dir / "rules.json", R"({"rules": [
    {"column": "alvarado", "kind": "greater_than", "threshold": 3},
    {"column": "wbc", "kind": "outside_range", "lower": 4.5, "upper": 11}]})");
  const Outcome o = invoke({"binarize", "--raw", (dir / "raw.csv").string(), "--rules", (dir / "rules.json").string()});
  CHECK(o.code == kExitOk);
  CHECK(o.out == "patient,alvarado,wbc\np1,1,0\np3,0,1\n");
  CHECK(o.err.find("excluded 1") != std::string::npos);
  CHECK(o.err.find("row 1 <- input row 2") != std::string::npos);
}

TEST_CASE("help exits cleanly") {
  const Outcome o = invoke({"--help"});
  CHECK(o.code == kExitOk);
  CHECK(o.out.find("--G-range") != std::string::npos);
}
