#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "stablab/io.hpp"

using namespace stablab;
namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "stability_lab_cli_test";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path write_config(const std::string& name, const Json& config) {
  fs::create_directories(kWork);
  const fs::path p = kWork / name;
  std::ofstream(p) << config.dump(1);
  return p;
}

int run_cli(const std::string& command, const fs::path& config, const fs::path& out, const std::string& extra = "") {
  const std::string cmd = std::string(STABILITY_LAB_BIN) + " " + command + " --config " + config.string() + " --out " +
                          out.string() + " " + extra + " > " + (out.string() + ".stdout") + " 2> " +
                          (out.string() + ".stderr");
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void check_schema(const fs::path& json_file, const std::string& schema) {
  const auto errors = validate_schema(read_json_file(json_file), published_schema(schema));
  for (const auto& e : errors) MESSAGE(json_file.string() << ": " << e);
  CHECK(errors.empty());
}

void check_identical_dirs(const fs::path& a, const fs::path& b) {
  int files = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    ++files;
    const fs::path other = b / entry.path().filename();
    REQUIRE(fs::exists(other));
    CHECK_MESSAGE(slurp(entry.path()) == slurp(other), entry.path().filename().string() << " differs");
  }
  CHECK(files > 0);
}

}  // namespace

TEST_CASE("lyap on the power family is the constant log 2") {
  const auto cfg = write_config("power.json", {{"family", {{"preset", "power"}, {"d", 2}}}, {"lyap", {{"nx", 16}, {"ny", 16}}}});
  const fs::path out = kWork / "power";
  REQUIRE(run_cli("lyap", cfg, out) == 0);
  const Json rep = read_json_file(out / "lyap.json");
  CHECK(rep["value_range"][0].get<double>() == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(rep["value_range"][1].get<double>() == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(rep["total_mass"].get<double>() == 0.0);
  CHECK(rep["meta"]["seed"].is_null());
  check_schema(out / "lyap.json", "lyap");

  std::ifstream pgm(out / "laplacian.pgm", std::ios::binary);
  const auto img = read_pgm16(pgm);
  CHECK(img.nx == 16);
  CHECK(img.ny == 16);
  CHECK(img.pixels.size() == 256);
  for (auto p : img.pixels) CHECK(p == 0);
  REQUIRE(!img.comments.empty());
  CHECK(img.comments[0].rfind("value = ", 0) == 0);
}

TEST_CASE("pgm mapping and orientation") {
  // A 2 x 2 raster: row 0 of the picture is the top (largest imaginary part).
  std::ostringstream os;
  write_pgm16(os, {0.0, 1.0, 2.0, std::nan("")}, 2, 2, 0.0, 2.0, {"test"});
  std::istringstream is(os.str());
  const auto img = read_pgm16(is);
  REQUIRE(img.pixels.size() == 4);
  CHECK(img.pixels[0] == 65535);
  CHECK(img.pixels[1] == 0);
  CHECK(img.pixels[2] == 0);
  CHECK(img.pixels[3] == 32768);
  CHECK(img.comments.back() == "test");
}

TEST_CASE("config validation errors are machine readable") {
  const auto cfg = write_config("bad.json", {{"family", "quadratic"}, {"lyap", {{"nx", 1}, {"estimator", "magic"}}}, {"extra", 1}});
  const fs::path out = kWork / "bad";
  CHECK(run_cli("lyap", cfg, out) == 2);
  const Json err = Json::parse(slurp(out.string() + ".stderr"));
  CHECK(err["error"] == "config");
  CHECK(err["details"].size() == 3);

  const auto unseeded = write_config("unseeded.json", {{"family", "quadratic"}, {"misiu", {{"n_starts", 2}}}});
  CHECK(run_cli("misiu", unseeded, kWork / "unseeded") == 2);
  CHECK(Json::parse(slurp((kWork / "unseeded").string() + ".stderr"))["error"] == "config");

  const auto negative = write_config("negative.json", {{"family", "quadratic"}, {"bif", {{"tau1", -1.0}}}});
  CHECK(run_cli("bif", negative, kWork / "negative") == 2);
}

TEST_CASE("config hash is canonical") {
  const Json inline_family{{"family", to_json(FamilySpec::quadratic())}, {"seed", 3}, {"lyap", {{"nx", 8}, {"ny", 8}}}};
  fs::create_directories(kWork);
  {
    std::ofstream(kWork / "quadratic_family.json") << to_json(FamilySpec::quadratic()).dump();
  }
  const Json by_path{{"lyap", {{"ny", 8}, {"nx", 8}}}, {"seed", 3}, {"family", "quadratic_family.json"}};
  const Json other{{"family", "quadratic"}, {"seed", 4}, {"lyap", {{"nx", 8}, {"ny", 8}}}};
  REQUIRE(run_cli("lyap", write_config("h1.json", inline_family), kWork / "h1") == 0);
  REQUIRE(run_cli("lyap", write_config("h2.json", by_path), kWork / "h2") == 0);
  REQUIRE(run_cli("lyap", write_config("h3.json", other), kWork / "h3") == 0);
  const auto hash = [](const char* dir) { return read_json_file(kWork / dir / "lyap.json")["meta"]["config_hash"]; };
  CHECK(hash("h1") == hash("h2"));
  CHECK(hash("h1") != hash("h3"));
  CHECK(read_json_file(kWork / "h1" / "lyap.json")["meta"]["seed"] == 3);
}

TEST_CASE("outputs are byte identical across reruns and worker counts") {
  const auto cfg = write_config(
      "det.json",
      {{"family", "quadratic"},
       {"seed", 17},
       {"lyap", {{"nx", 12}, {"ny", 12}, {"estimator", "birkhoff"}, {"n_points", 64}, {"n_iter", 20}}},
       {"misiu", {{"q", 3}, {"p", 2}, {"n_starts", 12}, {"raster", {{"nx", 96}, {"ny", 96}}}}},
       {"ram",
        {{"region", {{"disc", {{"center", {-0.1, 0.1}}, {"radius", 0.05}}}}},
         {"n_max", 10},
         {"scan", {{"rect", {{"re", {-1.0, 0.0}}, {"im", {0.0, 1.0}}}}, {"nx", 4}, {"ny", 4}}}}}});
  for (const std::string command : {"lyap", "misiu", "ram"}) {
    const fs::path a = kWork / ("det_" + command + "_a"), b = kWork / ("det_" + command + "_b");
    fs::remove_all(a);
    fs::remove_all(b);
    REQUIRE(run_cli(command, cfg, a, "--threads 1") == 0);
    setenv("STABILITY_LAB_THREADS", "3", 1);
    REQUIRE(run_cli(command, cfg, b) == 0);
    unsetenv("STABILITY_LAB_THREADS");
    check_identical_dirs(a, b);
    check_schema(a / (command + ".json"), command);
  }
  const Json mis = read_json_file(kWork / "det_misiu_a" / "misiu.json");
  CHECK(mis["all_in_bifurcation"] == true);
  bool found_i = false;
  for (const auto& h : mis["hits"])
    found_i = found_i || std::abs(complex_from_json(h["lambda"]) - Complex{0, 1}) < 1e-10;
  CHECK(found_i);
}

TEST_CASE("mass, bif, web and report commands") {
  const auto cfg = write_config(
      "all.json",
      {{"family", "quadratic"},
       {"seed", 5},
       {"mass", {{"region", {{"disc", {{"center", {-2.0, 0.0}}, {"radius", 0.1}}}}}, {"n_max", 12}}},
       {"bif", {{"nx", 64}, {"ny", 64}, {"oracle_iter", 1000}}},
       {"web", {{"n_max", 8}, {"n_lines", 16}}},
       {"report", {{"n", 12}, {"rect", {{"re", {-2.0, 1.0}}, {"im", {-1.5, 1.5}}}}}}});
  REQUIRE(run_cli("mass", cfg, kWork / "mass") == 0);
  const Json mass = read_json_file(kWork / "mass" / "mass.json");
  CHECK(mass["stable"] == false);
  CHECK(mass["masses"].size() == 13);
  check_schema(kWork / "mass" / "mass.json", "mass");

  REQUIRE(run_cli("bif", cfg, kWork / "bif") == 0);
  const Json bif = read_json_file(kWork / "bif" / "bif.json");
  CHECK(bif["bifurcation_cells"].get<int>() > 0);
  CHECK(bif["oracle"]["fraction_near_boundary"].get<double>() >= 0.99);
  check_schema(kWork / "bif" / "bif.json", "bif");

  REQUIRE(run_cli("web", cfg, kWork / "web") == 0);
  const Json web = read_json_file(kWork / "web" / "web.json");
  CHECK(web["levels"].size() == 8);
  for (const auto& L : web["levels"]) CHECK(L["defect"].get<double>() <= L["defect_bound"].get<double>() + 1e-12);
  check_schema(kWork / "web" / "web.json", "web");
  CHECK(fs::file_size(kWork / "web" / "web_atoms.csv") > 0);

  REQUIRE(run_cli("report", cfg, kWork / "report") == 0);
  const Json rep = read_json_file(kWork / "report" / "report.json");
  CHECK(rep["counted"].get<int>() > 0);
  check_schema(kWork / "report" / "report.json", "report");
}
