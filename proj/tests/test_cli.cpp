#include <doctest.h>
#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

struct Workdir {
  fs::path dir;
  Workdir() {
    dir = fs::temp_directory_path() / "aorecon_cli_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Workdir() { fs::remove_all(dir); }
  std::string operator/(const std::string& name) const { return (dir / name).string(); }
};

int run(const std::string& args, const std::string& stdout_path = "/dev/null") {
  const std::string cmd = std::string(AORECON_CLI) + " " + args + " >" + stdout_path + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("version and usage errors") {
  Workdir w;
  CHECK(run("--version", w / "v.txt") == 0);
  CHECK(slurp(w / "v.txt").find("schema 1") != std::string::npos);
  CHECK(run("no-such-command") == 2);
  CHECK(run("forward --flux " + w / "f.aorf") == 2);
  CHECK(run("phantom gen --preset nonsense -o " + w / "p.json") == 2);
  CHECK(run("reconstruct --psi " + w / "missing.aorf") == 2);
}

TEST_CASE("empty phantom gives a zero sinogram") {
  Workdir w;
  REQUIRE(run("phantom gen --preset empty -o " + w / "p.json") == 0);
  REQUIRE(run("sinogram --phantom " + w / "p.json" + " --n 65 --eta 0.04 --ny 8 --nr 16 --kind m_eta -o " +
              w / "s.csv") == 0);
  std::istringstream csv(slurp(w / "s.csv"));
  std::string line;
  int values = 0;
  bool header = true;
  while (std::getline(csv, line)) {
    if (header) {
      header = false;
      continue;
    }
    std::istringstream row(line);
    std::string cell;
    std::getline(row, cell, ',');
    std::getline(row, cell, ',');
    std::getline(row, cell, ',');
    CHECK(std::stod(cell) == 0.0);
    ++values;
  }
  CHECK(values == 8 * 16);
  CHECK(run("sinogram --phantom " + w / "p.json" + " --n 65 --eta 0.02 --ny 8 --nr 16 -o " + w / "t.csv") == 2);
}

TEST_CASE("pipeline runs end to end and is deterministic") {
  Workdir w;
  REQUIRE(run("phantom gen --preset disk -o " + w / "p.json") == 0);
  REQUIRE(run("forward --phantom " + w / "p.json" + " --n 65 --flux " + w / "flux.aorf") == 0);
  REQUIRE(run("recover-psi --ground-truth --phantom " + w / "p.json" + " --n 65 -o " + w / "psi.aorf") == 0);
  REQUIRE(run("segment --psi " + w / "psi.aorf" + " --prefix " + w / "mask", w / "seg.json") == 0);
  const auto seg = nlohmann::json::parse(slurp(w / "seg.json"));
  REQUIRE(seg["count"] == 1);

  const std::string rec = "reconstruct --psi " + w / "psi.aorf" + " --flux " + w / "flux.aorf" + " --masks " +
                          w / "mask_1.pgm" + " --stop-tol 0.01 -o ";
  REQUIRE(run(rec + w / "c1.aorf --log " + w / "r1.csv", w / "rec.json") == 0);
  REQUIRE(run(rec + w / "c2.aorf --log " + w / "r2.csv") == 0);
  CHECK(slurp(w / "r1.csv").rfind("iter,residual_Hstar,dist_to_truth_H,tau", 0) == 0);
  CHECK(slurp(w / "r1.csv") == slurp(w / "r2.csv"));
  CHECK(slurp(w / "c1.aorf") == slurp(w / "c2.aorf"));
  const auto r = nlohmann::json::parse(slurp(w / "rec.json"));
  CHECK(r["iterations"].get<int>() >= 1);

  REQUIRE(run("evaluate --coefficient " + w / "c1.aorf" + " --phantom " + w / "p.json" + " --masks " +
              w / "mask_1.pgm" + " --log " + w / "r1.csv" + " -o " + w / "m.json") == 0);
  const auto m = nlohmann::json::parse(slurp(w / "m.json"));
  for (const char* key : {"l2_rel_error", "hausdorff_boundary", "residual_final", "monotone_fraction"})
    CHECK(m.contains(key));
  CHECK(m["l2_rel_error"].get<double>() < 0.1);
  CHECK(m["hausdorff_boundary"].get<double>() <= 2.0 / 64);

  REQUIRE(run("export --field " + w / "c1.aorf" + " --pgm " + w / "c.pgm") == 0);
  const std::string pgm = slurp(w / "c.pgm");
  REQUIRE(pgm.rfind("P5\n65 65\n255\n", 0) == 0);
  const std::string px = pgm.substr(13);
  REQUIRE(px.size() == 65u * 65u);
  int lo = 255, hi = 0;
  for (unsigned char c : px) {
    lo = std::min(lo, static_cast<int>(c));
    hi = std::max(hi, static_cast<int>(c));
  }
  CHECK(lo == 0);
  CHECK(hi == 255);
}
