#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "hcnet/grid_io.hpp"
#include "idx_fixture.hpp"

namespace fs = std::filesystem;

namespace {

std::string cli_path() {
  const char* p = std::getenv("HCNET_CLI");
  REQUIRE_MESSAGE(p != nullptr, "HCNET_CLI must point at the hcnet binary");
  return p;
}

struct RunResult {
  int exit_code = -1;
  std::string output;
};

RunResult run(const std::string& args) {
  std::string cmd = cli_path() + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  RunResult r;
  std::array<char, 4096> buf;
  while (std::size_t n = fread(buf.data(), 1, buf.size(), pipe)) r.output.append(buf.data(), n);
  int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

void write_impulse_grid(const std::string& path, std::size_t n) {
  hcnet::pde::TemperatureField f(n, n);
  f.at(n / 2, n / 2) = 1.0;
  hcnet::write_grid_csv(f, path);
}

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  CHECK(run("").exit_code == 2);
  CHECK(run("no-such-command").exit_code == 2);
  CHECK(run("solve-fdm --grid g.csv --no-such-flag").exit_code == 2);
  CHECK(run("--help").exit_code == 0);
}

TEST_CASE("solve-fdm round trips grids and reports stability failures") {
  write_impulse_grid("cli_grid.csv", 8);

  SUBCASE("zero steps reproduce the input") {
    auto r = run("solve-fdm --grid cli_grid.csv --steps 0 --out cli_out.csv");
    CHECK(r.exit_code == 0);
    auto in = hcnet::read_grid_csv("cli_grid.csv");
    auto out = hcnet::read_grid_csv("cli_out.csv");
    REQUIRE(in.values.size() == out.values.size());
    for (std::size_t i = 0; i < in.values.size(); ++i) CHECK(in.values[i] == out.values[i]);
    fs::remove("cli_out.csv");
  }

  SUBCASE("stability violation exits 5 and prints the ratio") {
    auto r = run("solve-fdm --grid cli_grid.csv --alpha 1 --dt 0.5 --steps 1 --out cli_out.csv");
    CHECK(r.exit_code == 5);
    CHECK(r.output.find("stability") != std::string::npos);
    CHECK(r.output.find("2") != std::string::npos);  // the violating ratio
    // the unsafe flag lets it through
    CHECK(run("solve-fdm --grid cli_grid.csv --alpha 1 --dt 0.5 --steps 1 --unsafe --out cli_out.csv")
              .exit_code == 0);
    fs::remove("cli_out.csv");
  }

  SUBCASE("missing grid file exits 4") {
    CHECK(run("solve-fdm --grid missing.csv --steps 1 --out o.csv").exit_code == 4);
  }

  SUBCASE("pgm export works from solve and standalone") {
    CHECK(run("solve-fdm --grid cli_grid.csv --alpha 0.25 --dt 0.5 --steps 20 --boundary periodic"
              " --out cli_out.csv --pgm cli_out.pgm")
              .exit_code == 0);
    std::ifstream pgm("cli_out.pgm", std::ios::binary);
    std::string magic;
    pgm >> magic;
    CHECK(magic == "P5");
    CHECK(run("export-heatmap --grid cli_out.csv --out cli_hm.pgm").exit_code == 0);
    fs::remove("cli_out.csv");
    fs::remove("cli_out.pgm");
    fs::remove("cli_hm.pgm");
  }

  fs::remove("cli_grid.csv");
}

TEST_CASE("solve-fourier evaluates the fitted series") {
  // single interior-node sine mode on a 15x15 grid
  hcnet::pde::TemperatureField f(15, 15);
  for (std::size_t i = 0; i < 15; ++i)
    for (std::size_t j = 0; j < 15; ++j)
      f.at(i, j) = std::sin(M_PI * (i + 1) / 16.0) * std::sin(M_PI * (j + 1) / 16.0);
  hcnet::write_grid_csv(f, "cli_mode.csv");
  auto r = run("solve-fourier --grid cli_mode.csv --L 3.14159265358979 --modes 4 --k 1"
               " --t 0.5 --out cli_fr.csv");
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("peak_coefficient=") != std::string::npos);
  auto out = hcnet::read_grid_csv("cli_fr.csv");
  // amplitude decays by about e^{-1}
  double ratio = out.at(7, 7) / f.at(7, 7);
  CHECK(ratio == doctest::Approx(std::exp(-1.0)).epsilon(1e-3));
  fs::remove("cli_mode.csv");
  fs::remove("cli_fr.csv");
}

TEST_CASE("verify subcommand runs suites and exits 0") {
  auto r = run("verify --suite conservation");
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("[PASS]") != std::string::npos);
  CHECK(r.output.find("verify=pass") != std::string::npos);
  CHECK(run("verify --suite no-such-suite").exit_code == 2);
}

TEST_CASE("gradcheck subcommand reports max rel err") {
  auto r = run("gradcheck --target ra-layer");
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("max_rel_err=") != std::string::npos);
  CHECK(run("gradcheck --target bogus").exit_code == 2);
}

TEST_CASE("params prints counts and Table-2 deviation for hcnet-t") {
  auto r = run("params --model hcnet-t");
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("params=") != std::string::npos);
  CHECK(r.output.find("macs=") != std::string::npos);
  CHECK(r.output.find("params_within_10pct=true") != std::string::npos);
  CHECK(r.output.find("macs_within_15pct=true") != std::string::npos);

  CHECK(run("params --model hcnet-nano").exit_code == 0);
  CHECK(run("params").exit_code == 2);
  CHECK(run("params --model nope").exit_code == 3);
}

TEST_CASE("train and eval on a synthetic IDX directory") {
  const std::string dir = "cli_data";
  fixture::write_synthetic_split(dir, "train", 16, 31);  // 160 samples
  fixture::write_synthetic_split(dir, "t10k", 8, 32);    // 80 samples

  SUBCASE("a seed is required") {
    auto r = run("train --data " + dir + " --epochs 1");
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("seed") != std::string::npos);
  }

  SUBCASE("unknown config keys exit 3") {
    std::ofstream("cli_bad.cfg") << "model=hcnet-nano\nbogus_key=1\n";
    auto r = run("train --data " + dir + " --config cli_bad.cfg --seed 1");
    CHECK(r.exit_code == 3);
    CHECK(r.output.find("bogus_key") != std::string::npos);
    fs::remove("cli_bad.cfg");
  }

  SUBCASE("training writes metrics and a loadable checkpoint, deterministically") {
    // the shipped recipe, with flags overriding its epoch count
    const char* cfg_dir = std::getenv("HCNET_CONFIG_DIR");
    REQUIRE(cfg_dir != nullptr);
    std::string recipe = std::string(cfg_dir) + "/nano-mnist.cfg";
    std::string base = "train --config " + recipe + " --data " + dir +
                       " --seed 9 --epochs 1 --batch-size 16 --lr 0.002"
                       " --metrics cli_m1.csv --checkpoint cli_ck.bin";
    auto r1 = run(base);
    CHECK(r1.exit_code == 0);
    CHECK(r1.output.find("final_train_loss=") != std::string::npos);

    auto r2 = run("train --config " + recipe + " --data " + dir +
                  " --seed 9 --epochs 1 --batch-size 16 --lr 0.002 --metrics cli_m2.csv");
    CHECK(r2.exit_code == 0);
    std::ifstream m1("cli_m1.csv"), m2("cli_m2.csv");
    std::string s1((std::istreambuf_iterator<char>(m1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(m2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);
    CHECK(s1.find("epoch,lr,train_loss,train_acc,eval_acc") == 0);

    auto ev = run("eval --checkpoint cli_ck.bin --data " + dir);
    CHECK(ev.exit_code == 0);
    CHECK(ev.output.find("top1_accuracy=") != std::string::npos);

    fs::remove("cli_m1.csv");
    fs::remove("cli_m2.csv");
    fs::remove("cli_ck.bin");
  }

  fs::remove_all(dir);
}
