#include "doctest.h"

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cli_runner.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using testutil::field;
using testutil::slurp;

namespace {

const std::string kTiny =
    " --input-size 32 --backbone 4,6 --aspp 1,2 --aspp-channels 4 --reduction 3,2 --fc 8";

struct Cli {
  testutil::TempDir dir{"cli"};
  testutil::CliResult operator()(const std::string& args) {
    return testutil::run_cli(SCALENET_CLI, args, dir.path());
  }
  std::string p(const std::string& name) const { return (dir / name).string(); }
};

// Column `col` of every manifest row.
std::vector<std::string> manifest_column(const fs::path& dir, int col) {
  std::ifstream in(dir / "manifest.csv");
  std::string line;
  std::getline(in, line);
  std::vector<std::string> out;
  while (std::getline(in, line)) {
    std::stringstream row(line);
    std::string cell;
    for (int i = 0; i <= col; ++i) std::getline(row, cell, ',');
    out.push_back(cell);
  }
  return out;
}

bool same_tree(const fs::path& a, const fs::path& b) {
  std::vector<fs::path> fa, fb;
  for (const auto& e : fs::directory_iterator(a)) fa.push_back(e.path().filename());
  for (const auto& e : fs::directory_iterator(b)) fb.push_back(e.path().filename());
  std::sort(fa.begin(), fa.end());
  std::sort(fb.begin(), fb.end());
  if (fa != fb) return false;
  for (const auto& f : fa)
    if (slurp(a / f) != slurp(b / f)) return false;
  return true;
}

}  // namespace

TEST_CASE("usage errors exit 2") {
  Cli cli;
  CHECK(cli("").code == 2);
  CHECK(cli("frobnicate").code == 2);
  CHECK(cli("textures --out " + cli.p("t") + " --count 1 --seed 1 --size 32").code == 0);
  CHECK(cli("gen --images " + cli.p("t") + " --out " + cli.p("d") + " --count 2").code == 2);
  fs::create_directories(cli.dir / "empty");
  CHECK(cli("gen --images " + cli.p("empty") + " --out " + cli.p("d") + " --count 2 --seed 1").code == 2);
  CHECK(cli("gen --images " + cli.p("t") + " --out " + cli.p("d") + " --count 2 --seed 1 --scale-min 3 --scale-max 2")
            .code == 2);
  CHECK(cli("train --data " + cli.p("d") + " --out " + cli.p("m") + " --seed 1 --mode soft").code == 2);
}

TEST_CASE("gen is reproducible and honours the scale range") {
  Cli cli;
  REQUIRE(cli("textures --out " + cli.p("t") + " --count 2 --seed 4 --size 64").code == 0);
  REQUIRE(cli("gen --images " + cli.p("t") + " --out " + cli.p("d1") + " --count 4 --seed 9 --size 32").code == 0);
  REQUIRE(cli("gen --images " + cli.p("t") + " --out " + cli.p("d2") + " --count 4 --seed 9 --size 32").code == 0);
  CHECK(manifest_column(cli.dir / "d1", 0).size() == 4);
  CHECK(same_tree(cli.dir / "d1", cli.dir / "d2"));

  REQUIRE(cli("gen --images " + cli.p("t") + " --out " + cli.p("two") +
              " --count 5 --seed 2 --size 32 --scale-min 2 --scale-max 2")
              .code == 0);
  for (const auto& s : manifest_column(cli.dir / "two", 3)) CHECK(std::stod(s) == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("label") {
  Cli cli;
  {
    std::ofstream f(cli.dir / "sim2.csv");
    f << "xa,ya,xb,yb\n";
    for (int i = 0; i < 12; ++i) {
      const double x = (i * 37) % 50, y = (i * 11) % 41;
      f << x << ',' << y << ',' << 2 * x + 5 << ',' << 2 * y - 3 << "\n";
    }
  }
  const auto r = cli("label --corr " + cli.p("sim2.csv") + " --seed 3");
  CHECK(r.code == 0);
  CHECK(field(r.out, "s_gt") == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(r.out.find("bin,scale,p") != std::string::npos);

  const auto one = cli("label --corr " + cli.p("sim2.csv") + " --samples 1 --seed 5").out;
  CHECK(one == cli("label --corr " + cli.p("sim2.csv") + " --samples 1 --seed 5").out);

  {
    std::ofstream f(cli.dir / "same.csv");
    f << "xa,ya,xb,yb\n0,0,0,0\n4,1,4,1\n9,7,9,7\n";
  }
  const auto same = cli("label --corr " + cli.p("same.csv") + " --seed 1").out;
  CHECK(field(same, "s_gt") == 1.0);
  CHECK(same.find("\n6,1,1\n") != std::string::npos);  // center bin carries all mass

  {
    std::ofstream f(cli.dir / "bad.csv");
    f << "xa,ya,xb,yb\n0,0,1,1\n2,zero,5,1\n";
  }
  CHECK(cli("label --corr " + cli.p("bad.csv") + " --seed 1").code == 1);
  CHECK(cli("label --corr " + cli.p("sim2.csv")).code == 2);
}

TEST_CASE("train, predict, eval and sweep") {
  Cli cli;
  REQUIRE(cli("textures --out " + cli.p("t") + " --count 2 --seed 5 --size 64").code == 0);
  REQUIRE(cli("gen --images " + cli.p("t") + " --out " + cli.p("d") + " --count 8 --seed 6 --size 32").code == 0);
  const std::string train = "train --data " + cli.p("d") + " --epochs 1 --batch 4 --seed 7" + kTiny;
  REQUIRE(cli(train + " --out " + cli.p("m1.ckpt")).code == 0);
  REQUIRE(cli(train + " --out " + cli.p("m2.ckpt")).code == 0);
  CHECK(slurp(cli.dir / "m1.ckpt.loss.csv") == slurp(cli.dir / "m2.ckpt.loss.csv"));
  CHECK(slurp(cli.dir / "m1.ckpt") == slurp(cli.dir / "m2.ckpt"));

  const std::string a = (cli.dir / "d" / "000000_a.pgm").string();
  const std::string b = (cli.dir / "d" / "000000_b.pgm").string();
  REQUIRE(fs::exists(a));
  const auto self = cli("predict --ckpt " + cli.p("m1.ckpt") + " --a " + a + " --b " + a);
  CHECK(self.code == 0);
  CHECK(field(self.out, "scale_a_to_b") == 1.0);
  const auto ab = cli("predict --ckpt " + cli.p("m1.ckpt") + " --a " + a + " --b " + b).out;
  CHECK(std::abs(field(ab, "product") - 1.0) < 1e-9);
  CHECK(std::abs(field(ab, "scale_a_to_b") * field(ab, "scale_b_to_a") - 1.0) < 1e-9);

  const double hard = field(cli("predict --ckpt " + cli.p("m1.ckpt") + " --a " + a + " --b " + b +
                                " --mode d-scalenet").out,
                            "scale_a_to_b");
  bool on_lattice = false;
  for (int i = -6; i <= 6; ++i) on_lattice |= std::abs(hard - std::pow(std::sqrt(2.0), i)) < 1e-12;
  CHECK(on_lattice);

  REQUIRE(cli(train + " --mode regression --out " + cli.p("reg.ckpt")).code == 0);
  CHECK(std::isfinite(field(cli("predict --ckpt " + cli.p("reg.ckpt") + " --a " + a + " --b " + b +
                                " --mode regression").out,
                            "scale_a_to_b")));
  CHECK(cli("predict --ckpt " + cli.p("reg.ckpt") + " --a " + a + " --b " + b).code == 1);

  const auto oracle = cli("eval --oracle --data " + cli.p("d") + " --seed 1").out;
  CHECK(oracle.find("MEAN:oracle,,,1\n") != std::string::npos);
  double expected = 0;
  const auto gts = manifest_column(cli.dir / "d", 3);
  for (const auto& g : gts) expected += std::max(std::stod(g), 1.0 / std::stod(g));
  expected /= gts.size();
  const std::string key = "MEAN:constant,,,";
  const auto pos = oracle.find(key);
  REQUIRE(pos != std::string::npos);
  CHECK(std::stod(oracle.substr(pos + key.size())) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(cli("eval --data " + cli.p("d") + " --seed 1").code == 2);
  const auto ev1 = cli("eval --ckpt " + cli.p("m1.ckpt") + " --data " + cli.p("d") + " --seed 1");
  CHECK(ev1.code == 0);
  CHECK(ev1.out == cli("eval --ckpt " + cli.p("m1.ckpt") + " --data " + cli.p("d") + " --seed 1").out);

  const auto sweep = cli("sweep --images " + cli.p("t") + " --scales 1,2 --ckpt " + cli.p("m1.ckpt"));
  CHECK(sweep.code == 0);
  std::istringstream rows(sweep.out);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(rows, line)) lines.push_back(line);
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "scale,mma_none,mma_pred,mma_oracle");
  CHECK(lines[1].rfind("1,1,", 0) == 0);
}
