#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "symalign/cone_align.hpp"
#include "symalign/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("symalign_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  // Runs the CLI with `args`, stdout to out.txt; returns the exit status.
  int run(const std::string& args) {
    const std::string cmd = std::string(SYMALIGN_CLI) + " " + args + " > " + (dir_ / "out.txt").string() +
                            " 2> " + (dir_ / "err.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  std::string out() const { return read(dir_ / "out.txt"); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  static std::string read(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, SimulateWritesDataAndTruth) {
  ASSERT_EQ(run("simulate --mode fan --n 64 --seed 3 --h 4 --out " + path("a.sino")), 0);
  ASSERT_TRUE(fs::exists(path("a.sino")));
  ASSERT_TRUE(fs::exists(path("a.sino.truth.json")));
  const json truth = json::parse(read(path("a.sino.truth.json")));
  EXPECT_EQ(truth["h_px"].get<double>(), 4.0);
  EXPECT_EQ(truth["seed"].get<int>(), 3);

  ASSERT_EQ(run("simulate --mode fan --n 64 --seed 3 --h 4 --out " + path("b.sino")), 0);
  EXPECT_EQ(read(path("a.sino")), read(path("b.sino")));
}

TEST_F(CliTest, AlignFanRecoversShift) {
  ASSERT_EQ(run("simulate --mode fan --n 128 --h 10 --out " + path("a.sino")), 0);
  ASSERT_EQ(run("align-fan --input " + path("a.sino") + " --method 2dr --report " + path("r.json")), 0);
  const json report = json::parse(out());
  EXPECT_EQ(report["method"], "2dr");
  EXPECT_GE(report["h_px"].get<double>(), 9.9);
  EXPECT_LE(report["h_px"].get<double>(), 10.1);
  EXPECT_TRUE(report["h_mm"].is_null());
  EXPECT_EQ(json::parse(read(path("r.json")))["h_px"], report["h_px"]);

  ASSERT_EQ(run("align-fan --input " + path("a.sino") + " --method fpk --K 4 --pixel-size-mm 0.5"), 0);
  const json fpk = json::parse(out());
  EXPECT_NEAR(fpk["h_mm"].get<double>(), 0.5 * fpk["h_px"].get<double>(), 1e-12);
  EXPECT_EQ(fpk["config"]["K"], 4);
}

TEST_F(CliTest, ConfigFileAndOverrides) {
  ASSERT_EQ(run("simulate --mode fan --n 64 --h 3 --out " + path("a.sino")), 0);
  std::ofstream(path("c.cfg")) << "# settings\ninput: " << path("a.sino") << "\nmethod: ly\n";
  ASSERT_EQ(run("align-fan --config " + path("c.cfg")), 0);
  EXPECT_EQ(json::parse(out())["method"], "ly");
  ASSERT_EQ(run("align-fan --config " + path("c.cfg") + " --method fp"), 0);
  EXPECT_EQ(json::parse(out())["method"], "fp");

  std::ofstream(path("bad.cfg")) << "input: " << path("a.sino") << "\nmethood: ly\n";
  EXPECT_EQ(run("align-fan --config " + path("bad.cfg")), 4);
  std::ofstream(path("bad2.cfg")) << "input: " << path("a.sino") << "\nmethod: sart\n";
  EXPECT_EQ(run("align-fan --config " + path("bad2.cfg")), 4);
}

TEST_F(CliTest, ErrorExitCodes) {
  EXPECT_EQ(run("align-fan"), 4);
  EXPECT_EQ(run("align-fan --input " + path("missing.sino")), 3);
  std::ofstream(path("junk.sino")) << "format_version: 1\nkind: fan\nn_s: 4\n";
  EXPECT_EQ(run("align-fan --input " + path("junk.sino")), 3);
  EXPECT_EQ(run("simulate --mode fan --eta 1 --out " + path("x.sino")), 4);  // angle without unit
  EXPECT_EQ(run("frobnicate"), 4);
  EXPECT_EQ(run("--help"), 0);
}

TEST_F(CliTest, MetricReportsMse) {
  ASSERT_EQ(run("simulate --mode fan --n 64 --h 2 --out " + path("a.sino")), 0);
  ASSERT_EQ(run("metric --input " + path("a.sino") + " --h 2"), 0);
  const double at_truth = json::parse(out())["mse"].get<double>();
  ASSERT_EQ(run("metric --input " + path("a.sino") + " --h 0"), 0);
  EXPECT_LT(at_truth, json::parse(out())["mse"].get<double>());
}

TEST_F(CliTest, SweepIsDeterministic) {
  const std::string args = "sweep --n 64 --alphas 0,0.01 --methods 2dr,fp --no-timing --out ";
  ASSERT_EQ(run(args + path("a.csv")), 0);
  ASSERT_EQ(run(args + path("b.csv")), 0);
  const std::string csv = read(path("a.csv"));
  EXPECT_EQ(csv, read(path("b.csv")));
  EXPECT_EQ(csv.rfind("alpha,method,abs_error_px,seconds\n", 0), 0u);
  std::size_t lines = 0;
  for (char c : csv) lines += c == '\n';
  EXPECT_EQ(lines, 5u);
}

TEST_F(CliTest, ConeRoundTrip) {
  ASSERT_EQ(run("simulate --mode cone --n 64 --h 5 --eta 1deg --sidecar --out " + path("c.stk")), 0);
  EXPECT_TRUE(fs::exists(path("c.stk.raw")));
  ASSERT_EQ(run("align-cone --input " + path("c.stk") + " --inner fpk"), 0);
  const json report = json::parse(out());
  EXPECT_EQ(report["method"], "vp-fpk");
  symalign::VPConfig cfg;
  cfg.inner = symalign::Method::FPK;
  const auto direct = symalign::variable_projection(symalign::read_dataset(path("c.stk")).cone(), cfg);
  EXPECT_EQ(report["h_px"].get<double>(), direct.h);
  EXPECT_EQ(report["eta_deg"].get<double>(), symalign::rad_to_deg(direct.eta));
  EXPECT_NEAR(report["h_px"].get<double>(), 5.0, 0.15);
  EXPECT_TRUE(report["converged"].get<bool>());
  EXPECT_GE(report["trace"].size(), 2u);
  EXPECT_EQ(run("align-fan --input " + path("c.stk")), 4);
}
