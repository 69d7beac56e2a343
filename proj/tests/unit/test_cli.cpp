#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <gtest/gtest.h>

#include <kmono/persistence.hpp>

namespace fs = std::filesystem;

namespace {

struct Result
{
  int code;
  std::string out;
};

class Cli : public ::testing::Test
{
protected:
  void SetUp() override
  {
    dir = fs::temp_directory_path() /
          ("kmono_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  Result run(const std::string& args)
  {
    auto log = dir / "stdout.txt";
    std::string cmd = std::string(KMONO_CLI) + " " + args + " > " + log.string() + " 2> " + (dir / "stderr.txt").string();
    int status = std::system(cmd.c_str());
    std::ifstream is(log);
    std::stringstream ss;
    ss << is.rdbuf();
    return { WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str() };
  }

  fs::path write(const std::string& name, const std::string& text)
  {
    auto p = dir / name;
    std::ofstream(p) << text;
    return p;
  }

  static fs::path run_dir(const Result& r)
  {
    auto line = r.out.substr(0, r.out.find('\n'));
    return line;
  }

  static std::string slurp(const fs::path& p)
  {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
  }

  static int lines(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

  fs::path dir;
};

const char* chain = " --burn-in 20 --draws 10";

} // namespace

TEST_F(Cli, FitWritesVerifiedRun)
{
  auto data = write("d.csv", "x\n0.1\n0.25\n0.4\n");
  auto r = run("fit " + data.string() + " --k 2" + chain + " --seed 3 --out " + (dir / "runs").string());
  ASSERT_EQ(r.code, 0) << slurp(dir / "stderr.txt");
  auto loaded = kmono::load_run(run_dir(r));
  EXPECT_EQ(loaded.manifest.command, "fit");
  EXPECT_EQ(lines(loaded.read("draws.jsonl")), 10);
  EXPECT_EQ(lines(loaded.read("density_grid.csv")), 101);
  EXPECT_NE(loaded.read("results.csv").find("beta0_mean,"), std::string::npos);
}

TEST_F(Cli, BadInputExitsWithTwo)
{
  auto out = " --out " + (dir / "runs").string();
  EXPECT_EQ(run("fit " + write("a.csv", "0.1\n1.5\n").string() + out).code, 2);
  EXPECT_EQ(run("fit " + write("b.csv", "0.1\nfoo\n").string() + out).code, 2);
  EXPECT_EQ(run("fit " + (dir / "missing.csv").string() + out).code, 2);
  EXPECT_EQ(run("fit " + write("c.csv", "0.1\n0.2\n").string() + " --k 0" + out).code, 2);
  EXPECT_EQ(run("nosuchcommand").code, 2);
  EXPECT_FALSE(fs::exists(dir / "runs") && !fs::is_empty(dir / "runs"));
}

TEST_F(Cli, SameSeedSameDraws)
{
  auto data = write("d.csv", "0.05\n0.2\n0.3\n0.6\n0.7\n");
  std::string base = "fit " + data.string() + " --adaptive" + chain + " --seed 5 --out " + (dir / "runs").string();
  auto a = run(base + " --threads 1");
  auto b = run(base + " --threads 2");
  ASSERT_EQ(a.code, 0);
  ASSERT_EQ(b.code, 0);
  ASSERT_NE(run_dir(a), run_dir(b));
  for (auto name : { "draws.jsonl", "config.json", "results.csv", "density_grid.csv" })
    EXPECT_EQ(slurp(run_dir(a) / name), slurp(run_dir(b) / name)) << name;
}

TEST_F(Cli, ConfigFileSuppliesDefaults)
{
  auto data = write("d.csv", "0.05\n0.2\n0.3\n");
  auto cfg = write("cfg.json", R"({"seed": 11, "fit": {"k": 3, "draws": 4, "burn-in": 5}})");
  auto r = run("--config " + cfg.string() + " fit " + data.string() + " --out " + (dir / "runs").string());
  ASSERT_EQ(r.code, 0) << slurp(dir / "stderr.txt");
  auto loaded = kmono::load_run(run_dir(r));
  EXPECT_EQ(loaded.manifest.seed, 11u);
  EXPECT_EQ(lines(loaded.read("draws.jsonl")), 4);
  EXPECT_NE(loaded.read("draws.jsonl").find("\"k\":3"), std::string::npos);
}

TEST_F(Cli, Table1SmallRun)
{
  auto r = run("table1 --R 1 --n 30 --densities g1 --burn-in 20 --draws 10 --out " + (dir / "runs").string());
  ASSERT_EQ(r.code, 0) << slurp(dir / "stderr.txt");
  auto loaded = kmono::load_run(run_dir(r));
  EXPECT_EQ(lines(loaded.read("results.csv")), 1 + 4);
  EXPECT_NE(loaded.read("table1.md").find("| 30 | Gre |"), std::string::npos);
}

TEST_F(Cli, MtpSmallRun)
{
  auto sc = write("sc.json", R"({"scenarios": [{"n_tests": 100, "G": 10, "alpha0": 0.8}]})");
  auto r = run("mtp " + sc.string() + " --R 1 --burn-in 20 --draws 10 --out " + (dir / "runs").string());
  ASSERT_EQ(r.code, 0) << slurp(dir / "stderr.txt");
  auto loaded = kmono::load_run(run_dir(r));
  EXPECT_EQ(lines(loaded.read("estimates.csv")), 1 + 2);
  EXPECT_EQ(run("mtp " + write("bad.json", "{").string()).code, 2);
}

TEST_F(Cli, Selftest)
{
  auto list = run("selftest --list");
  EXPECT_EQ(list.code, 0);
  EXPECT_NE(list.out.find("psi support"), std::string::npos);
  EXPECT_EQ(lines(list.out), 7);
  auto bad = run("selftest --inject-fault psi-support");
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.out.find("FAILED  psi support"), std::string::npos);
}
