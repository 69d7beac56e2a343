#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <kmono/data_io.hpp>
#include <kmono/persistence.hpp>

using namespace kmono;
namespace fs = std::filesystem;

namespace {

class TempDir : public ::testing::Test
{
protected:
  void SetUp() override
  {
    root = fs::temp_directory_path() /
           ("kmono_persist_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root);
  }
  void TearDown() override { fs::remove_all(root); }

  fs::path root;
};

RunManifest
manifest(std::uint64_t seed = 7)
{
  RunManifest m;
  m.command = "fit";
  m.seed = seed;
  return m;
}

const std::map<std::string, std::string> payloads{ { "data.csv", "x\n0.25\n0.5\n" },
                                                   { "binary.bin", std::string("\0\x01\xff\n\r", 5) } };

} // namespace

TEST(Sha256, KnownDigests)
{
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_F(TempDir, RoundTripIsByteExact)
{
  auto dir = write_run(root, manifest(), R"({"seed":7})", payloads);
  auto run = load_run(dir);
  EXPECT_EQ(run.manifest.command, "fit");
  EXPECT_EQ(run.manifest.version, "1.0.0");
  EXPECT_EQ(run.manifest.seed, 7u);
  EXPECT_EQ(run.manifest.config_hash, sha256_hex(R"({"seed":7})"));
  EXPECT_EQ(run.manifest.data_digest, sha256_hex(payloads.at("data.csv")));
  for (const auto& [name, bytes] : payloads)
    EXPECT_EQ(run.read(name), bytes);
  EXPECT_EQ(run.read("config.json"), R"({"seed":7})");
  EXPECT_THROW(run.read("absent.csv"), IoError);
  auto name = dir.filename().string();
  EXPECT_EQ(name.size(), 16u + 1 + 8);
  EXPECT_EQ(name.substr(17), run.manifest.config_hash.substr(0, 8));
}

TEST_F(TempDir, RepeatedRunsGetDistinctDirectories)
{
  auto a = write_run(root, manifest(), "{}", payloads);
  auto b = write_run(root, manifest(), "{}", payloads);
  EXPECT_NE(a, b);
  EXPECT_NO_THROW(load_run(a));
  EXPECT_NO_THROW(load_run(b));
}

TEST_F(TempDir, TamperingIsDetected)
{
  auto dir = write_run(root, manifest(), "{}", payloads);
  {
    std::ofstream os(dir / "data.csv", std::ios::app);
    os << "0.75\n";
  }
  EXPECT_THROW(load_run(dir), CorruptionError);

  auto dir2 = write_run(root, manifest(), "{}", payloads);
  fs::remove(dir2 / "binary.bin");
  EXPECT_THROW(load_run(dir2), CorruptionError);

  auto dir3 = write_run(root, manifest(), "{}", payloads);
  {
    std::ofstream os(dir3 / "config.json", std::ios::trunc);
    os << "{\"seed\":8}";
  }
  EXPECT_THROW(load_run(dir3), CorruptionError);
}

TEST_F(TempDir, MissingOrBrokenManifest)
{
  fs::create_directories(root / "empty");
  EXPECT_THROW(load_run(root / "empty"), NotARunError);
  auto dir = write_run(root, manifest(), "{}", payloads);
  {
    std::ofstream os(dir / "manifest.json", std::ios::trunc);
    os << "{ not json";
  }
  EXPECT_THROW(load_run(dir), NotARunError);
}

TEST_F(TempDir, RejectsBadPayloadNames)
{
  EXPECT_THROW(write_run(root, manifest(), "{}", { { "../escape", "x" } }), ParameterError);
  EXPECT_THROW(write_run(root, manifest(), "{}", { { "manifest.json", "x" } }), ParameterError);
  EXPECT_THROW(write_run(root, manifest(), "{}", { { "config.json", "x" } }), ParameterError);
}

TEST(Manifest, JsonRoundTrip)
{
  RunManifest m = manifest(42);
  m.config_hash = "abc";
  m.created_utc = "2026-01-01T00:00:00Z";
  m.files = { { "a.csv", "01" }, { "b.csv", "02" } };
  EXPECT_EQ(nlohmann::json::parse(nlohmann::json(m).dump()).get<RunManifest>(), m);
}

TEST(DataIo, ReadsColumn)
{
  std::istringstream ok("x\n0.1\n  0.5 \n\n0.9\n");
  EXPECT_EQ(read_unit_column(ok), (std::vector<double>{ 0.1, 0.5, 0.9 }));
  std::istringstream bad("0.1\nabc\n");
  EXPECT_THROW(read_unit_column(bad), ParameterError);
  std::istringstream out("0.1\n1.0\n0\n");
  EXPECT_THROW(read_unit_column(out), ParameterError);
  std::istringstream back(write_unit_column({ 0.25, 0.5 }));
  EXPECT_EQ(read_unit_column(back), (std::vector<double>{ 0.25, 0.5 }));
}
