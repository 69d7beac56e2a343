#pragma once

// Run directories: payload files plus a manifest with SHA-256 digests.
// The manifest is written last, so a directory without one is incomplete.

#include <array>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "error.hpp"

namespace kmono {

constexpr std::string_view artifact_version = "1.0.0";

//! Lowercase hex SHA-256 of a byte string.
inline std::string
sha256_hex(std::string_view bytes)
{
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), md.data(), &len) != 1)
    throw Error("sha256 digest failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

struct RunManifest
{
  std::string version{ artifact_version };
  std::string command;
  std::string config_hash;
  std::uint64_t seed{ 0 };
  std::string created_utc;
  std::string data_digest;
  //! payload file name -> sha256
  std::map<std::string, std::string> files;

  bool operator==(const RunManifest&) const = default;
};

inline void
to_json(nlohmann::json& j, const RunManifest& m)
{
  j = nlohmann::json{ { "version", m.version },         { "command", m.command },
                      { "config_hash", m.config_hash }, { "seed", m.seed },
                      { "created_utc", m.created_utc }, { "data_digest", m.data_digest },
                      { "files", m.files } };
}

inline void
from_json(const nlohmann::json& j, RunManifest& m)
{
  m.version = j.at("version").get<std::string>();
  m.command = j.at("command").get<std::string>();
  m.config_hash = j.at("config_hash").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.created_utc = j.at("created_utc").get<std::string>();
  m.data_digest = j.at("data_digest").get<std::string>();
  m.files = j.at("files").get<std::map<std::string, std::string>>();
}

namespace detail {

inline std::string
utc_stamp(std::chrono::system_clock::time_point t, const char* fmt)
{
  std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, fmt, &tm);
  return buf;
}

inline void
write_atomic(const std::filesystem::path& path, std::string_view bytes)
{
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os)
      throw IoError("cannot open " + tmp.string() + " for writing");
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    os.flush();
    if (!os)
      throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec)
    throw IoError("rename to " + path.string() + " failed: " + ec.message());
}

inline std::string
read_file(const std::filesystem::path& path)
{
  std::ifstream is(path, std::ios::binary);
  if (!is)
    throw IoError("cannot read " + path.string());
  return { std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>() };
}

inline bool
valid_payload_name(const std::string& name)
{
  return !name.empty() && name != "manifest.json" && name.find('/') == std::string::npos &&
         name.find('\\') == std::string::npos && name != "." && name != "..";
}

} // namespace detail

//! Creates root/<YYYYMMDDTHHMMSSZ>-<hash8>[-i] holding config.json, the
//! payloads and manifest.json. Fills in the hash, timestamp and digests of
//! `manifest`. On failure the partial directory is removed.
inline std::filesystem::path
write_run(const std::filesystem::path& root,
          RunManifest manifest,
          const std::string& config_json,
          const std::map<std::string, std::string>& payloads)
{
  namespace fs = std::filesystem;
  for (const auto& [name, bytes] : payloads)
    if (!detail::valid_payload_name(name) || name == "config.json")
      throw ParameterError("invalid payload name '" + name + "'");

  auto now = std::chrono::system_clock::now();
  manifest.config_hash = sha256_hex(config_json);
  manifest.created_utc = detail::utc_stamp(now, "%Y-%m-%dT%H:%M:%SZ");
  auto data = payloads.find("data.csv");
  manifest.data_digest = data == payloads.end() ? "" : sha256_hex(data->second);

  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec)
    throw IoError("cannot create output root " + root.string() + ": " + ec.message());
  const std::string base = detail::utc_stamp(now, "%Y%m%dT%H%M%SZ") + "-" + manifest.config_hash.substr(0, 8);
  fs::path dir;
  for (int i = 0;; ++i) {
    dir = root / (i == 0 ? base : base + "-" + std::to_string(i));
    // create_directory reports false when the name is taken
    if (fs::create_directory(dir, ec))
      break;
    if (ec)
      throw IoError("cannot create run directory " + dir.string() + ": " + ec.message());
    if (i > 10000)
      throw IoError("too many run directories named " + base);
  }

  try {
    manifest.files.clear();
    detail::write_atomic(dir / "config.json", config_json);
    manifest.files["config.json"] = manifest.config_hash;
    for (const auto& [name, bytes] : payloads) {
      detail::write_atomic(dir / name, bytes);
      manifest.files[name] = sha256_hex(bytes);
    }
    detail::write_atomic(dir / "manifest.json", nlohmann::json(manifest).dump(2) + "\n");
  } catch (...) {
    fs::remove_all(dir, ec);
    throw;
  }
  return dir;
}

struct LoadedRun
{
  std::filesystem::path dir;
  RunManifest manifest;

  std::string read(const std::string& name) const
  {
    if (!manifest.files.contains(name))
      throw IoError("run has no payload '" + name + "'");
    return detail::read_file(dir / name);
  }
};

//! Opens a run directory and verifies every digest in its manifest.
inline LoadedRun
load_run(const std::filesystem::path& dir)
{
  namespace fs = std::filesystem;
  auto mpath = dir / "manifest.json";
  if (!fs::is_regular_file(mpath))
    throw NotARunError(dir.string() + " has no manifest.json");
  LoadedRun run;
  run.dir = dir;
  try {
    run.manifest = nlohmann::json::parse(detail::read_file(mpath)).get<RunManifest>();
  } catch (const nlohmann::json::exception& e) {
    throw NotARunError(mpath.string() + " does not parse: " + e.what());
  }
  for (const auto& [name, digest] : run.manifest.files) {
    if (!detail::valid_payload_name(name))
      throw CorruptionError("manifest lists an invalid file name '" + name + "'");
    if (!fs::is_regular_file(dir / name))
      throw CorruptionError("payload " + name + " is missing");
    if (sha256_hex(detail::read_file(dir / name)) != digest)
      throw CorruptionError("digest mismatch for " + name);
  }
  if (run.manifest.files.contains("config.json") && run.manifest.files.at("config.json") != run.manifest.config_hash)
    throw CorruptionError("config hash does not match config.json");
  return run;
}

} // namespace kmono
