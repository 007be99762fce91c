#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "selftalk/common.hpp"
#include "selftalk/rng.hpp"

namespace selftalk::cli {

inline uint64_t fnv64_bytes(const std::string& bytes) { return hash_str(bytes); }

inline uint64_t fnv64_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open for checksum: " + path.string());
  uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 14];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= uint8_t(buf[i]);
      h *= 0x100000001b3ULL;
    }
    if (!in) break;
  }
  return h;
}

inline std::string checksum_string(uint64_t h) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "fnv64:%016llx", (unsigned long long)h);
  return buf;
}

// Every subcommand finishes by recording what it produced: the config hash,
// the seed, and a checksum per artifact (paths relative to the run dir).
inline void write_manifest(const std::filesystem::path& out_dir,
                           const std::string& config_hash, uint64_t seed,
                           const std::vector<std::string>& artifacts) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["kind"] = "selftalk-manifest";
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  auto& files = j["artifacts"] = nlohmann::json::object();
  for (const auto& rel : artifacts)
    files[rel] = checksum_string(fnv64_file(out_dir / rel));
  std::ofstream out(out_dir / "manifest.json", std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write manifest in " + out_dir.string());
  out << j.dump(2) << "\n";
}

// Merges new artifacts into an existing manifest so consecutive subcommands
// extend one self-verifying record.
inline void update_manifest(const std::filesystem::path& out_dir,
                            const std::string& config_hash, uint64_t seed,
                            const std::vector<std::string>& new_artifacts) {
  std::vector<std::string> all = new_artifacts;
  const auto path = out_dir / "manifest.json";
  if (std::filesystem::exists(path)) {
    std::ifstream in(path, std::ios::binary);
    try {
      nlohmann::json j = nlohmann::json::parse(in);
      if (j.value("config_hash", "") == config_hash && j.value("seed", uint64_t(0)) == seed)
        for (const auto& [rel, _] : j.at("artifacts").items())
          if (std::find(all.begin(), all.end(), rel) == all.end() &&
              std::filesystem::exists(out_dir / rel))
            all.push_back(rel);
    } catch (...) {
      // Unreadable manifest: rebuild from the new artifact list.
    }
  }
  std::sort(all.begin(), all.end());
  write_manifest(out_dir, config_hash, seed, all);
}

// Single-owner run directory: created exclusively, removed on scope exit.
class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& out_dir) : path_(out_dir / ".lock") {
    std::filesystem::create_directories(out_dir);
    if (std::filesystem::exists(path_))
      throw DataError("run directory is locked (stale " + path_.string() + "?)");
    std::ofstream out(path_, std::ios::binary);
    if (!out) throw DataError("cannot create lock file " + path_.string());
    out << "selftalk\n";
  }
  ~RunLock() {
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::filesystem::path path_;
};

inline void write_text_file(const std::filesystem::path& path, const std::string& bytes) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << bytes;
  if (!out) throw DataError("write failed: " + path.string());
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace selftalk::cli
