#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "selftalk/agents.hpp"

namespace selftalk::agents {

constexpr int kCheckpointSchemaVersion = 1;

namespace detail {

inline const char kB64Alphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

inline std::string base64_encode(const std::string& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  size_t i = 0;
  while (i + 3 <= bytes.size()) {
    const uint32_t v = uint32_t(uint8_t(bytes[i])) << 16 | uint32_t(uint8_t(bytes[i + 1])) << 8 |
                       uint32_t(uint8_t(bytes[i + 2]));
    out.push_back(kB64Alphabet[(v >> 18) & 63]);
    out.push_back(kB64Alphabet[(v >> 12) & 63]);
    out.push_back(kB64Alphabet[(v >> 6) & 63]);
    out.push_back(kB64Alphabet[v & 63]);
    i += 3;
  }
  const size_t rem = bytes.size() - i;
  if (rem == 1) {
    const uint32_t v = uint32_t(uint8_t(bytes[i])) << 16;
    out.push_back(kB64Alphabet[(v >> 18) & 63]);
    out.push_back(kB64Alphabet[(v >> 12) & 63]);
    out += "==";
  } else if (rem == 2) {
    const uint32_t v = uint32_t(uint8_t(bytes[i])) << 16 | uint32_t(uint8_t(bytes[i + 1])) << 8;
    out.push_back(kB64Alphabet[(v >> 18) & 63]);
    out.push_back(kB64Alphabet[(v >> 12) & 63]);
    out.push_back(kB64Alphabet[(v >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

inline std::string base64_decode(const std::string& text) {
  auto value_of = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::string out;
  uint32_t acc = 0;
  int bits = 0;
  for (char c : text) {
    if (c == '=') break;
    const int v = value_of(c);
    if (v < 0) throw DataError("checkpoint: invalid base64 payload");
    acc = acc << 6 | uint32_t(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(char(uint8_t(acc >> bits)));
    }
  }
  return out;
}

// Explicit little-endian packing keeps the format byte-identical across hosts.
inline std::string doubles_to_le_bytes(const std::vector<double>& values) {
  std::string bytes(values.size() * 8, '\0');
  for (size_t i = 0; i < values.size(); ++i) {
    uint64_t u;
    std::memcpy(&u, &values[i], 8);
    for (int b = 0; b < 8; ++b) bytes[i * 8 + size_t(b)] = char(uint8_t(u >> (8 * b)));
  }
  return bytes;
}

inline std::vector<double> le_bytes_to_doubles(const std::string& bytes) {
  if (bytes.size() % 8 != 0) throw DataError("checkpoint: tensor payload size not a multiple of 8");
  std::vector<double> values(bytes.size() / 8);
  for (size_t i = 0; i < values.size(); ++i) {
    uint64_t u = 0;
    for (int b = 0; b < 8; ++b) u |= uint64_t(uint8_t(bytes[i * 8 + size_t(b)])) << (8 * b);
    std::memcpy(&values[i], &u, 8);
  }
  return values;
}

}  // namespace detail

// Versioned checkpoint: shape metadata plus flat little-endian 64-bit float
// payloads per named tensor. Gate order within recurrent weights is
// (input, forget, candidate, output).
inline void save_checkpoint(const AgentParams& params, const std::filesystem::path& path,
                            const std::string& config_hash, uint64_t seed) {
  nlohmann::json j;
  j["kind"] = "selftalk-checkpoint";
  j["schema_version"] = kCheckpointSchemaVersion;
  j["role"] = params.role == AgentRole::qbot ? "qbot" : "abot";
  j["gate_order"] = "ifco";
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["dims"] = {{"vocab", params.dims.vocab},
               {"embed", params.dims.embed},
               {"hidden", params.dims.hidden},
               {"feature", params.dims.feature}};
  auto& tensors = j["tensors"] = nlohmann::json::object();
  params.for_each_tensor([&](const char* name, const Mat& m) {
    if (m.size() == 0) return;
    tensors[name] = {{"shape", {m.rows, m.cols}},
                     {"data", detail::base64_encode(detail::doubles_to_le_bytes(m.a))}};
  });
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw DataError("write failed: " + path.string());
}

struct CheckpointInfo {
  std::string config_hash;
  uint64_t seed = 0;
};

inline AgentParams load_checkpoint(const std::filesystem::path& path,
                                   CheckpointInfo* info = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path.string() + ": parse error: " + e.what());
  }
  try {
    if (j.value("kind", "") != "selftalk-checkpoint")
      throw DataError(path.string() + ": not a checkpoint file");
    if (j.value("schema_version", -1) != kCheckpointSchemaVersion)
      throw DataError(path.string() + ": unsupported schema_version");
    const std::string role_str = j.at("role").get<std::string>();
    const AgentRole role = role_str == "qbot" ? AgentRole::qbot : AgentRole::abot;
    ModelDims dims{.vocab = j.at("dims").at("vocab").get<int>(),
                   .embed = j.at("dims").at("embed").get<int>(),
                   .hidden = j.at("dims").at("hidden").get<int>(),
                   .feature = j.at("dims").at("feature").get<int>()};
    AgentParams params = AgentParams::make(role, dims);
    const auto& tensors = j.at("tensors");
    params.for_each_tensor([&](const char* name, Mat& m) {
      if (m.size() == 0) return;
      if (!tensors.contains(name))
        throw DataError(path.string() + ": missing tensor '" + name + "'");
      const auto& t = tensors.at(name);
      const auto shape = t.at("shape").get<std::vector<int>>();
      if (shape.size() != 2 || shape[0] != m.rows || shape[1] != m.cols)
        throw DataError(path.string() + ": tensor '" + name + "' has wrong shape");
      auto values =
          detail::le_bytes_to_doubles(detail::base64_decode(t.at("data").get<std::string>()));
      if (values.size() != m.size())
        throw DataError(path.string() + ": tensor '" + name + "' has wrong payload size");
      m.a = std::move(values);
    });
    if (info) {
      info->config_hash = j.value("config_hash", "");
      info->seed = j.value("seed", uint64_t(0));
    }
    return params;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": malformed checkpoint: " + e.what());
  }
}

}  // namespace selftalk::agents
