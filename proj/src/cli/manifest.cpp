// Copyright 2026 The IFAL Authors
// SPDX-License-Identifier: Apache-2.0

#include "ifal/cli/manifest.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <ctime>
#include <fstream>
#include <memory>

#include "ifal/errors.hpp"
#include "ifal/nn/checkpoint.hpp"

namespace ifal::cli {

std::string sha256_hex(std::string_view bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw std::runtime_error("sha256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 15]);
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(nn::read_file_bytes(path)); }

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void to_json(nlohmann::json& j, const RunManifest& m) {
  j = {{"command", m.command},
       {"inputs", m.inputs},
       {"outputs", m.outputs},
       {"switches", m.switches},
       {"config", m.config},
       {"seeds", m.seeds},
       {"input_hashes", m.input_hashes},
       {"checkpoint_hashes", m.checkpoint_hashes},
       {"artifacts", m.artifacts},
       {"started_at", m.started_at},
       {"finished_at", m.finished_at},
       {"status", m.status}};
}

void from_json(const nlohmann::json& j, RunManifest& m) {
  m = RunManifest{};
  m.command = j.at("command").get<std::string>();
  m.inputs = j.value("inputs", m.inputs);
  m.outputs = j.value("outputs", m.outputs);
  m.switches = j.value("switches", m.switches);
  m.config = j.value("config", m.config);
  m.seeds = j.value("seeds", m.seeds);
  m.input_hashes = j.value("input_hashes", m.input_hashes);
  m.checkpoint_hashes = j.value("checkpoint_hashes", m.checkpoint_hashes);
  m.artifacts = j.value("artifacts", m.artifacts);
  m.started_at = j.value("started_at", "");
  m.finished_at = j.value("finished_at", "");
  m.status = j.value("status", "ok");
}

RunManifest load_manifest(const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(nn::read_file_bytes(path)).get<RunManifest>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("manifest " + path.string() + ": " + e.what());
  }
}

void save_manifest(const std::filesystem::path& path, const RunManifest& m) {
  nn::write_file_bytes(path, nlohmann::json(m).dump(2) + "\n");
}

}  // namespace ifal::cli
