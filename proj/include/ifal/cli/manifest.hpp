// Copyright 2026 The IFAL Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include <json.hpp>

namespace ifal::cli {

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

// ISO-8601 UTC, second resolution.
std::string utc_timestamp();

// One per command invocation. `inputs` and `outputs` map flag names to paths
// relative to the workdir; together with `config` they are enough to rerun the
// command. Hashes are keyed by the same relative paths.
struct RunManifest {
  std::string command;
  std::map<std::string, std::string> inputs;
  std::map<std::string, std::string> outputs;
  std::map<std::string, bool> switches;  // boolean flags that are not part of the config
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json seeds = nlohmann::json::object();
  std::map<std::string, std::string> input_hashes;
  std::map<std::string, std::string> checkpoint_hashes;
  std::map<std::string, std::string> artifacts;
  std::string started_at;
  std::string finished_at;
  std::string status = "ok";
};

void to_json(nlohmann::json& j, const RunManifest& m);
void from_json(const nlohmann::json& j, RunManifest& m);

RunManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const RunManifest& m);

}  // namespace ifal::cli
