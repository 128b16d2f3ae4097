// Copyright 2026 The IFAL Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ifal/cli/manifest.hpp"
#include "ifal/diffusion/pipeline.hpp"

namespace ifal::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNumeric = 3;

// Environment variable that replaces the configured seed when no --seed flag is given.
inline constexpr const char* kSeedEnv = "IFAL_SEED";

struct GenDataOptions {
  std::optional<std::string> config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

struct TrainOptions {
  std::optional<std::string> config;
  std::string corpus;
  std::string split = "train";
  std::string out;
  std::optional<std::string> base;  // base run directory; adapter training only
  std::optional<std::size_t> steps;
  std::optional<std::uint64_t> seed;
  std::optional<double> lr;
  bool no_appearance_tokens = false;
  bool no_eot = false;
};

struct SampleOptions {
  std::optional<std::string> config;
  std::string run;
  std::string layout;
  std::string out;
  std::optional<double> cfg_scale;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
  std::optional<std::string> dump_latents;
  std::optional<std::string> dump_ism;
  std::optional<std::string> manifest;
};

struct EvalOptions {
  std::optional<std::string> config;
  std::optional<std::string> run;
  std::string corpus;
  std::string split = "eval";
  std::string out;
  std::optional<double> cfg_scale;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
  std::optional<std::size_t> limit;
  std::optional<std::string> verifier;
  bool ground_truth = false;
};

struct Context {
  std::filesystem::path workdir = ".";
  bool use_env_seed = true;
  std::ostream* log = nullptr;  // progress and per-sample failures
};

// Each returns the manifest it wrote. Errors propagate as exceptions; `run`
// maps them to exit codes.
RunManifest cmd_gen_data(const Context& ctx, const GenDataOptions& opt);
RunManifest cmd_pretrain(const Context& ctx, const TrainOptions& opt);
RunManifest cmd_train_adapter(const Context& ctx, const TrainOptions& opt);
RunManifest cmd_sample(const Context& ctx, const SampleOptions& opt);
RunManifest cmd_eval(const Context& ctx, const EvalOptions& opt);

struct ReproduceResult {
  RunManifest rerun;
  std::vector<std::string> mismatches;  // empty when every artifact and checkpoint hash agrees
};

// Reruns the command recorded in `manifest_path` from its config snapshot,
// with every output placed under `out_root`, and compares hashes.
ReproduceResult cmd_reproduce(const Context& ctx, const std::filesystem::path& manifest_path,
                              const std::filesystem::path& out_root);

// Rebuilds the model of a pretrain or train-adapter run directory.
std::unique_ptr<diffusion::Pipeline> load_run(const std::filesystem::path& workdir, const std::string& run_dir);

// Full command line, args[0] being the program name. Writes messages to `out`/`err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ifal::cli
