// Copyright 2026 The IFAL Authors
// SPDX-License-Identifier: Apache-2.0

#include "ifal/cli/commands.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include "ifal/data/synthetic.hpp"
#include "ifal/errors.hpp"
#include "ifal/eval/detector.hpp"
#include "ifal/eval/metrics.hpp"
#include "ifal/nn/checkpoint.hpp"

namespace ifal::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kCheckpointFile = "checkpoint.ckpt";
constexpr const char* kModelFile = "model.json";
constexpr const char* kLossFile = "loss.jsonl";
constexpr const char* kManifestFile = "manifest.json";
constexpr const char* kDiagnosticFile = "diagnostic.json";

fs::path resolve(const Context& ctx, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : ctx.workdir / path;
}

json read_json(const fs::path& path) {
  const std::string bytes = nn::read_file_bytes(path);
  try {
    return json::parse(bytes);
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) { nn::write_file_bytes(path, j.dump(2) + "\n"); }

// Converts a config section, reporting the section name on type errors.
template <typename T>
T section(const json& root, const char* key) {
  if (!root.contains(key)) return T{};
  try {
    return root.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config.") + key + ": " + e.what());
  }
}

json load_config(const Context& ctx, const std::optional<std::string>& path) {
  if (!path) return json::object();
  json j = read_json(resolve(ctx, *path));
  if (!j.is_object()) throw ValidationError("config: top level must be an object");
  return j;
}

std::optional<std::uint64_t> env_seed(const Context& ctx) {
  if (!ctx.use_env_seed) return std::nullopt;
  const char* v = std::getenv(kSeedEnv);
  if (!v || !*v) return std::nullopt;
  char* end = nullptr;
  const unsigned long long s = std::strtoull(v, &end, 10);
  if (*end != '\0') throw ValidationError(std::string(kSeedEnv) + " must be a non-negative integer");
  return s;
}

std::uint64_t pick_seed(const Context& ctx, std::optional<std::uint64_t> flag, std::uint64_t configured) {
  if (flag) return *flag;
  if (auto e = env_seed(ctx)) return *e;
  return configured;
}

void log(const Context& ctx, const std::string& msg) {
  if (ctx.log) *ctx.log << msg << '\n';
}

// Every regular file below `root`, keyed by its path relative to the workdir.
void hash_tree(const Context& ctx, const std::string& root_rel, const std::string& skip,
               std::map<std::string, std::string>& out) {
  const fs::path root = resolve(ctx, root_rel);
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file() || e.path().filename() == skip) continue;
    const std::string rel = (fs::path(root_rel) / fs::relative(e.path(), root)).generic_string();
    out[rel] = sha256_file(e.path());
  }
}

std::string join(const std::string& dir, const char* file) { return (fs::path(dir) / file).generic_string(); }

json model_seeds(const diffusion::ModelConfig& m) {
  return {{"text", m.text.seed}, {"denoiser", m.denoiser.seed}, {"codec", m.codec_seed}};
}

json tensor_json(const nn::Tensor& t) { return {{"shape", t.shape()}, {"data", t.data()}}; }

}  // namespace

RunManifest cmd_gen_data(const Context& ctx, const GenDataOptions& opt) {
  RunManifest m;
  m.command = "gen-data";
  m.started_at = utc_timestamp();
  const json raw = load_config(ctx, opt.config);
  data::CorpusConfig cfg;
  try {
    cfg = raw.get<data::CorpusConfig>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  cfg.seed = pick_seed(ctx, opt.seed, cfg.seed);
  cfg.validate();
  m.config = cfg;
  m.seeds = {{"corpus", cfg.seed}};
  m.outputs["out"] = opt.out;
  data::write_corpus(cfg, resolve(ctx, opt.out));
  hash_tree(ctx, opt.out, kManifestFile, m.artifacts);
  m.finished_at = utc_timestamp();
  save_manifest(resolve(ctx, join(opt.out, kManifestFile)), m);
  return m;
}

namespace {

struct TrainSetup {
  RunManifest manifest;
  fs::path out;
  std::vector<diffusion::StepLog> logs;
};

// Streams the loss log and, on a numeric failure, leaves a diagnostic dump
// next to it before rethrowing.
void run_training(const Context& ctx, TrainSetup& setup, diffusion::Pipeline& p, const adapter::IFAdapter* ad,
                  const std::vector<diffusion::TrainExample>& data, const diffusion::TrainConfig& tc) {
  std::ofstream loss(setup.out / kLossFile, std::ios::binary | std::ios::trunc);
  if (!loss) throw FormatError("cannot write " + (setup.out / kLossFile).string());
  const std::size_t every = std::max<std::size_t>(1, tc.steps / 20);
  try {
    diffusion::train(p.store(), p.denoiser(), ad, p.schedule(), data, p.null_condition(), tc,
                     [&](const diffusion::StepLog& s) {
                       loss << json{{"step", s.step}, {"loss", s.loss}, {"lambda_value", s.lambda}}.dump() << '\n';
                       loss.flush();
                       setup.logs.push_back(s);
                       if (s.step % every == 0 || s.step == tc.steps) {
                         log(ctx, setup.manifest.command + " step " + std::to_string(s.step) + " loss " +
                                      std::to_string(s.loss));
                       }
                     });
  } catch (const NumericError& e) {
    json diag = {{"command", setup.manifest.command}, {"error", e.what()}, {"config", setup.manifest.config}};
    diag["last_logged_step"] =
        setup.logs.empty() ? json(nullptr)
                           : json{{"step", setup.logs.back().step}, {"loss", setup.logs.back().loss},
                                  {"lambda_value", setup.logs.back().lambda}};
    write_json(setup.out / kDiagnosticFile, diag);
    setup.manifest.status = "numeric_failure";
    setup.manifest.artifacts[join(setup.manifest.outputs.at("out"), kDiagnosticFile)] =
        sha256_file(setup.out / kDiagnosticFile);
    setup.manifest.finished_at = utc_timestamp();
    save_manifest(setup.out / kManifestFile, setup.manifest);
    throw;
  }
}

void finish_training(TrainSetup& setup) {
  const std::string out = setup.manifest.outputs.at("out");
  for (const char* f : {kCheckpointFile, kModelFile, kLossFile}) {
    setup.manifest.artifacts[join(out, f)] = sha256_file(setup.out / f);
  }
  setup.manifest.checkpoint_hashes["output"] = setup.manifest.artifacts.at(join(out, kCheckpointFile));
  setup.manifest.finished_at = utc_timestamp();
  save_manifest(setup.out / kManifestFile, setup.manifest);
}

diffusion::TrainConfig train_config(const Context& ctx, const json& raw, const TrainOptions& opt) {
  auto tc = section<diffusion::TrainConfig>(raw, "train");
  if (opt.steps) tc.steps = *opt.steps;
  if (opt.lr) tc.lr = *opt.lr;
  tc.seed = pick_seed(ctx, opt.seed, tc.seed);
  tc.validate();
  return tc;
}

}  // namespace

RunManifest cmd_pretrain(const Context& ctx, const TrainOptions& opt) {
  TrainSetup setup;
  RunManifest& m = setup.manifest;
  m.command = "pretrain";
  m.started_at = utc_timestamp();
  const json raw = load_config(ctx, opt.config);
  const auto model = section<diffusion::ModelConfig>(raw, "model");
  const auto tc = train_config(ctx, raw, opt);
  m.config = {{"model", model}, {"train", tc}, {"split", opt.split}};
  m.seeds = model_seeds(model);
  m.seeds["train"] = tc.seed;
  m.inputs["corpus"] = opt.corpus;
  m.outputs["out"] = opt.out;

  diffusion::Pipeline p(model);
  const auto data = p.load_split(resolve(ctx, opt.corpus), opt.split);
  m.input_hashes[join(join(opt.corpus, opt.split.c_str()), "manifest.jsonl")] =
      sha256_file(resolve(ctx, opt.corpus) / opt.split / "manifest.jsonl");
  setup.out = resolve(ctx, opt.out);
  fs::create_directories(setup.out);
  write_json(setup.out / kModelFile, {{"model", model}});
  log(ctx, "pretrain: " + std::to_string(data.size()) + " examples, " + std::to_string(tc.steps) + " steps");
  run_training(ctx, setup, p, nullptr, data, tc);
  nn::write_checkpoint(setup.out / kCheckpointFile, p.store(), diffusion::ToyDenoiser::kPrefix);
  finish_training(setup);
  return m;
}

RunManifest cmd_train_adapter(const Context& ctx, const TrainOptions& opt) {
  TrainSetup setup;
  RunManifest& m = setup.manifest;
  m.command = "train-adapter";
  m.started_at = utc_timestamp();
  if (!opt.base) throw ValidationError("train-adapter needs --base");
  const json raw = load_config(ctx, opt.config);
  auto ac = section<adapter::AdapterConfig>(raw, "adapter");
  if (opt.no_appearance_tokens) ac.use_appearance_tokens = false;
  if (opt.no_eot) ac.use_eot = false;
  const auto tc = train_config(ctx, raw, opt);

  const fs::path base_dir = resolve(ctx, *opt.base);
  const auto model = section<diffusion::ModelConfig>(read_json(base_dir / kModelFile), "model");
  const std::string base_ckpt_rel = join(*opt.base, kCheckpointFile);
  const std::string base_hash = sha256_file(base_dir / kCheckpointFile);

  m.config = {{"adapter", ac}, {"train", tc}, {"split", opt.split}};
  m.seeds = model_seeds(model);
  m.seeds["adapter"] = ac.seed;
  m.seeds["train"] = tc.seed;
  m.inputs = {{"corpus", opt.corpus}, {"base", *opt.base}};
  m.outputs["out"] = opt.out;
  m.input_hashes[base_ckpt_rel] = base_hash;
  m.checkpoint_hashes["base_input"] = base_hash;

  diffusion::Pipeline p(model);
  nn::restore(p.store(), nn::read_checkpoint(base_dir / kCheckpointFile));
  p.store().set_frozen_prefix(diffusion::ToyDenoiser::kPrefix, true);
  const auto& ad = p.attach_adapter(ac);
  const auto data = p.load_split(resolve(ctx, opt.corpus), opt.split);
  m.input_hashes[join(join(opt.corpus, opt.split.c_str()), "manifest.jsonl")] =
      sha256_file(resolve(ctx, opt.corpus) / opt.split / "manifest.jsonl");

  setup.out = resolve(ctx, opt.out);
  fs::create_directories(setup.out);
  write_json(setup.out / kModelFile,
             {{"model", model}, {"adapter", ac}, {"base_run", *opt.base}, {"base_checkpoint_sha256", base_hash}});
  log(ctx, "train-adapter: " + std::to_string(data.size()) + " examples, " + std::to_string(tc.steps) + " steps, " +
               std::to_string(p.store().scalar_count("adapter/")) + " trainable scalars");
  run_training(ctx, setup, p, &ad, data, tc);
  nn::write_checkpoint(setup.out / kCheckpointFile, p.store(), "adapter/");
  // Base bytes after training, with the freeze flags the base was saved with.
  p.store().set_frozen_prefix(diffusion::ToyDenoiser::kPrefix, false);
  m.checkpoint_hashes["base_after"] = sha256_hex(nn::encode_checkpoint(p.store(), diffusion::ToyDenoiser::kPrefix));
  finish_training(setup);
  return m;
}

std::unique_ptr<diffusion::Pipeline> load_run(const fs::path& workdir, const std::string& run_dir) {
  const Context ctx{workdir};
  const fs::path dir = resolve(ctx, run_dir);
  const json j = read_json(dir / kModelFile);
  auto p = std::make_unique<diffusion::Pipeline>(section<diffusion::ModelConfig>(j, "model"));
  if (!j.contains("adapter")) {
    nn::restore(p->store(), nn::read_checkpoint(dir / kCheckpointFile));
    return p;
  }
  const fs::path base = resolve(ctx, j.at("base_run").get<std::string>()) / kCheckpointFile;
  if (sha256_file(base) != j.at("base_checkpoint_sha256").get<std::string>()) {
    throw ValidationError("base checkpoint " + base.string() + " does not match the hash recorded by " + run_dir);
  }
  nn::restore(p->store(), nn::read_checkpoint(base));
  p->attach_adapter(section<adapter::AdapterConfig>(j, "adapter"));
  nn::restore(p->store(), nn::read_checkpoint(dir / kCheckpointFile));
  return p;
}

namespace {

diffusion::SampleConfig sample_config(const Context& ctx, const json& raw, std::optional<double> cfg_scale,
                                      std::optional<std::uint64_t> seed, std::optional<std::size_t> steps) {
  auto sc = section<diffusion::SampleConfig>(raw, "sample");
  if (cfg_scale) sc.cfg_scale = *cfg_scale;
  if (steps) sc.steps = *steps;
  sc.seed = pick_seed(ctx, seed, sc.seed);
  sc.validate();
  return sc;
}

void record_run_inputs(const Context& ctx, RunManifest& m, const std::string& run) {
  m.inputs["run"] = run;
  const fs::path dir = resolve(ctx, run);
  m.input_hashes[join(run, kCheckpointFile)] = sha256_file(dir / kCheckpointFile);
  m.input_hashes[join(run, kModelFile)] = sha256_file(dir / kModelFile);
  m.checkpoint_hashes["run"] = m.input_hashes[join(run, kCheckpointFile)];
  const json j = read_json(dir / kModelFile);
  if (j.contains("base_checkpoint_sha256")) m.checkpoint_hashes["base"] = j.at("base_checkpoint_sha256");
}

}  // namespace

RunManifest cmd_sample(const Context& ctx, const SampleOptions& opt) {
  RunManifest m;
  m.command = "sample";
  m.started_at = utc_timestamp();
  const json raw = load_config(ctx, opt.config);
  const auto sc = sample_config(ctx, raw, opt.cfg_scale, opt.seed, opt.steps);
  m.config = {{"sample", sc}};
  m.seeds = {{"sample", sc.seed}};
  const layout::LayoutSpec spec = layout::load_layout(resolve(ctx, opt.layout));
  m.inputs["layout"] = opt.layout;
  m.input_hashes[opt.layout] = sha256_file(resolve(ctx, opt.layout));
  record_run_inputs(ctx, m, opt.run);
  m.outputs["out"] = opt.out;
  if (opt.dump_latents) m.outputs["dump-latents"] = *opt.dump_latents;
  if (opt.dump_ism) m.outputs["dump-ism"] = *opt.dump_ism;
  const std::string manifest_rel = opt.manifest ? *opt.manifest : opt.out + ".manifest.json";
  m.outputs["manifest"] = manifest_rel;

  const auto p = load_run(ctx.workdir, opt.run);
  diffusion::SampleTrace trace;
  const nn::Tensor z = p->sample(spec, sc, &trace);
  const fs::path out = resolve(ctx, opt.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  data::write_png(p->codec().decode(z), out);
  m.artifacts[opt.out] = sha256_file(out);

  if (opt.dump_latents) {
    json steps = json::array();
    for (const auto& t : trace.latents) steps.push_back(t.data());
    write_json(resolve(ctx, *opt.dump_latents), {{"shape", z.shape()}, {"steps", steps}});
    m.artifacts[*opt.dump_latents] = sha256_file(resolve(ctx, *opt.dump_latents));
  }
  if (opt.dump_ism) {
    json sites = json::array();
    for (const auto& r : trace.final_ism) {
      json maps = json::array();
      for (const auto& s : r.instance_maps) maps.push_back(tensor_json(s));
      sites.push_back({{"site", r.site}, {"ism", tensor_json(r.ism)}, {"instance_maps", maps},
                       {"weights", tensor_json(r.weights)}, {"area_gates", r.gates}});
    }
    write_json(resolve(ctx, *opt.dump_ism), {{"sites", sites}});
    m.artifacts[*opt.dump_ism] = sha256_file(resolve(ctx, *opt.dump_ism));
  }
  m.finished_at = utc_timestamp();
  save_manifest(resolve(ctx, manifest_rel), m);
  return m;
}

namespace {

eval::Verifier verifier_named(const std::string& name) {
  if (name == "synthetic") return eval::synthetic_verifier();
  if (name == "always-true") return eval::always_true_verifier();
  if (name == "always-false") return eval::always_false_verifier();
  throw ValidationError("config.verifier: unknown verifier '" + name + "'");
}

}  // namespace

RunManifest cmd_eval(const Context& ctx, const EvalOptions& opt) {
  RunManifest m;
  m.command = "eval";
  m.started_at = utc_timestamp();
  const json raw = load_config(ctx, opt.config);
  const auto sc = sample_config(ctx, raw, opt.cfg_scale, opt.seed, opt.steps);
  const std::size_t limit = opt.limit ? *opt.limit : raw.value("limit", std::size_t{0});
  const double threshold = raw.value("iou_threshold", 0.5);
  const std::string verifier_name = opt.verifier ? *opt.verifier : raw.value("verifier", std::string("synthetic"));
  const json fcfg = raw.value("features", json::object());
  const eval::FeatureExtractor features(fcfg.value("dim", std::size_t{32}), fcfg.value("grid", std::size_t{8}),
                                        fcfg.value("seed", std::uint64_t{4242}));
  if (!(threshold > 0.0 && threshold <= 1.0)) throw ValidationError("config.iou_threshold must lie in (0, 1]");
  const eval::Verifier verifier = verifier_named(verifier_name);
  m.config = {{"sample", sc},
              {"limit", limit},
              {"iou_threshold", threshold},
              {"verifier", verifier_name},
              {"features", {{"dim", features.dim()}, {"grid", fcfg.value("grid", std::size_t{8})},
                            {"seed", fcfg.value("seed", std::uint64_t{4242})}}},
              {"split", opt.split}};
  m.switches["ground-truth"] = opt.ground_truth;
  m.seeds = {{"sample", sc.seed}};
  m.inputs["corpus"] = opt.corpus;
  m.outputs["out"] = opt.out;
  if (!opt.ground_truth && !opt.run) throw ValidationError("eval needs --run unless --ground-truth is given");

  const fs::path corpus = resolve(ctx, opt.corpus);
  auto entries = data::read_manifest(corpus, opt.split);
  m.input_hashes[join(join(opt.corpus, opt.split.c_str()), "manifest.jsonl")] =
      sha256_file(corpus / opt.split / "manifest.jsonl");
  if (limit > 0 && entries.size() > limit) entries.resize(limit);
  if (entries.empty()) throw ValidationError("split '" + opt.split + "' has no samples");

  std::unique_ptr<diffusion::Pipeline> p;
  if (!opt.ground_truth) {
    record_run_inputs(ctx, m, *opt.run);
    p = load_run(ctx.workdir, *opt.run);
  }

  std::vector<eval::EvalSample> samples;
  std::vector<data::Image> references;
  std::vector<std::size_t> failed;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    eval::EvalSample s;
    const layout::LayoutSpec spec = layout::load_layout(corpus / entries[i].layout_path);
    for (const auto& inst : spec.instances) s.gts.push_back({inst.bbox, inst.description});
    references.push_back(data::read_png(corpus / entries[i].image_path));
    try {
      if (opt.ground_truth) {
        s.image = references.back();
      } else {
        diffusion::SampleConfig per = sc;
        per.seed = nn::derive_seed(sc.seed, i);
        s.image = p->codec().decode(p->sample(spec, per));
      }
      s.detections = eval::detect(s.image);
    } catch (const std::exception& e) {
      log(ctx, "eval: sample " + std::to_string(i) + " failed: " + e.what());
      failed.push_back(i);
      s.image = data::Image(references.back().width(), references.back().height());
      s.detections.clear();
    }
    samples.push_back(std::move(s));
    if (ctx.log && (i + 1) % 25 == 0) log(ctx, "eval: " + std::to_string(i + 1) + "/" + std::to_string(entries.size()));
  }

  eval::IfsResult ifs = eval::ifs_rate(samples, verifier, threshold);
  for (auto& rec : ifs.records) {
    if (std::find(failed.begin(), failed.end(), rec.sample) != failed.end()) rec.verdict = "error";
  }
  eval::MetricsReport report;
  report.ifs_rate = ifs.rate;
  report.ap50 = eval::average_precision(samples, threshold);
  report.n = ifs.total;
  report.per_instance = std::move(ifs.records);
  std::vector<data::Image> generated;
  for (const auto& s : samples) generated.push_back(s.image);
  json frechet = nullptr;
  if (samples.size() >= 2) {
    const auto a = eval::feature_stats(features.batch(generated));
    const auto b = eval::feature_stats(features.batch(references));
    report.frechet = eval::frechet_distance(a.mean, a.cov, b.mean, b.cov);
    frechet = report.frechet;
  }
  json out = eval::report_to_json(report);
  out["frechet"] = frechet;
  out["split"] = opt.split;
  out["source"] = opt.ground_truth ? "ground_truth" : "samples";
  out["verifier"] = verifier_name;
  out["iou_threshold"] = threshold;
  out["failed_samples"] = failed;
  const fs::path out_path = resolve(ctx, opt.out);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  write_json(out_path, out);
  m.artifacts[opt.out] = sha256_file(out_path);
  m.finished_at = utc_timestamp();
  save_manifest(resolve(ctx, opt.out + ".manifest.json"), m);
  log(ctx, "eval: ifs_rate " + std::to_string(report.ifs_rate) + " ap50 " + std::to_string(report.ap50));
  return m;
}

namespace {

std::string rebase(const fs::path& root, const std::string& rel) {
  return (root / fs::path(rel).relative_path()).generic_string();
}

}  // namespace

ReproduceResult cmd_reproduce(const Context& ctx, const fs::path& manifest_path, const fs::path& out_root) {
  const RunManifest orig = load_manifest(resolve(ctx, manifest_path.string()));
  Context quiet = ctx;
  quiet.use_env_seed = false;
  const fs::path cfg_dir = resolve(ctx, out_root.string());
  fs::create_directories(cfg_dir);
  const fs::path cfg_path = cfg_dir / "reproduce_config.json";
  write_json(cfg_path, orig.config);
  const std::string cfg = cfg_path.string();
  auto in = [&](const char* k) { return orig.inputs.at(k); };
  auto out = [&](const char* k) { return rebase(out_root, orig.outputs.at(k)); };

  ReproduceResult r;
  if (orig.command == "gen-data") {
    r.rerun = cmd_gen_data(quiet, {cfg, out("out"), std::nullopt});
  } else if (orig.command == "pretrain" || orig.command == "train-adapter") {
    TrainOptions t;
    t.config = cfg;
    t.corpus = in("corpus");
    t.split = orig.config.value("split", std::string("train"));
    t.out = out("out");
    if (orig.command == "pretrain") {
      r.rerun = cmd_pretrain(quiet, t);
    } else {
      t.base = in("base");
      r.rerun = cmd_train_adapter(quiet, t);
    }
  } else if (orig.command == "sample") {
    SampleOptions s;
    s.config = cfg;
    s.run = in("run");
    s.layout = in("layout");
    s.out = out("out");
    if (orig.outputs.count("dump-latents")) s.dump_latents = out("dump-latents");
    if (orig.outputs.count("dump-ism")) s.dump_ism = out("dump-ism");
    s.manifest = out("manifest");
    r.rerun = cmd_sample(quiet, s);
  } else if (orig.command == "eval") {
    EvalOptions e;
    e.config = cfg;
    if (orig.inputs.count("run")) e.run = in("run");
    e.corpus = in("corpus");
    e.split = orig.config.value("split", std::string("eval"));
    e.out = out("out");
    e.ground_truth = orig.switches.count("ground-truth") && orig.switches.at("ground-truth");
    r.rerun = cmd_eval(quiet, e);
  } else {
    throw ValidationError("manifest command '" + orig.command + "' cannot be reproduced");
  }

  for (const auto& [path, hash] : orig.artifacts) {
    const auto it = r.rerun.artifacts.find(rebase(out_root, path));
    if (it == r.rerun.artifacts.end()) {
      r.mismatches.push_back(path + ": missing in rerun");
    } else if (it->second != hash) {
      r.mismatches.push_back(path + ": hash differs");
    }
  }
  if (r.rerun.artifacts.size() != orig.artifacts.size()) r.mismatches.push_back("artifact count differs");
  for (const auto& [name, hash] : orig.checkpoint_hashes) {
    const auto it = r.rerun.checkpoint_hashes.find(name);
    if (it == r.rerun.checkpoint_hashes.end() || it->second != hash) {
      r.mismatches.push_back("checkpoint hash '" + name + "' differs");
    }
  }
  return r;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Instance-feature layout-to-image toolkit", "ifal"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string workdir = ".";
  bool quiet = false;
  app.add_option("--workdir", workdir, "Root that every relative path is resolved against");
  app.add_flag("-q,--quiet", quiet, "Suppress progress messages");

  GenDataOptions gen;
  auto* c_gen = app.add_subcommand("gen-data", "Generate the synthetic shapes corpus");
  c_gen->add_option("--config", gen.config, "Corpus config JSON");
  c_gen->add_option("--out", gen.out, "Corpus directory")->required();
  c_gen->add_option("--seed", gen.seed, "Corpus seed");

  TrainOptions pre;
  auto* c_pre = app.add_subcommand("pretrain", "Train the base denoiser (checkpoint prefix base/)");
  TrainOptions ada;
  auto* c_ada = app.add_subcommand("train-adapter", "Train the adapter on a frozen base (prefix adapter/)");
  for (auto [cmd, o] : {std::pair{c_pre, &pre}, std::pair{c_ada, &ada}}) {
    cmd->add_option("--config", o->config, "Training config JSON");
    cmd->add_option("--corpus", o->corpus, "Corpus directory")->required();
    cmd->add_option("--split", o->split, "Corpus split");
    cmd->add_option("--out", o->out, "Run directory")->required();
    cmd->add_option("--steps", o->steps, "Optimizer steps");
    cmd->add_option("--seed", o->seed, "Training seed");
    cmd->add_option("--lr", o->lr, "Learning rate");
  }
  c_ada->add_option("--base", ada.base, "Base run directory")->required();
  c_ada->add_flag("--no-appearance-tokens", ada.no_appearance_tokens, "Ablation: grounding token only");
  c_ada->add_flag("--no-eot", ada.no_eot, "Ablation: appearance tokens only");

  SampleOptions smp;
  auto* c_smp = app.add_subcommand("sample", "Generate one image from a layout");
  c_smp->add_option("--config", smp.config, "Sampling config JSON");
  c_smp->add_option("--run", smp.run, "Run directory holding the checkpoint")->required();
  c_smp->add_option("--layout", smp.layout, "Layout JSON")->required();
  c_smp->add_option("--out", smp.out, "Output PNG")->required();
  c_smp->add_option("--cfg-scale", smp.cfg_scale, "Guidance scale");
  c_smp->add_option("--seed", smp.seed, "Sampling seed");
  c_smp->add_option("--steps", smp.steps, "Sampling steps");
  c_smp->add_option("--dump-latents", smp.dump_latents, "Write every latent of the chain as JSON");
  c_smp->add_option("--dump-ism", smp.dump_ism, "Write D and the per-instance maps as JSON");
  c_smp->add_option("--manifest", smp.manifest, "Manifest path (default <out>.manifest.json)");

  EvalOptions ev;
  auto* c_ev = app.add_subcommand("eval", "Sample the eval split and score it");
  c_ev->add_option("--config", ev.config, "Eval config JSON");
  c_ev->add_option("--run", ev.run, "Run directory holding the checkpoint");
  c_ev->add_option("--corpus", ev.corpus, "Corpus directory")->required();
  c_ev->add_option("--split", ev.split, "Corpus split");
  c_ev->add_option("--out", ev.out, "Report JSON")->required();
  c_ev->add_option("--cfg-scale", ev.cfg_scale, "Guidance scale");
  c_ev->add_option("--seed", ev.seed, "Sampling seed");
  c_ev->add_option("--steps", ev.steps, "Sampling steps");
  c_ev->add_option("--limit", ev.limit, "Evaluate only the first N samples");
  c_ev->add_option("--verifier", ev.verifier, "synthetic, always-true or always-false");
  c_ev->add_flag("--ground-truth", ev.ground_truth, "Score the corpus images themselves");

  std::string rep_manifest, rep_out;
  auto* c_rep = app.add_subcommand("reproduce", "Rerun a manifest and compare output hashes");
  c_rep->add_option("--manifest", rep_manifest, "Manifest to replay")->required();
  c_rep->add_option("--out-root", rep_out, "Directory receiving the rerun's outputs")->required();

  std::vector<std::string> rev(args.rbegin(), args.rend());
  if (!rev.empty()) rev.pop_back();
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  Context ctx{workdir, true, quiet ? nullptr : &err};
  try {
    if (c_gen->parsed()) {
      const auto m = cmd_gen_data(ctx, gen);
      out << "corpus written to " << gen.out << " (" << m.artifacts.size() << " files)\n";
    } else if (c_pre->parsed()) {
      cmd_pretrain(ctx, pre);
      out << "base checkpoint written to " << pre.out << '\n';
    } else if (c_ada->parsed()) {
      cmd_train_adapter(ctx, ada);
      out << "adapter checkpoint written to " << ada.out << '\n';
    } else if (c_smp->parsed()) {
      cmd_sample(ctx, smp);
      out << "image written to " << smp.out << '\n';
    } else if (c_ev->parsed()) {
      cmd_eval(ctx, ev);
      out << "report written to " << ev.out << '\n';
    } else if (c_rep->parsed()) {
      const auto r = cmd_reproduce(ctx, rep_manifest, rep_out);
      for (const auto& msg : r.mismatches) err << "mismatch: " << msg << '\n';
      out << (r.mismatches.empty() ? "reproduced bitwise\n" : "reproduction differs\n");
      return r.mismatches.empty() ? kExitOk : kExitFailure;
    }
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const ValidationError& e) {
    err << "invalid input: " << e.what() << '\n';
    return kExitValidation;
  } catch (const FormatError& e) {
    err << "invalid input: " << e.what() << '\n';
    return kExitValidation;
  } catch (const DimensionError& e) {
    err << "invalid input: " << e.what() << '\n';
    return kExitValidation;
  } catch (const UsageError& e) {
    err << "invalid input: " << e.what() << '\n';
    return kExitValidation;
  } catch (const json::exception& e) {
    err << "invalid input: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace ifal::cli
