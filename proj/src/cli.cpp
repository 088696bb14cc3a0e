// SPDX-License-Identifier: Apache-2.0

#include "dmgd/cli.hpp"

#include "dmgd/io.hpp"
#include "dmgd/metrics.hpp"
#include "dmgd/pipeline.hpp"
#include "dmgd/verify.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <optional>

#ifndef DMGD_VERSION
#define DMGD_VERSION "dev"
#endif

namespace dmgd {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string version_string() { return DMGD_VERSION; }

namespace {

// Seed stream of the default held-out set; matches make_experiment_data.
constexpr std::uint64_t kHeldoutStream = 0x5eed;

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

fs::path default_out_dir() {
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
  return "dmgd_out";
}

/// Files written by one command; removed again unless the command commits.
class OutputSet {
 public:
  explicit OutputSet(fs::path dir) : dir_(std::move(dir)) {}
  OutputSet(const OutputSet&) = delete;
  OutputSet& operator=(const OutputSet&) = delete;
  ~OutputSet() {
    if (committed_) return;
    std::error_code ec;
    for (const auto& p : written_) {
      fs::remove(p, ec);
      fs::remove(fs::path(p.string() + ".tmp"), ec);
    }
    if (created_dir_) fs::remove(dir_, ec);  // only succeeds when empty
  }

  fs::path write(const std::string& name, std::string_view text) {
    if (!fs::exists(dir_)) {
      fs::create_directories(dir_);
      created_dir_ = true;
    }
    const auto path = dir_ / name;
    written_.push_back(path);
    write_text_file(path, text);
    return path;
  }
  void commit() { committed_ = true; }

 private:
  fs::path dir_;
  std::vector<fs::path> written_;
  bool committed_ = false;
  bool created_dir_ = false;
};

struct ConfigInputs {
  std::string config_path;
  std::vector<std::string> sets;
  std::string seed, ipc, rho, beta_n, beta_s;
};

void add_config_options(CLI::App* cmd, ConfigInputs& in, bool require_config) {
  auto* opt = cmd->add_option("-c,--config", in.config_path, "Config file (key = value lines)");
  if (require_config) opt->required();
  cmd->add_option("--set", in.sets, "Override a config key: key=value (repeatable)");
  cmd->add_option("--seed", in.seed, "Override the seed");
}

void add_distill_overrides(CLI::App* cmd, ConfigInputs& in) {
  cmd->add_option("--ipc", in.ipc, "Override instances per class");
  cmd->add_option("--rho", in.rho, "Override the distribution-matching strength");
  cmd->add_option("--beta-n", in.beta_n, "Override the label noise weight");
  cmd->add_option("--beta-s", in.beta_s, "Override the other-class label weight");
}

void apply_overrides(ConfigEntries& entries, const ConfigInputs& in) {
  for (const auto& kv : in.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + kv + "'");
    entries[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  const std::pair<const char*, const std::string*> flags[] = {
      {"seed", &in.seed}, {"ipc", &in.ipc}, {"rho", &in.rho}, {"beta_n", &in.beta_n}, {"beta_s", &in.beta_s}};
  for (const auto& [key, value] : flags) {
    if (!value->empty()) entries[key] = *value;
  }
}

RunConfig load_config(const ConfigInputs& in, ConfigEntries base = {}) {
  if (!in.config_path.empty()) {
    for (auto& [k, v] : parse_config_entries(read_text_file(in.config_path))) base[k] = v;
  }
  apply_overrides(base, in);
  return build_run_config(base);
}

const LabeledMixture& require_mixture(const RunConfig& cfg) {
  if (!cfg.mixture) throw ConfigError("config does not define a mixture (dim and class.* keys)");
  return *cfg.mixture;
}

std::vector<std::vector<Point>> parse_grouped(std::string_view text, const fs::path& path, int classes,
                                              int expected_dim, const std::string& what) {
  int dim = 0;
  const auto samples = parse_labeled_csv(text, &dim);
  if (expected_dim > 0 && dim != expected_dim) {
    throw DataError(what + " " + path.string() + " has dimension " + std::to_string(dim) + ", expected " +
                    std::to_string(expected_dim));
  }
  return group_by_label(samples, classes);
}

std::vector<std::vector<Point>> read_grouped(const fs::path& path, int classes, int expected_dim,
                                             const std::string& what) {
  return parse_grouped(read_text_file(path), path, classes, expected_dim, what);
}

// ---- gen-target ----

int cmd_gen_target(const ConfigInputs& in, const std::string& out_path, std::ostream& out) {
  const auto cfg = load_config(in);
  const auto& mixture = require_mixture(cfg);
  const auto groups = sample_target(mixture, cfg.distill.n_target, cfg.distill.seed);
  const fs::path path(out_path);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_text_file(path, format_labeled_csv(LabeledSamples::from_groups(groups), mixture.dim()));
  out << "wrote " << cfg.distill.n_target * mixture.num_classes() << " samples to " << path.string() << '\n';
  return kExitOk;
}

// ---- distill ----

struct DistillInputs {
  ConfigInputs config;
  std::string target;
  std::string out_dir;
  std::string from_manifest;
  int jobs = 1;
};

int cmd_distill(DistillInputs in, std::ostream& out) {
  ConfigEntries base;
  std::optional<std::string> expected_target_hash;
  if (!in.from_manifest.empty()) {
    json manifest;
    try {
      manifest = json::parse(read_text_file(in.from_manifest));
      base = parse_config_entries(manifest.at("config").get<std::string>());
      if (in.target.empty()) in.target = manifest.at("target").at("path").get<std::string>();
      expected_target_hash = manifest.at("target").at("fnv1a").get<std::string>();
    } catch (const json::exception& e) {
      throw DataError("malformed manifest " + in.from_manifest + ": " + e.what());
    }
  } else if (in.config.config_path.empty()) {
    throw ConfigError("distill needs --config or --from-manifest");
  }
  if (in.target.empty()) throw ConfigError("distill needs --target");

  const auto started = utc_now();
  const auto cfg = load_config(in.config, base);
  const auto& mixture = require_mixture(cfg);
  const auto target_text = read_text_file(in.target);
  const auto target_hash = hex64(fnv1a(target_text));
  if (expected_target_hash && *expected_target_hash != target_hash) {
    throw DataError("target file " + in.target + " differs from the one recorded in the manifest");
  }
  const auto groups = parse_grouped(target_text, in.target, cfg.distill.num_classes, mixture.dim(), "target file");

  const auto result = distill_dataset(cfg.distill, mixture, groups, in.jobs);

  OutputSet outputs(in.out_dir.empty() ? default_out_dir() : fs::path(in.out_dir));
  const auto surrogate = outputs.write("surrogate.csv", format_surrogate_csv(result.dataset));
  const auto quantized = outputs.write("quantized.csv", format_quantized_csv(result.targets));
  const auto steps = outputs.write("steps.csv", format_step_log_csv(result.log));

  json manifest;
  manifest["command"] = "distill";
  manifest["version"] = version_string();
  manifest["seed"] = cfg.distill.seed;
  manifest["config_hash"] = hex64(result.dataset.config_hash);
  manifest["config"] = format_run_config(cfg);
  manifest["target"] = {{"path", fs::absolute(in.target).string()}, {"fnv1a", target_hash}};
  manifest["jobs"] = in.jobs;
  manifest["started_utc"] = started;
  manifest["finished_utc"] = utc_now();
  manifest["outputs"] = {{"surrogate", surrogate.string()}, {"quantized", quantized.string()}, {"steps", steps.string()}};
  const auto manifest_path = outputs.write("manifest.json", manifest.dump(2) + '\n');
  outputs.commit();

  out << "distilled " << result.dataset.total_size() << " samples (" << cfg.distill.num_classes << " classes x "
      << cfg.distill.ipc << ") into " << surrogate.string() << '\n'
      << "manifest: " << manifest_path.string() << '\n';
  return kExitOk;
}

// ---- eval ----

struct EvalInputs {
  ConfigInputs config;
  std::string surrogate;
  std::string target;
  std::string heldout;
  std::string out_dir;
};

int cmd_eval(const EvalInputs& in, std::ostream& out) {
  const auto started = utc_now();
  const auto cfg = load_config(in.config);
  const auto& mixture = require_mixture(cfg);
  const int classes = cfg.distill.num_classes;

  SurrogateDataset surrogate;
  surrogate.dim = mixture.dim();
  surrogate.seed = cfg.distill.seed;
  surrogate.per_class = read_grouped(in.surrogate, classes, mixture.dim(), "surrogate file");
  const auto real = read_grouped(in.target, classes, mixture.dim(), "target file");
  const auto heldout = in.heldout.empty()
                           ? sample_target(mixture, cfg.n_heldout, derive_seed(cfg.distill.seed, kHeldoutStream))
                           : read_grouped(in.heldout, classes, mixture.dim(), "held-out file");

  const auto report = evaluate(mixture, surrogate, real, heldout, cfg.eval);

  OutputSet outputs(in.out_dir.empty() ? default_out_dir() : fs::path(in.out_dir));
  const auto metrics = outputs.write("metrics.json", format_metric_report(report));
  json plots = json::array();
  for (int c = 0; c < classes; ++c) {
    const auto cs = std::to_string(c);
    const auto& surr = surrogate.per_class[static_cast<std::size_t>(c)];
    const auto& tgt = real[static_cast<std::size_t>(c)];
    const auto sp = outputs.write("plot_surrogate_class" + cs + ".csv",
                                  format_labeled_csv({surr, std::vector<int>(surr.size(), c)}, mixture.dim()));
    const auto tp = outputs.write("plot_target_class" + cs + ".csv",
                                  format_labeled_csv({tgt, std::vector<int>(tgt.size(), c)}, mixture.dim()));
    plots.push_back(sp.string());
    plots.push_back(tp.string());
  }

  json manifest;
  manifest["command"] = "eval";
  manifest["version"] = version_string();
  manifest["seed"] = cfg.distill.seed;
  manifest["config"] = format_run_config(cfg);
  manifest["inputs"] = {{"surrogate", fs::absolute(in.surrogate).string()},
                        {"target", fs::absolute(in.target).string()},
                        {"heldout", in.heldout.empty() ? std::string("generated") : fs::absolute(in.heldout).string()}};
  manifest["started_utc"] = started;
  manifest["finished_utc"] = utc_now();
  manifest["outputs"] = {{"metrics", metrics.string()}, {"plots", plots}};
  outputs.write("eval_manifest.json", manifest.dump(2) + '\n');
  outputs.commit();

  const auto& a = report.aggregate;
  out << "ot_distance " << format_double(a.ot_distance) << "\ncoverage " << format_double(a.coverage)
      << "\ndiversity " << format_double(a.diversity) << "\nalignment_rate " << format_double(a.alignment_rate)
      << "\nknn_accuracy " << format_double(a.knn_accuracy) << "\nmetrics: " << metrics.string() << '\n';
  return kExitOk;
}

// ---- check ----

int cmd_check(const std::vector<std::string>& requested, std::ostream& out) {
  const auto known = suite_names();
  std::vector<std::string> suites;
  for (const auto& name : requested) {
    if (name == "all") {
      suites.insert(suites.end(), known.begin(), known.end());
    } else if (std::find(known.begin(), known.end(), name) != known.end()) {
      suites.push_back(name);
    } else {
      throw ConfigError("unknown suite '" + name + "'");
    }
  }
  bool all_passed = true;
  for (const auto& name : suites) {
    const auto r = run_suite(name);
    out << (r.passed ? "PASS " : "FAIL ") << name << ": " << r.detail << '\n';
    all_passed = all_passed && r.passed;
  }
  return all_passed ? kExitOk : kExitNumerical;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dual-guided diffusion dataset distillation on analytic Gaussian-mixture targets", "dmgd"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);

  ConfigInputs gen_cfg;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen-target", "Sample a labeled target dataset from the configured mixture");
  add_config_options(gen, gen_cfg, true);
  gen->add_option("-o,--out", gen_out, "Output CSV path")->required();

  DistillInputs dist;
  auto* distill = app.add_subcommand("distill", "Distill a surrogate dataset from a target dataset");
  add_config_options(distill, dist.config, false);
  add_distill_overrides(distill, dist.config);
  distill->add_option("-t,--target", dist.target, "Target dataset CSV");
  distill->add_option("-o,--out-dir", dist.out_dir, std::string("Output directory (default $") + kOutputDirEnv + ")");
  distill->add_option("--from-manifest", dist.from_manifest, "Rerun the configuration recorded in a manifest");
  distill->add_option("-j,--jobs", dist.jobs, "Classes distilled in parallel")->check(CLI::PositiveNumber);

  EvalInputs ev;
  auto* eval = app.add_subcommand("eval", "Evaluate a surrogate dataset against the target");
  add_config_options(eval, ev.config, true);
  eval->add_option("-s,--surrogate", ev.surrogate, "Surrogate dataset CSV")->required();
  eval->add_option("-t,--target", ev.target, "Target dataset CSV")->required();
  eval->add_option("--heldout", ev.heldout, "Held-out dataset CSV (default: sampled from the mixture)");
  eval->add_option("-o,--out-dir", ev.out_dir, std::string("Output directory (default $") + kOutputDirEnv + ")");

  std::vector<std::string> suites;
  auto* check = app.add_subcommand("check", "Run oracle check suites");
  check->add_option("suites", suites, "Suite names or 'all'")->required();
  {
    std::string list;
    for (const auto& s : suite_names()) list += " " + s;
    check->footer("Suites: all" + list);
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) return cmd_gen_target(gen_cfg, gen_out, out);
    if (*distill) return cmd_distill(dist, out);
    if (*eval) return cmd_eval(ev, out);
    if (*check) return cmd_check(suites, out);
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitUsage;
}

}  // namespace dmgd
