// SPDX-License-Identifier: Apache-2.0
//
// File formats:
//   datasets        CSV, header `label,x1,...,xd`, LF line endings, shortest
//                   round-trip decimal representation of every double
//   quantized       CSV, header `label,mass,x1,...,xd`
//   step log        CSV, header `label,sample,t,rho_t,ot_value,grad_norm,label_fallback`
//   config          flat `key = value` text; `#` starts a comment
//   metrics         JSON with `per_class` and `aggregate` blocks

#pragma once

#include "dmgd/guidance.hpp"
#include "dmgd/metrics.hpp"
#include "dmgd/pipeline.hpp"
#include "dmgd/quantization.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dmgd {

/// Malformed or unknown configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Shortest decimal string that parses back to exactly `v`.
std::string format_double(double v);
double parse_double(std::string_view s);

std::string read_text_file(const std::filesystem::path& path);
/// Writes atomically (temp file + rename).
void write_text_file(const std::filesystem::path& path, std::string_view text);

// ---- labeled point CSV ----

std::string format_labeled_csv(const LabeledSamples& samples, int dim);
LabeledSamples parse_labeled_csv(std::string_view text, int* dim_out = nullptr);

std::string format_surrogate_csv(const SurrogateDataset& data);
/// Groups rows by label into `num_classes` classes (inferred as max label + 1 when 0).
std::vector<std::vector<Point>> group_by_label(const LabeledSamples& samples, int num_classes = 0);

std::string format_quantized_csv(const std::vector<QuantizedTarget>& per_class);
std::vector<DiscreteDistribution> parse_quantized_csv(std::string_view text);

std::string format_step_log_csv(const std::vector<StepRecord>& log);
std::string format_matrix_csv(const Matrix& m);

// ---- config ----

using ConfigEntries = std::map<std::string, std::string>;

struct RunConfig {
  DistillConfig distill;
  EvalConfig eval;
  std::optional<LabeledMixture> mixture;
  int n_heldout = 200;
};

ConfigEntries parse_config_entries(std::string_view text);
RunConfig build_run_config(const ConfigEntries& entries);
RunConfig parse_run_config(std::string_view text);

/// Canonical text covering every key; parse_run_config inverts it.
std::string format_run_config(const RunConfig& cfg);
std::string format_mixture(const LabeledMixture& m);
std::string format_distill_config(const DistillConfig& cfg);

/// 64-bit FNV-1a hash.
std::uint64_t fnv1a(std::string_view bytes);
/// 16 lowercase hex digits.
std::string hex64(std::uint64_t v);

/// FNV-1a of the canonical distillation config text.
std::uint64_t config_fingerprint(const DistillConfig& cfg);

// ---- metrics ----

std::string format_metric_report(const MetricReport& report);
MetricReport parse_metric_report(std::string_view text);

}  // namespace dmgd
