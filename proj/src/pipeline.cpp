// SPDX-License-Identifier: Apache-2.0

#include "dmgd/pipeline.hpp"

#include "dmgd/io.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <string>
#include <thread>

namespace dmgd {

namespace {

// Sub-stream tags under a class seed.
constexpr std::uint64_t kQuantizeStream = 0;
constexpr std::uint64_t kInitNoiseStream = 1;
constexpr std::uint64_t kLabelStream = 2;
constexpr std::uint64_t kTargetStream = 3;

template <typename Fn>
void rethrow_with_context(const std::string& context, Fn&& fn) {
  try {
    fn();
  } catch (const NumericalError& e) {
    throw NumericalError(context + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(context + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(context + ": " + e.what());
  }
}

}  // namespace

void DistillConfig::validate() const {
  if (num_classes < 2) throw std::invalid_argument("DistillConfig: need at least 2 classes");
  if (ipc < 1) throw std::invalid_argument("DistillConfig: ipc must be >= 1");
  if (steps < 2) throw std::invalid_argument("DistillConfig: steps must be >= 2");
  if (!(eta >= 0.0 && eta <= 1.0)) throw std::invalid_argument("DistillConfig: eta must lie in [0, 1]");
  semantic.validate(steps);
  dist_match.validate(steps);
  if (support_points < 1) throw std::invalid_argument("DistillConfig: K must be >= 1");
  if (kmeans_max_iter < 1 || kmeans_n_init < 1) throw std::invalid_argument("DistillConfig: k-means iteration counts must be >= 1");
  if (dbs_knn < 1) throw std::invalid_argument("DistillConfig: dbs_knn must be >= 1");
  if (n_target < 1) throw std::invalid_argument("DistillConfig: n_target must be >= 1");
}

std::size_t SurrogateDataset::total_size() const {
  std::size_t n = 0;
  for (const auto& c : per_class) n += c.size();
  return n;
}

std::uint64_t class_seed(std::uint64_t seed, int c) {
  return derive_seed(seed, static_cast<std::uint64_t>(c));
}

std::vector<std::vector<Point>> sample_target(const LabeledMixture& m, int n_per_class, std::uint64_t seed) {
  if (n_per_class < 1) throw std::invalid_argument("sample_target: need at least one sample per class");
  std::vector<std::vector<Point>> out(static_cast<std::size_t>(m.num_classes()));
  for (int c = 0; c < m.num_classes(); ++c) {
    Rng rng(derive_seed(class_seed(seed, c), kTargetStream));
    auto& pts = out[static_cast<std::size_t>(c)];
    pts.reserve(static_cast<std::size_t>(n_per_class));
    for (int i = 0; i < n_per_class; ++i) pts.push_back(sample_class(m, c, rng));
  }
  return out;
}

QuantizedTarget quantize_class(const DistillConfig& cfg, std::span<const Point> samples,
                               std::uint64_t class_stream_seed) {
  Rng rng(derive_seed(class_stream_seed, kQuantizeStream));
  switch (cfg.quantizer) {
    case QuantizerKind::kmeans:
      return kmeans_approx(samples, cfg.support_points, cfg.kmeans_max_iter, cfg.kmeans_n_init, rng);
    case QuantizerKind::mean:
      return mean_approx(samples);
    case QuantizerKind::dbs:
      return density_sample_approx(samples, cfg.support_points, cfg.dbs_knn, rng);
  }
  throw std::invalid_argument("unknown quantizer");
}

ClassRun distill_class(const DistillConfig& cfg, const AnalyticDenoiser& den, int c,
                       std::span<const Point> target_samples, std::uint64_t class_stream_seed) {
  if (target_samples.empty()) throw DataError("distill_class: no target samples for class " + std::to_string(c));
  if (den.schedule().steps() != cfg.steps) throw std::invalid_argument("distill_class: schedule length differs from config");
  ClassRun run;
  run.target = quantize_class(cfg, target_samples, class_stream_seed);

  MemorySet memory(c);
  const int d = den.dim();
  for (int n = 0; n < cfg.ipc; ++n) {
    const auto sample_seed = derive_seed(class_stream_seed, 1000 + static_cast<std::uint64_t>(n));
    Rng init_rng(derive_seed(sample_seed, kInitNoiseStream));
    Rng label_rng(derive_seed(sample_seed, kLabelStream));

    Point z = init_rng.normal_vector(d);
    const LabelState labels = make_label_state(c, cfg.num_classes, label_rng);
    for (int t = cfg.steps; t >= 1; --t) {
      StepRecord rec;
      z = guided_sample_step(den, cfg.semantic, cfg.dist_match, memory, run.target.dist, z, t, labels,
                             label_rng, &rec);
      if (!z.allFinite()) {
        throw NumericalError("non-finite state at class " + std::to_string(c) + ", sample " +
                             std::to_string(n) + ", step t=" + std::to_string(t));
      }
      rec.sample = n;
      if (rec.rho_t > 0.0 || rec.label_fallback) run.log.push_back(rec);
    }
    memory.append(z);
    run.samples.push_back(std::move(z));
  }
  return run;
}

DistillResult distill_dataset(const DistillConfig& cfg, const LabeledMixture& target,
                              const std::vector<std::vector<Point>>& target_samples, int jobs) {
  cfg.validate();
  if (target.num_classes() != cfg.num_classes) {
    throw DataError("distill_dataset: mixture has " + std::to_string(target.num_classes()) +
                    " classes, config expects " + std::to_string(cfg.num_classes));
  }
  if (static_cast<int>(target_samples.size()) != cfg.num_classes) {
    throw DataError("distill_dataset: target samples missing for some classes");
  }
  for (int c = 0; c < cfg.num_classes; ++c) {
    const auto& pts = target_samples[static_cast<std::size_t>(c)];
    if (pts.empty()) throw DataError("distill_dataset: class " + std::to_string(c) + " has no target samples");
    for (const auto& p : pts) {
      if (p.size() != target.dim()) throw DataError("distill_dataset: target sample dimension mismatch in class " + std::to_string(c));
    }
  }

  const AnalyticDenoiser den(target, make_cosine_schedule(cfg.steps, cfg.schedule_offset, cfg.eta));
  std::vector<ClassRun> runs(static_cast<std::size_t>(cfg.num_classes));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(cfg.num_classes));

  auto run_class = [&](int c) {
    try {
      rethrow_with_context("class " + std::to_string(c), [&] {
        runs[static_cast<std::size_t>(c)] =
            distill_class(cfg, den, c, target_samples[static_cast<std::size_t>(c)], class_seed(cfg.seed, c));
      });
    } catch (...) {
      errors[static_cast<std::size_t>(c)] = std::current_exception();
    }
  };

  const int workers = std::clamp(jobs, 1, cfg.num_classes);
  if (workers == 1) {
    for (int c = 0; c < cfg.num_classes; ++c) run_class(c);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int c = next++; c < cfg.num_classes; c = next++) run_class(c);
      });
    }
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  DistillResult result;
  result.dataset.dim = target.dim();
  result.dataset.seed = cfg.seed;
  result.dataset.config_hash = config_fingerprint(cfg);
  for (auto& run : runs) {
    result.dataset.per_class.push_back(std::move(run.samples));
    result.targets.push_back(std::move(run.target));
    result.log.insert(result.log.end(), run.log.begin(), run.log.end());
  }
  return result;
}

}  // namespace dmgd
