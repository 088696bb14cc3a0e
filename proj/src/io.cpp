// SPDX-License-Identifier: Apache-2.0

#include "dmgd/io.hpp"

#include "json.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace dmgd {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      break;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    const auto start = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t') ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

long long parse_int(std::string_view s, const std::string& what) {
  s = trim(s);
  long long v = 0;
  const auto* end = s.data() + s.size();
  auto res = std::from_chars(s.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) throw DataError("invalid integer for " + what + ": '" + std::string(s) + "'");
  return v;
}

std::vector<std::string_view> lines_of(std::string_view text) {
  auto lines = split(text, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

Point parse_coords(const std::vector<std::string_view>& fields, std::size_t first, std::size_t line_no) {
  Point p(static_cast<Eigen::Index>(fields.size() - first));
  for (std::size_t k = first; k < fields.size(); ++k) {
    try {
      p[static_cast<Eigen::Index>(k - first)] = parse_double(fields[k]);
    } catch (const std::exception& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return p;
}

std::string join_doubles(const Eigen::Ref<const Eigen::VectorXd>& v, char sep) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += format_double(v[i]);
  }
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto res = std::from_chars(s.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end || s.empty()) {
    throw DataError("invalid number '" + std::string(s) + "'");
  }
  return v;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw DataError("write failed for " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

// ---- labeled CSV ----

std::string format_labeled_csv(const LabeledSamples& samples, int dim) {
  std::string out = "label";
  for (int k = 1; k <= dim; ++k) out += ",x" + std::to_string(k);
  out += '\n';
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples.points[i].size() != dim) throw DataError("format_labeled_csv: dimension mismatch");
    out += std::to_string(samples.labels[i]);
    out += ',';
    out += join_doubles(samples.points[i], ',');
    out += '\n';
  }
  return out;
}

LabeledSamples parse_labeled_csv(std::string_view text, int* dim_out) {
  const auto lines = lines_of(text);
  if (lines.empty()) throw DataError("dataset file is empty");
  const auto header = split(lines[0], ',');
  if (header.size() < 2 || header[0] != "label") throw DataError("dataset header must be label,x1,...,xd");
  const int dim = static_cast<int>(header.size() - 1);
  for (int k = 1; k <= dim; ++k) {
    if (header[static_cast<std::size_t>(k)] != "x" + std::to_string(k)) {
      throw DataError("dataset header must be label,x1,...,xd");
    }
  }
  LabeledSamples out;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    const auto fields = split(lines[ln], ',');
    if (fields.size() != header.size()) {
      throw DataError("line " + std::to_string(ln + 1) + ": expected " + std::to_string(header.size()) + " fields");
    }
    const auto label = parse_int(fields[0], "label on line " + std::to_string(ln + 1));
    if (label < 0) throw DataError("line " + std::to_string(ln + 1) + ": negative label");
    out.labels.push_back(static_cast<int>(label));
    out.points.push_back(parse_coords(fields, 1, ln + 1));
  }
  if (dim_out) *dim_out = dim;
  return out;
}

std::string format_surrogate_csv(const SurrogateDataset& data) {
  return format_labeled_csv(LabeledSamples::from_groups(data.per_class), data.dim);
}

std::vector<std::vector<Point>> group_by_label(const LabeledSamples& samples, int num_classes) {
  int classes = num_classes;
  if (classes == 0) {
    for (int l : samples.labels) classes = std::max(classes, l + 1);
  }
  std::vector<std::vector<Point>> out(static_cast<std::size_t>(classes));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const int l = samples.labels[i];
    if (l >= classes) throw DataError("label " + std::to_string(l) + " exceeds class count " + std::to_string(classes));
    out[static_cast<std::size_t>(l)].push_back(samples.points[i]);
  }
  return out;
}

std::string format_quantized_csv(const std::vector<QuantizedTarget>& per_class) {
  const int dim = per_class.empty() ? 0 : per_class.front().dist.dim();
  std::string out = "label,mass";
  for (int k = 1; k <= dim; ++k) out += ",x" + std::to_string(k);
  out += '\n';
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    const auto& d = per_class[c].dist;
    for (int i = 0; i < d.size(); ++i) {
      out += std::to_string(c) + ',' + format_double(d.masses[static_cast<std::size_t>(i)]) + ',';
      out += join_doubles(d.points[static_cast<std::size_t>(i)], ',');
      out += '\n';
    }
  }
  return out;
}

std::vector<DiscreteDistribution> parse_quantized_csv(std::string_view text) {
  const auto lines = lines_of(text);
  if (lines.empty()) throw DataError("quantized file is empty");
  const auto header = split(lines[0], ',');
  if (header.size() < 3 || header[0] != "label" || header[1] != "mass") {
    throw DataError("quantized header must be label,mass,x1,...,xd");
  }
  std::vector<DiscreteDistribution> out;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    const auto fields = split(lines[ln], ',');
    if (fields.size() != header.size()) throw DataError("line " + std::to_string(ln + 1) + ": wrong field count");
    const auto label = static_cast<std::size_t>(parse_int(fields[0], "label"));
    if (label >= out.size()) out.resize(label + 1);
    out[label].masses.push_back(parse_double(fields[1]));
    out[label].points.push_back(parse_coords(fields, 2, ln + 1));
  }
  return out;
}

std::string format_step_log_csv(const std::vector<StepRecord>& log) {
  std::string out = "label,sample,t,rho_t,ot_value,grad_norm,label_fallback\n";
  for (const auto& r : log) {
    out += std::to_string(r.label) + ',' + std::to_string(r.sample) + ',' + std::to_string(r.t) + ',' +
           format_double(r.rho_t) + ',' + format_double(r.ot_value) + ',' + format_double(r.grad_norm) + ',' +
           (r.label_fallback ? "1" : "0") + '\n';
  }
  return out;
}

std::string format_matrix_csv(const Matrix& m) {
  std::string out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out += join_doubles(m.row(i).transpose(), ',');
    out += '\n';
  }
  return out;
}

// ---- config ----

ConfigEntries parse_config_entries(std::string_view text) {
  ConfigEntries entries;
  std::size_t line_no = 0;
  for (auto line : split(text, '\n')) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    const auto key = std::string(trim(line.substr(0, eq)));
    const auto value = std::string(trim(line.substr(eq + 1)));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    if (!entries.emplace(key, value).second) throw ConfigError("config: duplicate key '" + key + "'");
  }
  return entries;
}

namespace {

class EntryReader {
 public:
  explicit EntryReader(const ConfigEntries& e) : entries_(e) {}

  const std::string* find(const std::string& key) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return nullptr;
    used_.insert(key);
    return &it->second;
  }

  template <typename Int>
  void get_int(const std::string& key, Int& out) {
    if (const auto* v = find(key)) {
      try {
        out = static_cast<Int>(parse_int(*v, key));
      } catch (const DataError& e) {
        throw ConfigError(e.what());
      }
    }
  }
  void get_u64(const std::string& key, std::uint64_t& out) {
    if (const auto* v = find(key)) {
      const auto s = trim(*v);
      auto res = std::from_chars(s.data(), s.data() + s.size(), out);
      if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw ConfigError("invalid unsigned integer for " + key);
    }
  }
  void get_double(const std::string& key, double& out) {
    if (const auto* v = find(key)) out = to_double(*v, key);
  }
  void get_bool(const std::string& key, bool& out) {
    if (const auto* v = find(key)) {
      if (*v == "true" || *v == "1") {
        out = true;
      } else if (*v == "false" || *v == "0") {
        out = false;
      } else {
        throw ConfigError("invalid boolean for " + key + ": '" + *v + "'");
      }
    }
  }
  std::vector<double> get_list(const std::string& key) {
    std::vector<double> out;
    if (const auto* v = find(key)) {
      for (auto tok : split_ws(*v)) out.push_back(to_double(tok, key));
    }
    return out;
  }

  void reject_unused() const {
    for (const auto& [k, v] : entries_) {
      if (!used_.count(k)) throw ConfigError("unknown config key '" + k + "'");
    }
  }

  static double to_double(std::string_view v, const std::string& key) {
    try {
      return parse_double(v);
    } catch (const DataError&) {
      throw ConfigError("invalid number for " + key + ": '" + std::string(v) + "'");
    }
  }

 private:
  const ConfigEntries& entries_;
  std::set<std::string> used_;
};

std::optional<LabeledMixture> build_mixture(EntryReader& r, int dim, int classes, bool any_class_keys) {
  if (!any_class_keys) return std::nullopt;
  if (dim < 1) throw ConfigError("mixture: 'dim' must be set to a positive value");
  std::vector<ClassConditional> out;
  for (int c = 0; c < classes; ++c) {
    const std::string base = "class." + std::to_string(c) + ".";
    double prior = 1.0 / classes;
    r.get_double(base + "prior", prior);
    int ncomp = 0;
    r.get_int(base + "components", ncomp);
    if (ncomp < 1) throw ConfigError("mixture: " + base + "components must be >= 1");
    std::vector<GaussianComponent> comps;
    for (int k = 0; k < ncomp; ++k) {
      const std::string cb = base + "component." + std::to_string(k) + ".";
      double weight = 1.0 / ncomp;
      r.get_double(cb + "weight", weight);
      const auto mean = r.get_list(cb + "mean");
      if (static_cast<int>(mean.size()) != dim) throw ConfigError("mixture: " + cb + "mean needs " + std::to_string(dim) + " values");
      Matrix cov;
      const auto cov_list = r.get_list(cb + "cov");
      const auto var_list = r.get_list(cb + "var");
      if (!cov_list.empty()) {
        if (static_cast<int>(cov_list.size()) != dim * dim) throw ConfigError("mixture: " + cb + "cov needs d*d values");
        cov = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(cov_list.data(), dim, dim);
      } else if (var_list.size() == 1) {
        cov = var_list[0] * Matrix::Identity(dim, dim);
      } else {
        throw ConfigError("mixture: " + cb + " needs either cov (d*d values) or var (one value)");
      }
      try {
        comps.emplace_back(Eigen::Map<const Eigen::VectorXd>(mean.data(), dim), cov, weight);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("mixture: ") + cb + ": " + e.what());
      }
    }
    try {
      out.push_back({c, GaussianMixture(std::move(comps)), prior});
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("mixture: class ") + std::to_string(c) + ": " + e.what());
    }
  }
  try {
    return LabeledMixture(std::move(out));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("mixture: ") + e.what());
  }
}

}  // namespace

RunConfig build_run_config(const ConfigEntries& entries) {
  RunConfig cfg;
  EntryReader r(entries);
  auto& d = cfg.distill;
  r.get_int("classes", d.num_classes);
  r.get_int("ipc", d.ipc);
  r.get_int("steps", d.steps);
  r.get_double("schedule_offset", d.schedule_offset);
  r.get_double("eta", d.eta);
  r.get_u64("seed", d.seed);
  r.get_double("omega", d.semantic.omega);
  r.get_double("beta_n", d.semantic.beta_n);
  r.get_double("beta_s", d.semantic.beta_s);
  r.get_int("t1", d.semantic.t1);
  r.get_int("t2", d.semantic.t2);
  r.get_double("rho", d.dist_match.rho);
  r.get_int("window_lo", d.dist_match.window_lo);
  r.get_int("window_hi", d.dist_match.window_hi);
  if (const auto* v = r.find("metric")) {
    try {
      d.dist_match.metric = parse_cost_metric(*v);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  r.get_double("epsilon", d.dist_match.epsilon);
  r.get_int("sinkhorn_iters", d.dist_match.iters);
  r.get_bool("project_sphere", d.dist_match.project_sphere);
  r.get_bool("log_domain", d.dist_match.log_domain);
  if (const auto* v = r.find("quantizer")) {
    try {
      d.quantizer = parse_quantizer(*v);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  r.get_int("K", d.support_points);
  r.get_int("kmeans_max_iter", d.kmeans_max_iter);
  r.get_int("kmeans_n_init", d.kmeans_n_init);
  r.get_int("dbs_knn", d.dbs_knn);
  r.get_int("n_target", d.n_target);
  r.get_int("n_heldout", cfg.n_heldout);
  r.get_double("eval_epsilon", cfg.eval.epsilon);
  r.get_int("eval_iters", cfg.eval.iters);
  r.get_int("coverage_knn", cfg.eval.coverage_knn);
  r.get_int("knn_k", cfg.eval.knn_k);
  int dim = 0;
  r.get_int("dim", dim);

  bool any_class_keys = false;
  for (const auto& [k, v] : entries) any_class_keys |= k.rfind("class.", 0) == 0;
  cfg.mixture = build_mixture(r, dim, d.num_classes, any_class_keys);
  r.reject_unused();
  try {
    d.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

RunConfig parse_run_config(std::string_view text) { return build_run_config(parse_config_entries(text)); }

std::string format_distill_config(const DistillConfig& d) {
  std::ostringstream o;
  o << "classes = " << d.num_classes << '\n'
    << "ipc = " << d.ipc << '\n'
    << "steps = " << d.steps << '\n'
    << "schedule_offset = " << format_double(d.schedule_offset) << '\n'
    << "eta = " << format_double(d.eta) << '\n'
    << "seed = " << d.seed << '\n'
    << "omega = " << format_double(d.semantic.omega) << '\n'
    << "beta_n = " << format_double(d.semantic.beta_n) << '\n'
    << "beta_s = " << format_double(d.semantic.beta_s) << '\n'
    << "t1 = " << d.semantic.t1 << '\n'
    << "t2 = " << d.semantic.t2 << '\n'
    << "rho = " << format_double(d.dist_match.rho) << '\n'
    << "window_lo = " << d.dist_match.window_lo << '\n'
    << "window_hi = " << d.dist_match.window_hi << '\n'
    << "metric = " << to_string(d.dist_match.metric) << '\n'
    << "epsilon = " << format_double(d.dist_match.epsilon) << '\n'
    << "sinkhorn_iters = " << d.dist_match.iters << '\n'
    << "project_sphere = " << (d.dist_match.project_sphere ? "true" : "false") << '\n'
    << "log_domain = " << (d.dist_match.log_domain ? "true" : "false") << '\n'
    << "quantizer = " << to_string(d.quantizer) << '\n'
    << "K = " << d.support_points << '\n'
    << "kmeans_max_iter = " << d.kmeans_max_iter << '\n'
    << "kmeans_n_init = " << d.kmeans_n_init << '\n'
    << "dbs_knn = " << d.dbs_knn << '\n'
    << "n_target = " << d.n_target << '\n';
  return o.str();
}

std::string format_mixture(const LabeledMixture& m) {
  std::ostringstream o;
  o << "dim = " << m.dim() << '\n';
  for (const auto& cls : m.classes()) {
    const std::string base = "class." + std::to_string(cls.label) + ".";
    o << base << "prior = " << format_double(cls.prior) << '\n';
    o << base << "components = " << cls.mixture.components().size() << '\n';
    for (std::size_t k = 0; k < cls.mixture.components().size(); ++k) {
      const auto& comp = cls.mixture.components()[k];
      const std::string cb = base + "component." + std::to_string(k) + ".";
      o << cb << "weight = " << format_double(comp.weight()) << '\n';
      o << cb << "mean = " << join_doubles(comp.mean(), ' ') << '\n';
      const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = comp.covariance();
      o << cb << "cov = "
        << join_doubles(Eigen::Map<const Eigen::VectorXd>(rm.data(), rm.size()), ' ') << '\n';
    }
  }
  return o.str();
}

std::string format_run_config(const RunConfig& cfg) {
  std::ostringstream o;
  o << format_distill_config(cfg.distill);
  o << "n_heldout = " << cfg.n_heldout << '\n'
    << "eval_epsilon = " << format_double(cfg.eval.epsilon) << '\n'
    << "eval_iters = " << cfg.eval.iters << '\n'
    << "coverage_knn = " << cfg.eval.coverage_knn << '\n'
    << "knn_k = " << cfg.eval.knn_k << '\n';
  if (cfg.mixture) o << format_mixture(*cfg.mixture);
  return o.str();
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) out[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return out;
}

std::uint64_t config_fingerprint(const DistillConfig& cfg) { return fnv1a(format_distill_config(cfg)); }

// ---- metrics ----

namespace {

nlohmann::ordered_json metrics_to_json(const ClassMetrics& m) {
  nlohmann::ordered_json j;
  j["ot_distance"] = m.ot_distance;
  j["coverage"] = m.coverage;
  j["diversity"] = m.diversity;
  j["alignment_rate"] = m.alignment_rate;
  j["knn_accuracy"] = m.knn_accuracy;
  j["n_surrogate"] = m.n_surrogate;
  j["n_real"] = m.n_real;
  j["n_heldout"] = m.n_heldout;
  return j;
}

ClassMetrics metrics_from_json(const nlohmann::json& j) {
  ClassMetrics m;
  m.ot_distance = j.at("ot_distance").get<double>();
  m.coverage = j.at("coverage").get<double>();
  m.diversity = j.at("diversity").get<double>();
  m.alignment_rate = j.at("alignment_rate").get<double>();
  m.knn_accuracy = j.at("knn_accuracy").get<double>();
  m.n_surrogate = j.at("n_surrogate").get<std::size_t>();
  m.n_real = j.at("n_real").get<std::size_t>();
  m.n_heldout = j.at("n_heldout").get<std::size_t>();
  return m;
}

}  // namespace

std::string format_metric_report(const MetricReport& report) {
  nlohmann::ordered_json j;
  j["per_class"] = nlohmann::ordered_json::array();
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    auto block = metrics_to_json(report.per_class[c]);
    block["label"] = c;
    j["per_class"].push_back(std::move(block));
  }
  j["aggregate"] = metrics_to_json(report.aggregate);
  return j.dump(2) + '\n';
}

MetricReport parse_metric_report(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    MetricReport r;
    for (const auto& block : j.at("per_class")) r.per_class.push_back(metrics_from_json(block));
    r.aggregate = metrics_from_json(j.at("aggregate"));
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed metrics file: ") + e.what());
  }
}

}  // namespace dmgd
