#include "sfit/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "sfit/checkpoint.hpp"
#include "sfit/errors.hpp"
#include "sfit/losses.hpp"

namespace sfit {

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string unquote(const std::string& s) {
  if (s.size() < 2 || s.front() != '"' || s.back() != '"') return s;
  std::string out;
  for (std::size_t i = 1; i + 1 < s.size(); ++i) {
    out += s[i];
    if (s[i] == '"') ++i;
  }
  return out;
}

template <typename T>
void check_compatible(const Model<T>& model, const DatasetSplit& split) {
  if (split.example_shape != model.input_shape()) {
    throw UsageError("dataset example shape " + shape_to_string(split.example_shape) + " does not match model input " +
                     shape_to_string(model.input_shape()));
  }
  if (split.num_classes != model.num_classes()) {
    throw UsageError("dataset has " + std::to_string(split.num_classes) + " classes, model has " +
                     std::to_string(model.num_classes()));
  }
  if (split.size() == 0) throw UsageError("cannot evaluate on an empty split");
}

}  // namespace

std::string LogitsStats::to_csv() const {
  std::string out = "class,count";
  for (std::size_t c = 0; c < means.size(); ++c) out += ",z" + std::to_string(c);
  out += "\n";
  for (std::size_t r = 0; r < means.size(); ++r) {
    out += std::to_string(r) + "," + std::to_string(counts[r]);
    for (double v : means[r]) out += "," + (missing[r] ? std::string() : num(v));
    out += "\n";
  }
  return out;
}

double LogitsStats::min_diagonal_margin() const {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < means.size(); ++r) {
    if (missing[r]) continue;
    double off = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < means[r].size(); ++c) {
      if (c != r) off = std::max(off, means[r][c]);
    }
    best = std::min(best, means[r][r] - off);
  }
  return best;
}

nlohmann::json attack_to_json(const AttackConfig& cfg) {
  return {{"kind", to_string(cfg.kind)},
          {"name", cfg.name()},
          {"epsilon", cfg.epsilon},
          {"step_size", cfg.step_size},
          {"iterations", cfg.iterations},
          {"random_init", cfg.random_init},
          {"restarts", cfg.restarts},
          {"seed", cfg.seed},
          {"init_iterations", cfg.init_iterations},
          {"init_step_size", cfg.init_step_size}};
}

AttackConfig attack_from_json(const nlohmann::json& j) {
  AttackConfig cfg;
  cfg.kind = attack_kind_from_string(j.at("kind").get<std::string>());
  cfg.epsilon = j.value("epsilon", cfg.epsilon);
  cfg.step_size = j.value("step_size", cfg.step_size);
  cfg.iterations = j.value("iterations", cfg.iterations);
  cfg.random_init = j.value("random_init", cfg.kind == AttackKind::kPgd || cfg.kind == AttackKind::kApgd);
  cfg.restarts = j.value("restarts", cfg.restarts);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.init_iterations = j.value("init_iterations", cfg.init_iterations);
  cfg.init_step_size = j.value("init_step_size", cfg.init_step_size);
  cfg.validate();
  return cfg;
}

std::vector<AttackConfig> default_protocol(double epsilon, std::uint64_t seed) {
  return {AttackConfig::pgd(epsilon, epsilon / 10.0, 100, seed),
          AttackConfig::apgd_attack(epsilon, epsilon / 10.0, 100, seed), AttackConfig::a3(epsilon, 100, seed)};
}

template <typename T>
std::string model_fingerprint(const Model<T>& model) {
  return sha256_hex(serialize_checkpoint(model)).substr(0, 16);
}

template <typename T>
LogitsStats logits_stats(const Model<T>& model, const DatasetSplit& split, std::size_t batch_size) {
  check_compatible(model, split);
  if (batch_size == 0) throw UsageError("batch size must be positive");
  const std::size_t k = model.num_classes();
  const std::size_t n = split.size();
  const std::size_t batches = (n + batch_size - 1) / batch_size;
  std::vector<std::vector<double>> partial(batches, std::vector<double>(k * k, 0.0));
#pragma omp parallel for schedule(dynamic)
  for (std::size_t b = 0; b < batches; ++b) {
    const std::size_t lo = b * batch_size, hi = std::min(n, lo + batch_size);
    const auto z = model.predict(split.images<T>(lo, hi));
    for (std::size_t i = 0; i < hi - lo; ++i) {
      const auto y = static_cast<std::size_t>(split.labels[lo + i]);
      for (std::size_t c = 0; c < k; ++c) partial[b][y * k + c] += static_cast<double>(z.at(i * k + c));
    }
  }
  LogitsStats out;
  out.means.assign(k, std::vector<double>(k, 0.0));
  out.counts.assign(k, 0);
  out.missing.assign(k, false);
  for (int y : split.labels) ++out.counts[static_cast<std::size_t>(y)];
  for (const auto& p : partial) {
    for (std::size_t r = 0; r < k; ++r) {
      for (std::size_t c = 0; c < k; ++c) out.means[r][c] += p[r * k + c];
    }
  }
  for (std::size_t r = 0; r < k; ++r) {
    if (out.counts[r] == 0) {
      out.missing[r] = true;
      continue;
    }
    for (auto& v : out.means[r]) v /= static_cast<double>(out.counts[r]);
  }
  return out;
}

template <typename T>
EvalReport evaluate(const Model<T>& model, const DatasetSplit& split, std::span<const AttackConfig> attacks,
                    const EvalOptions& options) {
  check_compatible(model, split);
  if (options.batch_size == 0) throw UsageError("batch size must be positive");
  std::vector<AttackConfig> configs(attacks.begin(), attacks.end());
  for (auto& a : configs) {
    a.seed = options.seed;
    a.validate();
  }

  const std::size_t n = split.size();
  const std::size_t k = model.num_classes();
  const std::size_t batches = (n + options.batch_size - 1) / options.batch_size;
  std::vector<char> clean_ok(n), vanished(n);
  std::vector<std::vector<char>> adv_ok(configs.size(), std::vector<char>(n));
  std::string error;

#pragma omp parallel for schedule(dynamic)
  for (std::size_t b = 0; b < batches; ++b) {
    try {
      const std::size_t lo = b * options.batch_size, hi = std::min(n, lo + options.batch_size);
      const auto x = split.images<T>(lo, hi);
      std::vector<int> labels(split.labels.begin() + static_cast<std::ptrdiff_t>(lo),
                              split.labels.begin() + static_cast<std::ptrdiff_t>(hi));
      const auto z = model.predict(x);
      const auto flags = is_gradient_vanished(LogitsBatch<T>(z, labels));
      for (std::size_t i = 0; i < hi - lo; ++i) {
        auto row = z.values().subspan(i * k, k);
        const auto pred = std::max_element(row.begin(), row.end()) - row.begin();
        clean_ok[lo + i] = pred == labels[i];
        vanished[lo + i] = flags[i];
      }
      for (std::size_t a = 0; a < configs.size(); ++a) {
        const auto adv = run_attack(model, x, labels, configs[a], lo);
        for (std::size_t i = 0; i < hi - lo; ++i) adv_ok[a][lo + i] = !adv.success[i];
      }
    } catch (const std::exception& e) {
#pragma omp critical(sfit_eval_error)
      if (error.empty()) error = e.what();
    }
  }
  if (!error.empty()) throw std::runtime_error("evaluation failed: " + error);

  EvalReport r;
  r.model_id = options.model_id.empty() ? model_fingerprint(model) : options.model_id;
  r.dataset_id = split.name + "@" + split.checksum.substr(0, 16);
  r.n_examples = n;
  r.seed = options.seed;
  for (std::size_t i = 0; i < n; ++i) {
    r.clean_correct += clean_ok[i];
    r.vanished += vanished[i];
  }
  r.clean_accuracy = static_cast<double>(r.clean_correct) / static_cast<double>(n);
  r.vanished_fraction = static_cast<double>(r.vanished) / static_cast<double>(n);
  for (std::size_t a = 0; a < configs.size(); ++a) {
    AttackOutcome o;
    o.name = configs[a].name();
    for (std::size_t i = 0; i < n; ++i) {
      o.correct += adv_ok[a][i];
      if (vanished[i]) {
        o.vanished_correct_clean += clean_ok[i];
        o.vanished_correct_adv += adv_ok[a][i];
      }
    }
    o.robust_accuracy = static_cast<double>(o.correct) / static_cast<double>(n);
    r.attacks.push_back(o);
  }
  r.logits = logits_stats(model, split, options.batch_size);
  nlohmann::json echo = nlohmann::json::array();
  for (const auto& a : configs) echo.push_back(attack_to_json(a));
  r.config = {{"batch_size", options.batch_size}, {"attacks", echo}};
  return r;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j{{"model_id", model_id},
                   {"dataset_id", dataset_id},
                   {"n_examples", n_examples},
                   {"clean_correct", clean_correct},
                   {"clean_accuracy", clean_accuracy},
                   {"vanished", vanished},
                   {"vanished_fraction", vanished_fraction},
                   {"logits_means", logits.means},
                   {"class_counts", logits.counts},
                   {"seed", seed},
                   {"config", config}};
  nlohmann::json missing = nlohmann::json::array();
  for (bool m : logits.missing) missing.push_back(m);
  j["missing_classes"] = missing;
  if (!attacks.empty()) {
    nlohmann::json robust = nlohmann::json::object();
    nlohmann::json details = nlohmann::json::array();
    for (const auto& a : attacks) {
      robust[a.name] = a.robust_accuracy;
      details.push_back({{"name", a.name},
                         {"correct", a.correct},
                         {"robust_accuracy", a.robust_accuracy},
                         {"vanished_correct_clean", a.vanished_correct_clean},
                         {"vanished_correct_adv", a.vanished_correct_adv}});
    }
    j["robust_accuracy"] = robust;
    j["attacks"] = details;
  }
  return j;
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  EvalReport r;
  r.model_id = j.at("model_id").get<std::string>();
  r.dataset_id = j.at("dataset_id").get<std::string>();
  r.n_examples = j.at("n_examples").get<std::size_t>();
  r.clean_correct = j.at("clean_correct").get<std::size_t>();
  r.clean_accuracy = j.at("clean_accuracy").get<double>();
  r.vanished = j.at("vanished").get<std::size_t>();
  r.vanished_fraction = j.at("vanished_fraction").get<double>();
  r.logits.means = j.at("logits_means").get<std::vector<std::vector<double>>>();
  r.logits.counts = j.at("class_counts").get<std::vector<std::size_t>>();
  r.logits.missing = j.at("missing_classes").get<std::vector<bool>>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.config = j.value("config", nlohmann::json::object());
  if (j.contains("attacks")) {
    for (const auto& a : j.at("attacks")) {
      AttackOutcome o;
      o.name = a.at("name").get<std::string>();
      o.correct = a.at("correct").get<std::size_t>();
      o.robust_accuracy = a.at("robust_accuracy").get<double>();
      o.vanished_correct_clean = a.at("vanished_correct_clean").get<std::size_t>();
      o.vanished_correct_adv = a.at("vanished_correct_adv").get<std::size_t>();
      r.attacks.push_back(o);
    }
  }
  return r;
}

std::string EvalReport::to_csv() const {
  std::ostringstream out;
  out << "field,value\n";
  out << "model_id," << quote(model_id) << "\n";
  out << "dataset_id," << quote(dataset_id) << "\n";
  out << "n_examples," << n_examples << "\n";
  out << "clean_correct," << clean_correct << "\n";
  out << "clean_accuracy," << num(clean_accuracy) << "\n";
  out << "vanished," << vanished << "\n";
  out << "vanished_fraction," << num(vanished_fraction) << "\n";
  out << "seed," << seed << "\n";
  for (std::size_t a = 0; a < attacks.size(); ++a) {
    const auto p = "attack." + std::to_string(a) + ".";
    out << p << "name," << quote(attacks[a].name) << "\n";
    out << p << "correct," << attacks[a].correct << "\n";
    out << p << "robust_accuracy," << num(attacks[a].robust_accuracy) << "\n";
    out << p << "vanished_correct_clean," << attacks[a].vanished_correct_clean << "\n";
    out << p << "vanished_correct_adv," << attacks[a].vanished_correct_adv << "\n";
  }
  for (std::size_t r = 0; r < logits.means.size(); ++r) {
    out << "class." << r << ".count," << logits.counts[r] << "\n";
    out << "class." << r << ".missing," << (logits.missing[r] ? 1 : 0) << "\n";
    for (std::size_t c = 0; c < logits.means[r].size(); ++c) {
      out << "logits_mean." << r << "." << c << "," << num(logits.means[r][c]) << "\n";
    }
  }
  out << "config," << quote(config.dump()) << "\n";
  return out.str();
}

EvalReport EvalReport::from_csv(const std::string& text) {
  std::map<std::string, std::string> f;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  if (line != "field,value") throw FormatError("report CSV must start with 'field,value'");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw FormatError("bad report CSV line: " + line);
    f[line.substr(0, comma)] = unquote(line.substr(comma + 1));
  }
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = f.find(key);
    if (it == f.end()) throw FormatError("report CSV lacks field '" + key + "'");
    return it->second;
  };
  EvalReport r;
  r.model_id = get("model_id");
  r.dataset_id = get("dataset_id");
  r.n_examples = std::stoull(get("n_examples"));
  r.clean_correct = std::stoull(get("clean_correct"));
  r.clean_accuracy = std::stod(get("clean_accuracy"));
  r.vanished = std::stoull(get("vanished"));
  r.vanished_fraction = std::stod(get("vanished_fraction"));
  r.seed = std::stoull(get("seed"));
  for (std::size_t a = 0; f.count("attack." + std::to_string(a) + ".name"); ++a) {
    const auto p = "attack." + std::to_string(a) + ".";
    AttackOutcome o;
    o.name = get(p + "name");
    o.correct = std::stoull(get(p + "correct"));
    o.robust_accuracy = std::stod(get(p + "robust_accuracy"));
    o.vanished_correct_clean = std::stoull(get(p + "vanished_correct_clean"));
    o.vanished_correct_adv = std::stoull(get(p + "vanished_correct_adv"));
    r.attacks.push_back(o);
  }
  std::size_t k = 0;
  while (f.count("class." + std::to_string(k) + ".count")) ++k;
  r.logits.means.assign(k, std::vector<double>(k));
  r.logits.counts.assign(k, 0);
  r.logits.missing.assign(k, false);
  for (std::size_t row = 0; row < k; ++row) {
    r.logits.counts[row] = std::stoull(get("class." + std::to_string(row) + ".count"));
    r.logits.missing[row] = get("class." + std::to_string(row) + ".missing") == "1";
    for (std::size_t c = 0; c < k; ++c) {
      r.logits.means[row][c] = std::stod(get("logits_mean." + std::to_string(row) + "." + std::to_string(c)));
    }
  }
  r.config = nlohmann::json::parse(get("config"));
  return r;
}

std::string EvalReport::to_table() const {
  std::ostringstream out;
  out << "model    " << model_id << "\n";
  out << "dataset  " << dataset_id << "  (" << n_examples << " examples)\n\n";
  out << std::left << std::setw(16) << "metric" << std::right << std::setw(10) << "accuracy" << std::setw(10)
      << "correct" << "\n";
  out << std::fixed << std::setprecision(4);
  out << std::left << std::setw(16) << "clean" << std::right << std::setw(10) << clean_accuracy << std::setw(10)
      << clean_correct << "\n";
  for (const auto& a : attacks) {
    out << std::left << std::setw(16) << a.name << std::right << std::setw(10) << a.robust_accuracy << std::setw(10)
        << a.correct << "\n";
  }
  out << "\nvanished fraction " << vanished_fraction << " (" << vanished << "/" << n_examples << ")\n";
  out << "\nmean logits by true class\n";
  out << std::setprecision(2);
  for (std::size_t r = 0; r < logits.means.size(); ++r) {
    out << std::setw(4) << r << " |";
    if (logits.missing[r]) {
      out << " (no examples)\n";
      continue;
    }
    for (double v : logits.means[r]) out << std::setw(10) << v;
    out << "\n";
  }
  return out.str();
}

#define SFIT_INSTANTIATE_EVAL(T)                                                                                 \
  template EvalReport evaluate<T>(const Model<T>&, const DatasetSplit&, std::span<const AttackConfig>,          \
                                  const EvalOptions&);                                                           \
  template LogitsStats logits_stats<T>(const Model<T>&, const DatasetSplit&, std::size_t);                       \
  template std::string model_fingerprint<T>(const Model<T>&);

SFIT_INSTANTIATE_EVAL(float)
SFIT_INSTANTIATE_EVAL(double)

#undef SFIT_INSTANTIATE_EVAL

}  // namespace sfit
