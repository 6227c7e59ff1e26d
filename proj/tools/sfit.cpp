// Command-line front end: train, attack, eval, logits-stats, gradcheck.
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "sfit/attacks.hpp"
#include "sfit/checkpoint.hpp"
#include "sfit/dataset.hpp"
#include "sfit/errors.hpp"
#include "sfit/evaluation.hpp"
#include "sfit/gradcheck.hpp"
#include "sfit/training.hpp"

namespace {

using namespace sfit;

struct DataArgs {
  std::string blobs;  // N:K:DIM
  std::uint64_t blob_seed = 0;
  double blob_spread = BlobOptions{}.spread;
  double blob_noise = BlobOptions{}.noise;
  std::vector<std::string> idx;  // images labels
  std::vector<std::string> cifar;
  std::size_t classes = 10;
  std::string range;  // begin:end
  std::size_t subsample_n = 0;
  std::uint64_t subsample_seed = 0;
};

void add_data_options(CLI::App* app, DataArgs& d) {
  auto* g = app->add_option_group("data", "dataset source (exactly one)");
  g->add_option("--blobs", d.blobs, "Gaussian blobs N:K:DIM");
  g->add_option("--idx", d.idx, "IDX image and label files")->expected(2);
  g->add_option("--cifar", d.cifar, "CIFAR binary batch file(s)");
  g->require_option(1);
  app->add_option("--blob-seed", d.blob_seed, "seed for --blobs");
  app->add_option("--blob-spread", d.blob_spread, "center spread for --blobs");
  app->add_option("--blob-noise", d.blob_noise, "per-coordinate noise for --blobs");
  app->add_option("--classes", d.classes, "class count for --idx/--cifar");
  app->add_option("--range", d.range, "keep examples begin:end");
  app->add_option("--subsample", d.subsample_n, "random subset of this size (0 keeps all)");
  app->add_option("--subsample-seed", d.subsample_seed, "seed for --subsample");
}

std::pair<std::size_t, std::size_t> parse_pair(const std::string& s, const char* what) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw ConfigError(std::string(what) + " must be A:B");
  return {std::stoull(s.substr(0, colon)), std::stoull(s.substr(colon + 1))};
}

DatasetSplit load_data(const DataArgs& d) {
  DatasetSplit split;
  if (!d.blobs.empty()) {
    std::vector<std::size_t> parts;
    std::stringstream in(d.blobs);
    for (std::string item; std::getline(in, item, ':');) parts.push_back(std::stoull(item));
    if (parts.size() != 3) throw ConfigError("--blobs must be N:K:DIM");
    split = make_blobs(parts[0], parts[1], parts[2], d.blob_seed, BlobOptions{d.blob_spread, d.blob_noise});
  } else if (!d.idx.empty()) {
    split = load_idx(d.idx[0], d.idx[1], d.classes);
  } else {
    std::vector<DatasetSplit> parts;
    for (const auto& p : d.cifar) parts.push_back(load_cifar10(p, d.classes));
    split = parts.size() == 1 ? std::move(parts[0]) : concat(parts, "cifar");
  }
  if (!d.range.empty()) {
    const auto [lo, hi] = parse_pair(d.range, "--range");
    split = slice(split, lo, hi);
  }
  if (d.subsample_n > 0 && d.subsample_n < split.size()) split = subsample(split, d.subsample_n, d.subsample_seed);
  return split;
}

struct AttackArgs {
  std::vector<std::string> attacks;  // kind[:iterations]
  bool protocol = false;
  double epsilon = 8.0 / 255.0;
  double step = -1;  // default epsilon / 10
  std::size_t restarts = 1;
  std::uint64_t seed = 0;
};

void add_attack_options(CLI::App* app, AttackArgs& a, bool allow_list) {
  if (allow_list) {
    app->add_option("--attack", a.attacks, "attack kind[:iterations], repeatable (fgsm, bim, pgd, apgd, a3)");
    app->add_flag("--protocol", a.protocol, "PGD-100, APGD-100 and A3-100");
  } else {
    app->add_option("--attack", a.attacks, "attack kind[:iterations]")->required()->expected(1);
  }
  app->add_option("--epsilon", a.epsilon, "L-inf budget in pixel units");
  app->add_option("--step", a.step, "step size (default epsilon/10)");
  app->add_option("--restarts", a.restarts, "random restarts for pgd/apgd/a3");
  app->add_option("--seed", a.seed, "attack seed");
}

std::vector<AttackConfig> build_attacks(const AttackArgs& a) {
  const double step = a.step > 0 ? a.step : a.epsilon / 10.0;
  std::vector<AttackConfig> out;
  if (a.protocol) out = default_protocol(a.epsilon, a.seed);
  for (const auto& spec : a.attacks) {
    const auto colon = spec.find(':');
    const auto kind = attack_kind_from_string(spec.substr(0, colon));
    const std::size_t iters = colon == std::string::npos ? (kind == AttackKind::kBim ? 20 : 100)
                                                         : std::stoull(spec.substr(colon + 1));
    AttackConfig c;
    switch (kind) {
      case AttackKind::kFgsm: c = AttackConfig::fgsm(a.epsilon); break;
      case AttackKind::kBim: c = AttackConfig::bim(a.epsilon, std::min(step, a.epsilon), iters); break;
      case AttackKind::kPgd: c = AttackConfig::pgd(a.epsilon, std::min(step, a.epsilon), iters, a.seed); break;
      case AttackKind::kApgd: c = AttackConfig::apgd_attack(a.epsilon, std::min(step, a.epsilon), iters, a.seed); break;
      case AttackKind::kA3: c = AttackConfig::a3(a.epsilon, iters, a.seed); break;
    }
    if (kind != AttackKind::kFgsm && kind != AttackKind::kBim) c.restarts = a.restarts;
    c.validate();
    out.push_back(c);
  }
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

struct TrainArgs {
  std::string arch = "tinymlp";
  std::size_t hidden = 64;
  std::size_t in_channels = 3;
  std::size_t image_size = 32;
  bool pad_to_32 = false;
  std::string objective = "ce+mucs";
  std::size_t iters = 500;
  double lr = 1e-3;
  std::size_t batch = 128;
  std::uint64_t seed = 0;
  std::size_t eval_every = 50;
  double temperature = 100.0;
  double vanished_target = 0.995;
  double mucs_weight = 1.0;
  std::string out = "model.sfit";
  std::string log;
};

int run_train(const TrainArgs& t, const DataArgs& d) {
  const auto data = load_data(d);
  ArchSpec spec;
  if (t.arch == "tinymlp") {
    if (data.example_shape.size() != 1) throw ConfigError("tinymlp needs vector examples (use --blobs)");
    spec = TinyMlpSpec{data.example_shape[0], t.hidden, data.num_classes};
  } else if (t.arch == "middlecnn") {
    MiddleCnnSpec m;
    m.in_channels = data.example_shape.at(0);
    m.image_size = data.example_shape.at(1);
    m.num_classes = data.num_classes;
    m.pad_to_32 = t.pad_to_32;
    spec = m;
  } else {
    throw ConfigError("unknown architecture '" + t.arch + "'");
  }
  TrainConfig cfg;
  cfg.objective = objective_from_string(t.objective);
  cfg.adam.learning_rate = t.lr;
  cfg.batch_size = t.batch;
  cfg.max_iterations = t.iters;
  cfg.seed = t.seed;
  cfg.eval_every = t.eval_every;
  cfg.temperature = t.temperature;
  cfg.vanished_target = t.vanished_target;
  cfg.mucs_weight = t.mucs_weight;

  TrainResult<float> result = [&] {
    if (cfg.objective == Objective::kDistill) {
      auto r = train_distill(build_model<float>(spec, t.seed), build_model<float>(spec, t.seed + 1), data, cfg, cfg,
                             t.temperature);
      return std::move(r.student);
    }
    return train(build_model<float>(spec, t.seed), data, cfg);
  }();
  save_checkpoint(t.out, result.model, result.iterations, &result.optimizer);
  if (!t.log.empty()) write_text(t.log, result.log.to_jsonl());
  const auto& last = result.log.records.back();
  std::cerr << "trained " << result.iterations << " iterations: clean " << last.clean_accuracy << ", vanished "
            << last.vanished_fraction << " -> " << t.out << "\n";
  return 0;
}

int run_attack_cmd(const std::string& checkpoint, const DataArgs& d, const AttackArgs& a, std::size_t limit) {
  const auto model = load_checkpoint<float>(checkpoint).model;
  auto data = load_data(d);
  if (limit > 0 && limit < data.size()) data = slice(data, 0, limit);
  const auto cfg = build_attacks(a).at(0);
  const auto x = data.images<float>(0, data.size());
  const auto adv = run_attack(model, x, data.labels, cfg);
  std::size_t success = 0;
  double max_linf = 0, loss = 0;
  for (std::size_t i = 0; i < adv.success.size(); ++i) {
    success += adv.success[i];
    loss += adv.loss[i];
  }
  for (std::size_t i = 0; i < x.numel(); ++i) {
    max_linf = std::max(max_linf, static_cast<double>(std::abs(adv.x_adv.at(i) - x.at(i))));
  }
  const double n = static_cast<double>(data.size());
  nlohmann::json j{{"attack", attack_to_json(cfg)},
                   {"n_examples", data.size()},
                   {"success_rate", success / n},
                   {"robust_accuracy", 1.0 - success / n},
                   {"mean_loss", loss / n},
                   {"max_linf", max_linf}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"super-fitting robustness lab"};
  app.set_config("--config", "", "read options from a TOML/INI file");
  app.require_subcommand(1);

  TrainArgs targs;
  DataArgs tdata;
  auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint");
  add_data_options(train_cmd, tdata);
  train_cmd->add_option("--arch", targs.arch, "tinymlp | middlecnn")->capture_default_str();
  train_cmd->add_option("--hidden", targs.hidden, "tinymlp hidden width")->capture_default_str();
  train_cmd->add_flag("--pad-to-32", targs.pad_to_32, "zero-pad images up to 32x32 (MNIST)");
  train_cmd->add_option("--objective", targs.objective, "ce | mucs | ce+mucs | distill | adv")->capture_default_str();
  train_cmd->add_option("--iters", targs.iters, "iteration budget")->capture_default_str();
  train_cmd->add_option("--lr", targs.lr, "Adam learning rate")->capture_default_str();
  train_cmd->add_option("--batch-size", targs.batch, "batch size")->capture_default_str();
  train_cmd->add_option("--seed", targs.seed, "init and shuffle seed")->capture_default_str();
  train_cmd->add_option("--eval-every", targs.eval_every, "log interval")->capture_default_str();
  train_cmd->add_option("--temperature", targs.temperature, "distillation temperature")->capture_default_str();
  train_cmd->add_option("--vanished-target", targs.vanished_target, "early stop for MUCS objectives")
      ->capture_default_str();
  train_cmd->add_option("--mucs-weight", targs.mucs_weight, "weight of the MUCS term")->capture_default_str();
  train_cmd->add_option("--out", targs.out, "checkpoint path")->capture_default_str();
  train_cmd->add_option("--log", targs.log, "JSON-lines training log");

  std::string ckpt;
  DataArgs adata;
  AttackArgs aargs;
  std::size_t limit = 0;
  auto* attack_cmd = app.add_subcommand("attack", "attack a checkpoint and print summary statistics");
  attack_cmd->add_option("--checkpoint", ckpt, "checkpoint path")->required()->check(CLI::ExistingFile);
  add_data_options(attack_cmd, adata);
  add_attack_options(attack_cmd, aargs, false);
  attack_cmd->add_option("--limit", limit, "attack only the first N examples");

  DataArgs edata;
  AttackArgs eargs;
  std::string report_path, csv_path;
  bool table = false;
  std::size_t eval_batch = 128;
  auto* eval_cmd = app.add_subcommand("eval", "clean and robust accuracy report");
  eval_cmd->add_option("--checkpoint", ckpt, "checkpoint path")->required()->check(CLI::ExistingFile);
  add_data_options(eval_cmd, edata);
  add_attack_options(eval_cmd, eargs, true);
  eval_cmd->add_option("--batch-size", eval_batch, "evaluation batch size")->capture_default_str();
  eval_cmd->add_option("--out", report_path, "JSON report path (default stdout)");
  eval_cmd->add_option("--csv", csv_path, "also write the report as CSV");
  eval_cmd->add_flag("--table", table, "print an aligned text table to stderr");

  DataArgs ldata;
  std::string stats_out;
  auto* stats_cmd = app.add_subcommand("logits-stats", "per-class mean logits as CSV");
  stats_cmd->add_option("--checkpoint", ckpt, "checkpoint path")->required()->check(CLI::ExistingFile);
  add_data_options(stats_cmd, ldata);
  stats_cmd->add_option("--out", stats_out, "CSV path (default stdout)");

  GradCheckOptions gopts;
  bool quiet = false;
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of every gradient");
  grad_cmd->add_option("--seed", gopts.seed, "case seed")->capture_default_str();
  grad_cmd->add_option("--cases", gopts.cases_per_op, "random cases per op")->capture_default_str();
  grad_cmd->add_flag("--quiet", quiet, "print only the summary line");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) return run_train(targs, tdata);
    if (*attack_cmd) return run_attack_cmd(ckpt, adata, aargs, limit);
    if (*eval_cmd) {
      const auto model = load_checkpoint<float>(ckpt).model;
      auto data = load_data(edata);
      const auto attacks = build_attacks(eargs);
      EvalOptions opts;
      opts.batch_size = eval_batch;
      opts.seed = eargs.seed;
      const auto report = evaluate(model, data, attacks, opts);
      write_text(report_path, report.to_json().dump(2) + "\n");
      if (!csv_path.empty()) write_text(csv_path, report.to_csv());
      if (table) std::cerr << report.to_table();
      return 0;
    }
    if (*stats_cmd) {
      const auto model = load_checkpoint<float>(ckpt).model;
      write_text(stats_out, logits_stats(model, load_data(ldata)).to_csv());
      return 0;
    }
    if (*grad_cmd) {
      const auto report = run_gradcheck(gopts);
      const auto text = report.to_text();
      std::cout << (quiet ? text.substr(text.rfind('\n', text.size() - 2) + 1) : text);
      return report.passed() ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
