// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "sfit/attacks.hpp"
#include "sfit/checkpoint.hpp"
#include "sfit/errors.hpp"
#include "sfit/evaluation.hpp"
#include "sfit/gradcheck.hpp"
#include "sfit/losses.hpp"
#include "sfit/training.hpp"

using namespace sfit;

namespace {

using Clock = std::chrono::steady_clock;

int failures = 0;

void report(int id, bool ok, double seconds, const std::string& detail) {
  std::printf("criterion %2d: %s  (%.1fs)  %s\n", id, ok ? "PASS" : "FAIL", seconds, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

template <typename T>
Tensor<T> uniform(const Shape& shape, std::mt19937_64& rng, double lo, double hi, bool grad = false) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<T> v(n);
  for (auto& e : v) e = static_cast<T>(u(rng));
  return Tensor<T>(shape, std::move(v), grad);
}

template <typename T>
bool same_bytes(std::span<const T> a, std::span<const T> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size_bytes()) == 0;
}

// 1. Finite-difference suite over every op plus TinyMLP and MiddleCNN losses.
void gradient_correctness() {
  const auto t0 = Clock::now();
  const auto r = run_gradcheck();
  std::size_t passed = 0;
  for (const auto& c : r.cases) passed += c.passed;
  const double s = since(t0);
  report(1, r.passed() && r.cases.size() >= 100 && s < 120.0, s,
         std::to_string(passed) + "/" + std::to_string(r.cases.size()) + " cases");
}

// 2. Closed-form CE logit gradient against reverse mode, 64-bit.
void closed_form_ce() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> kdist(2, 20), bdist(1, 16);
  std::uniform_real_distribution<double> scale(0.1, 100.0);
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = kdist(rng), b = bdist(rng);
    const double s = scale(rng);
    auto z = uniform<double>({b, k}, rng, -s, s, true);
    std::vector<int> y(b);
    for (auto& v : y) v = std::uniform_int_distribution<int>(0, static_cast<int>(k) - 1)(rng);
    LogitsBatch<double> batch(z, y);
    Tape<double> tape;
    tape.backward(ce_loss(tape, batch, Reduction::kSum));
    const auto closed = ce_grad_logits(batch);
    for (std::size_t i = 0; i < z.numel(); ++i) worst = std::max(worst, std::abs(closed.at(i) - z.grad()[i]));
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "max |closed - AD| = %.3g", worst);
  report(2, worst <= 1e-12, since(t0), buf);
}

// Final dense layer zeroed with bias (0 at `y`, `gap` elsewhere), so the
// logits are exactly z_y = 0 and z_k = gap for every input.
template <typename T>
void wire_logits(Model<T>& m, int y, T gap) {
  auto& out = std::get<typename Model<T>::Dense>(m.layers().back());
  for (auto& w : out.weight.mutable_values()) w = T(0);
  auto b = out.bias.mutable_values();
  for (std::size_t k = 0; k < b.size(); ++k) b[k] = static_cast<int>(k) == y ? T(0) : gap;
}

template <typename T>
bool vanishing_case(std::mt19937_64& rng, T gap, std::string& detail) {
  bool ok = true;
  // Closed form on constructed logits, gaps at and beyond the bound.
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 2 + trial % 9, b = 1 + trial % 5;
    auto z = uniform<T>({b, k}, rng, 4.0 * gap, static_cast<double>(gap));
    std::vector<int> y(b);
    for (std::size_t r = 0; r < b; ++r) {
      y[r] = static_cast<int>((trial + r) % k);
      z.mutable_values()[r * k + static_cast<std::size_t>(y[r])] = T(0);
    }
    const auto g = ce_grad_logits(LogitsBatch<T>(z, y));
    for (T v : g.values()) ok = ok && v == T(0);
  }
  if (!ok) detail += " closed-form nonzero;";

  // Attacks through full models wired to emit those logits.
  std::vector<Model<T>> models;
  models.push_back(build_tinymlp<T>(24, 32, 10, 3));
  std::vector<Shape> shapes{{6, 24}};
  if constexpr (sizeof(T) == 4) {
    models.push_back(build_middlecnn<T>(3, 32, 10, 3));
    shapes.push_back({3, 3, 32, 32});
  }
  for (std::size_t i = 0; i < models.size(); ++i) {
    const int y = 3;
    wire_logits(models[i], y, gap);
    const auto x = uniform<T>(shapes[i], rng, 0.0, 1.0);
    const std::vector<int> labels(shapes[i][0], y);
    const double eps = 8.0 / 255.0;
    const bool f = same_bytes(fgsm(models[i], x, labels, AttackConfig::fgsm(eps)).x_adv.values(), x.values());
    const bool b = same_bytes(bim(models[i], x, labels, AttackConfig::bim(eps, eps / 10, 20)).x_adv.values(), x.values());
    if (!f || !b) detail += " attack moved x (model " + std::to_string(i) + ");";
    ok = ok && f && b;
  }
  return ok;
}

// 3. Underflowed softmax gives exactly zero gradients and frozen attacks.
void gradient_vanishing() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(3);
  std::string detail;
  const bool d = vanishing_case<double>(rng, -800.0, detail);
  const bool f = vanishing_case<float>(rng, -100.0f, detail);
  report(3, d && f, since(t0), detail.empty() ? "64-bit gap 800, 32-bit gap 100: zero gradients, x_adv == x" : detail);
}

// 4. Cosine step schedule.
void a3_schedule() {
  const auto t0 = Clock::now();
  bool ok = true;
  for (double eps : {8.0 / 255.0, 0.3, 1.0 / 255.0}) {
    for (std::size_t total : {2, 10, 100, 1000}) {
      ok = ok && a3_step_size(0, total, eps) == eps;
      ok = ok && a3_step_size(total / 2, total, eps) == eps / 2;
      for (std::size_t n = 1; n < total; ++n) ok = ok && a3_step_size(n, total, eps) <= a3_step_size(n - 1, total, eps);
    }
  }
  report(4, ok, since(t0), "alpha(0) = eps, alpha(N/2) = eps/2, non-increasing");
}

// 5. Every attack output stays in the eps-ball and the unit box.
template <typename T>
bool inside(const AdversarialBatch<T>& adv, double eps) {
  const auto xo = adv.x_orig.values(), xa = adv.x_adv.values();
  const T e = static_cast<T>(eps);
  for (std::size_t i = 0; i < xo.size(); ++i) {
    if (!(xa[i] >= T(0) && xa[i] <= T(1) && xa[i] >= xo[i] - e && xa[i] <= xo[i] + e)) return false;
  }
  return true;
}

template <typename T>
bool constraint_case(std::uint64_t seed, AttackKind kind) {
  std::mt19937_64 rng(seed);
  const std::size_t d = std::uniform_int_distribution<std::size_t>(2, 16)(rng);
  const std::size_t k = std::uniform_int_distribution<std::size_t>(2, 6)(rng);
  auto model = build_tinymlp<T>(d, 8, k, seed);
  // Every fourth model gets large output weights so its softmax saturates.
  if (seed % 4 == 0) {
    for (auto& w : std::get<typename Model<T>::Dense>(model.layers().back()).weight.mutable_values()) w *= T(500);
  }
  auto x = uniform<T>({3, d}, rng, 0.0, 1.0);
  // Put some coordinates on the box faces.
  for (auto& v : x.mutable_values()) {
    const double u = std::uniform_real_distribution<double>(0, 1)(rng);
    if (u < 0.1) v = T(0);
    else if (u < 0.2) v = T(1);
  }
  std::vector<int> y(3);
  for (auto& v : y) v = std::uniform_int_distribution<int>(0, static_cast<int>(k) - 1)(rng);
  const double eps = seed % 10 == 0 ? 0.0 : std::uniform_real_distribution<double>(1e-3, 0.5)(rng);
  const double step = eps / 4;
  const std::size_t iters = std::uniform_int_distribution<std::size_t>(1, 12)(rng);
  AttackConfig cfg;
  switch (kind) {
    case AttackKind::kFgsm: cfg = AttackConfig::fgsm(eps); break;
    case AttackKind::kBim: cfg = AttackConfig::bim(eps, step, iters); break;
    case AttackKind::kPgd: cfg = AttackConfig::pgd(eps, step, iters, seed); break;
    case AttackKind::kApgd: cfg = AttackConfig::apgd_attack(eps, step, iters, seed); break;
    case AttackKind::kA3: cfg = AttackConfig::a3(eps, iters, seed); break;
  }
  return inside(run_attack(model, x, y, cfg), eps);
}

void constraint_suite() {
  const auto t0 = Clock::now();
  std::string detail;
  bool ok = true;
  for (auto kind : {AttackKind::kFgsm, AttackKind::kBim, AttackKind::kPgd, AttackKind::kApgd, AttackKind::kA3}) {
    std::size_t good = 0;
    for (std::uint64_t s = 0; s < 1000; ++s) good += s % 2 ? constraint_case<float>(s, kind) : constraint_case<double>(s, kind);
    detail += to_string(kind) + " " + std::to_string(good) + "/1000 ";
    ok = ok && good == 1000;
  }
  const double s = since(t0);
  report(5, ok && s < 300.0, s, detail);
}

// Desk experiment: two-class blobs in 2048 dimensions, TinyMLP with 128
// hidden units, Adam at 1e-3 for at most 500 iterations.
struct Desk {
  static constexpr std::size_t kDim = 2048, kHidden = 128, kTrain = 1000, kTest = 500;
  static constexpr std::uint64_t kDataSeed = 1, kModelSeed = 0, kStudentSeed = 100;
  static constexpr double kTemperature = 100.0;

  DatasetSplit train, test;
  Desk() {
    const auto all = make_blobs(kTrain + kTest, 2, kDim, kDataSeed, {0.04, 0.15});
    train = slice(all, 0, kTrain);
    test = slice(all, kTrain, kTrain + kTest);
  }

  static TrainConfig config(Objective objective) {
    TrainConfig c;
    c.objective = objective;
    c.seed = kModelSeed;
    c.eval_every = 25;
    return c;
  }
  static std::vector<AttackConfig> attacks() {
    const double eps = 8.0 / 255.0;
    return {AttackConfig::fgsm(eps), AttackConfig::bim(eps, eps / 10, 20), AttackConfig::pgd(eps, eps / 10, 100, 0),
            AttackConfig::apgd_attack(eps, eps / 10, 100, 0), AttackConfig::a3(eps, 100, 0)};
  }
  TrainResult<float> superfit() const {
    return sfit::train(build_tinymlp<float>(kDim, kHidden, 2, kModelSeed), train, config(Objective::kCeMucs));
  }
};

const AttackOutcome& outcome(const EvalReport& r, const std::string& prefix) {
  for (const auto& a : r.attacks)
    if (a.name.rfind(prefix, 0) == 0) return a;
  throw UsageError("no attack named " + prefix);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

void desk_experiment() {
  const Desk desk;
  auto t0 = Clock::now();
  const auto sf = desk.superfit();
  const auto attacks = Desk::attacks();
  const auto rs = evaluate(sf.model, desk.test, attacks);
  const double sf_seconds = since(t0);

  const auto& fg = outcome(rs, "FGSM");
  const auto& bi = outcome(rs, "BIM");
  const auto& pg = outcome(rs, "PGD");
  const auto& ap = outcome(rs, "APGD");
  const auto& a3 = outcome(rs, "A3");

  // 6. Super-fitting versus CE-only under the same budget.
  t0 = Clock::now();
  const auto ce = sfit::train(build_tinymlp<float>(Desk::kDim, Desk::kHidden, 2, Desk::kModelSeed), desk.train,
                              Desk::config(Objective::kCe));
  const auto rc = evaluate(ce.model, desk.test, std::span<const AttackConfig>(&attacks[2], 1));
  const bool a = rs.vanished_fraction >= 0.99;
  const bool b = pg.vanished_correct_adv == pg.vanished_correct_clean &&
                 ap.vanished_correct_adv == ap.vanished_correct_clean;
  const bool c = std::abs(rs.clean_accuracy - pg.robust_accuracy) <= 0.02;
  const double ce_pgd = rc.attacks[0].robust_accuracy;
  const bool d = rc.vanished_fraction < 0.5 && rc.clean_accuracy - ce_pgd >= 0.20;
  report(6, a && b && c && d && sf.iterations <= 500, sf_seconds + since(t0),
         fmt("SF: %.0f iters, clean %.3f, vanished %.3f, ", static_cast<double>(sf.iterations), rs.clean_accuracy,
             rs.vanished_fraction) +
             fmt("PGD %.3f APGD %.3f on vanished %.0f/", pg.robust_accuracy, ap.robust_accuracy,
                 static_cast<double>(pg.vanished_correct_adv)) +
             std::to_string(pg.vanished_correct_clean) +
             fmt("; CE: clean %.3f, vanished %.3f, PGD %.3f", rc.clean_accuracy, rc.vanished_fraction, ce_pgd));

  // 7. Distillation comparison.
  t0 = Clock::now();
  const auto dcfg = Desk::config(Objective::kDistill);
  const auto dd = train_distill(build_tinymlp<float>(Desk::kDim, Desk::kHidden, 2, Desk::kModelSeed),
                                build_tinymlp<float>(Desk::kDim, Desk::kHidden, 2, Desk::kStudentSeed), desk.train,
                                dcfg, dcfg, Desk::kTemperature);
  const auto rd = evaluate(dd.student.model, desk.test, std::span<const AttackConfig>(attacks.data(), 2));
  const double dd_fgsm = rd.attacks[0].robust_accuracy, dd_bim = rd.attacks[1].robust_accuracy;
  const bool equal = fg.correct == rs.clean_correct && bi.correct == rs.clean_correct;
  const bool exceed = fg.robust_accuracy > dd_fgsm && bi.robust_accuracy > dd_bim;
  report(7, equal && exceed, since(t0),
         fmt("SF clean %.3f FGSM %.3f BIM-20 %.3f; ", rs.clean_accuracy, fg.robust_accuracy, bi.robust_accuracy) +
             fmt("DD(T=100) clean %.3f FGSM %.3f BIM-20 %.3f", rd.clean_accuracy, dd_fgsm, dd_bim));

  // 8. Polarized logits.
  const double margin = rs.logits.min_diagonal_margin();
  report(8, margin > 10.0, 0.0, fmt("min diagonal margin %.1f", margin));

  // 9. A3 directions survive where CE gradients vanish.
  t0 = Clock::now();
  const auto x = desk.test.images<float>(0, desk.test.size());
  const auto w = a3_sample_directions<float>(desk.test.size(), 2, attacks[4], 0, 0);
  DirectionResult info;
  a3_direction(sf.model, x, w, &info);
  const auto g = ce_input_gradient(sf.model, x, desk.test.labels);
  const std::size_t per = x.numel() / desk.test.size();
  std::size_t nonzero_dir = 0, zero_ce = 0;
  for (std::size_t i = 0; i < desk.test.size(); ++i) {
    nonzero_dir += !info.zero_gradient[i];
    const auto row = g.grad.values().subspan(i * per, per);
    zero_ce += std::all_of(row.begin(), row.end(), [](float v) { return v == 0.0f; });
  }
  const double frac = static_cast<double>(nonzero_dir) / static_cast<double>(desk.test.size());
  report(9, frac >= 0.9, since(t0),
         fmt("a3 direction nonzero %.3f, CE gradient zero %.3f, A3-100 %.3f vs PGD-100 %.3f", frac,
             static_cast<double>(zero_ce) / static_cast<double>(desk.test.size()), a3.robust_accuracy,
             pg.robust_accuracy));

  // 10. A second run from the same seeds gives the same bytes.
  t0 = Clock::now();
  const auto again = desk.superfit();
  const auto r2 = evaluate(again.model, desk.test, attacks);
  const bool ckpt = serialize_checkpoint(sf.model, sf.iterations, &sf.optimizer) ==
                    serialize_checkpoint(again.model, again.iterations, &again.optimizer);
  const bool json = rs.to_json().dump() == r2.to_json().dump();
  const bool csv = rs.to_csv() == r2.to_csv();
  report(10, ckpt && json && csv && sf.log.to_jsonl() == again.log.to_jsonl(), since(t0),
         std::string("checkpoint ") + (ckpt ? "identical" : "differs") + ", report " +
             (json && csv ? "identical" : "differs"));
}

}  // namespace

int main() {
  try {
    gradient_correctness();
    closed_form_ce();
    gradient_vanishing();
    a3_schedule();
    constraint_suite();
    desk_experiment();
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 2;
  }
  std::printf("%s: %d criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
