#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "pdgsim/datagen.hpp"
#include "pdgsim/errors.hpp"
#include "pdgsim/gradcheck.hpp"
#include "pdgsim/training.hpp"

using namespace pdgsim;

namespace {

// Exhaustive F1 oracle over a confusion matrix built by hand.
double f1_oracle(const std::vector<double>& s, const std::vector<int>& y, double eps) {
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const bool p = s[i] >= eps;
    tp += p && y[i] == 1;
    fp += p && y[i] == 0;
    fn += !p && y[i] == 1;
  }
  return tp == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn);
}

DatasetSplit tiny_split(int n, std::uint64_t seed) {
  const auto pairs = generate_dataset(builtin_seed_groups(), n, seed);
  DatasetSplit d;
  for (std::size_t i = 0; i < pairs.size(); ++i)
    d.train.push_back(make_example("p" + std::to_string(i), pairs[i].source_a, pairs[i].source_b,
                                   pairs[i].label));
  d.val = {};
  for (const auto& e : d.train) d.val.push_back({e.id, e.a, e.b, e.label});
  return d;
}

}  // namespace

TEST_CASE("kaiming bound") {
  const double expected = std::sqrt(2.0 / (1.0 + 0.02 * 0.02)) * std::sqrt(3.0 / 18.0);
  CHECK(std::abs(kaiming_bound(18, 0.02) - expected) < 1e-15);
  CHECK(std::abs(expected - 0.577235) < 1e-6);
  std::mt19937_64 a(5), b(5);
  const Matrix m = kaiming_uniform_init(18, 100, 0.02, a);
  CHECK(m == kaiming_uniform_init(18, 100, 0.02, b));
  CHECK(m.cwiseAbs().maxCoeff() <= expected);
}

TEST_CASE("first Adam step moves each coordinate by about lr") {
  ad::ParamStore ps;
  Matrix w(1, 3);
  w << 1.0, 2.0, 3.0;
  ps.add("w", w);
  ps.get("w").mutable_grad() = (Matrix(1, 3) << 0.5, 0.0, -4.0).finished();
  TrainConfig cfg;
  AdamState st(ps);
  adam_step(ps, st, cfg);
  const Matrix& after = ps.get("w").data();
  CHECK(after(0, 0) == doctest::Approx(1.0 - cfg.learning_rate).epsilon(1e-6));
  CHECK(after(0, 1) == 2.0);
  CHECK(after(0, 2) == doctest::Approx(3.0 + cfg.learning_rate).epsilon(1e-6));
}

TEST_CASE("threshold moving") {
  const std::vector<double> grid = TrainConfig{}.grid;
  CHECK(threshold_moving({0.9, 0.9, 0.1, 0.1}, {1, 1, 0, 0}, grid) == 0.2);
  CHECK(threshold_moving({0.45, 0.55}, {0, 1}, grid) == 0.5);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s;
    std::vector<int> y;
    for (int i = 0; i < 50; ++i) {
      y.push_back(static_cast<int>(rng() % 2));
      s.push_back(std::clamp(u(rng) * 0.6 + 0.4 * y.back(), 0.0, 1.0));
    }
    const double eps = threshold_moving(s, y, grid);
    double best = -1.0, best_eps = 0.0;
    for (double g : grid)
      if (f1_oracle(s, y, g) > best) best = f1_oracle(s, y, g), best_eps = g;
    CHECK(eps == best_eps);
    CHECK(f1_at(s, y, eps) == doctest::Approx(best).epsilon(1e-15));
  }
}

TEST_CASE("AUC and F1 identities") {
  CHECK(roc_auc({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}) == 1.0);
  CHECK(evaluate({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}, 0.5).f1 == 1.0);
  CHECK(roc_auc({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0}) == 0.5);
  CHECK_THROWS_AS(roc_auc({0.5, 0.6}, {1, 1}), SingleClass);
  CHECK(std::isnan(evaluate({0.5, 0.6}, {1, 1}, 0.5).auc));

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<double> s;
    std::vector<int> y = {0, 1};
    for (int i = 0; i < 60; ++i) {
      // Coarse scores so ties occur.
      s.push_back(std::round(u(rng) * 20) / 20);
      if (i >= 2) y.push_back(static_cast<int>(rng() % 2));
    }
    const double auc = roc_auc(s, y);
    CHECK(std::abs(auc - oracle::mann_whitney_auc(s, y)) < 1e-9);
    std::vector<double> cubed;
    for (double v : s) cubed.push_back(v * v * v);
    CHECK(std::abs(roc_auc(cubed, y) - auc) < 1e-12);

    const EvalReport r = evaluate(s, y, 0.5);
    CHECK(r.tp + r.fp + r.tn + r.fn == 60);
    if (r.precision + r.recall > 0)
      CHECK(std::abs(r.f1 - 2 * r.precision * r.recall / (r.precision + r.recall)) < 1e-12);
    CHECK(std::abs(r.f1 - f1_oracle(s, y, 0.5)) < 1e-12);
  }
}

TEST_CASE("ROC curve shape and CSV") {
  const auto pts = roc_curve({0.9, 0.4, 0.4, 0.1}, {1, 1, 0, 0});
  REQUIRE(pts.size() == 4);
  CHECK(std::isinf(pts[0].threshold));
  CHECK(pts[1].tpr == 0.5);
  CHECK(pts[2].tpr == 1.0);
  CHECK(pts[2].fpr == 0.5);
  CHECK(pts.back().fpr == 1.0);
  CHECK(roc_csv(pts).rfind("threshold,tpr,fpr\n", 0) == 0);
  CHECK(history_csv({{1, 0.5, 0.25}}) == "epoch,loss,val_f1\n1,0.5,0.25\n");
}

TEST_CASE("training smoke test and determinism") {
  DatasetSplit d = tiny_split(4, 1);
  TrainConfig tc;
  tc.epochs = 2;
  ModelConfig mc = gradcheck_config(Variant::EdgeAttributed);
  const TrainResult a = train(d, tc, mc);
  const TrainResult b = train(d, tc, mc);
  CHECK(a.history.size() == 2);
  CHECK(std::isfinite(a.history[0].loss));
  CHECK(serialize_model(a.model, a.threshold) == serialize_model(b.model, b.threshold));

  Model init(mc, tc.seed);
  bool moved = false;
  for (std::size_t i = 0; i < init.params().size(); ++i)
    if (init.params().at(i).requires_grad() && init.params().at(i).data() != a.model.params().at(i).data())
      moved = true;
  CHECK(moved);

  DatasetSplit empty;
  CHECK_THROWS_AS(train(empty, tc, mc), EmptyDataset);
}

TEST_CASE("every parameter receives a finite gradient") {
  DatasetSplit d = tiny_split(2, 2);
  Model model(ModelConfig{}, 1);
  model.params().zero_grads();
  ad::Value loss = bce_loss(pair_scores({{&d.train[0].a, &d.train[0].b}}, model), {d.train[0].label});
  ad::backward(loss, model.params());
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    const auto& p = model.params().at(i);
    if (!p.requires_grad()) continue;
    INFO(model.params().name(i));
    CHECK(p.grad().allFinite());
  }
}
