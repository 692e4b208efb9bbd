#include <doctest.h>

#include <cmath>
#include <random>

#include "pdgsim/errors.hpp"
#include "pdgsim/gradcheck.hpp"
#include "pdgsim/model.hpp"

using namespace pdgsim;
using ad::Value;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = d(rng);
  return m;
}

double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

ModelConfig small(Variant v = Variant::EdgeAttributed) { return gradcheck_config(v); }

}  // namespace

TEST_CASE("linear embedding") {
  std::mt19937_64 rng(1);
  Model model(small(), 4);
  const Matrix& w = model.params().get("embed.W").data();
  const Matrix& b = model.params().get("embed.b").data();

  const Matrix zero_out = linear_embed(Matrix::Zero(3, 18), model).data();
  for (Eigen::Index r = 0; r < 3; ++r) CHECK(zero_out.row(r) == b);

  Matrix onehot = Matrix::Zero(1, 18);
  onehot(0, 5) = 1.0;
  CHECK((linear_embed(onehot, model).data() - (w.row(5) + b)).cwiseAbs().maxCoeff() < 1e-15);

  const Matrix x = random_matrix(4, 18, rng);
  const Matrix got = linear_embed(x, model).data();
  for (Eigen::Index i = 0; i < 4; ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      double acc = b(0, j);
      for (Eigen::Index k = 0; k < 18; ++k) acc += x(i, k) * w(k, j);
      CHECK(std::abs(got(i, j) - acc) < 1e-12);
    }
  CHECK_THROWS_AS(linear_embed(Matrix::Zero(2, 5), model), ShapeError);
}

TEST_CASE("attention head on a single node") {
  std::mt19937_64 rng(2);
  Adjacency adj{Matrix::Ones(1, 1), true};
  const Value h = ad::constant(random_matrix(1, 4, rng));
  const Value w = ad::constant(random_matrix(4, 3, rng));
  const Value a = ad::constant(random_matrix(6, 1, rng));
  const auto out = attention_head(adj, h, w, a, 0.02);
  CHECK(out.alpha(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK((out.out.data() - h.data() * w.data()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("attention head treats identical neighbors equally and normalizes rows") {
  std::mt19937_64 rng(3);
  Matrix feats = random_matrix(4, 4, rng);
  feats.row(2) = feats.row(1);
  Matrix adj = Matrix::Identity(4, 4);
  adj(1, 0) = adj(2, 0) = adj(3, 0) = 1;  // sources 1, 2, 3 feed node 0
  adj(0, 3) = 1;
  const auto out = attention_head(Adjacency{adj, true}, ad::constant(feats),
                                  ad::constant(random_matrix(4, 3, rng)),
                                  ad::constant(random_matrix(6, 1, rng)), 0.02);
  CHECK(std::abs(out.alpha(0, 1) - out.alpha(0, 2)) < 1e-15);
  for (Eigen::Index r = 0; r < 4; ++r) CHECK(std::abs(out.alpha.row(r).sum() - 1.0) < 1e-9);
  CHECK(out.alpha(1, 0) == 0.0);
}

TEST_CASE("attention blocks: shapes and zero inputs") {
  ModelConfig cfg;
  Model zero = Model::zeros(cfg);
  std::mt19937_64 rng(4);
  const GraphTensors g = make_graph_tensors(random_pdg(5, rng));
  const GraphBatch batch = batch_graphs(g);
  const Value h1 = attention_block1(batch, ad::constant(Matrix::Zero(5, 100)), zero, "data");
  CHECK(h1.cols() == 128);
  CHECK((h1.data().array() - 0.5).abs().maxCoeff() == 0.0);
  const Value h2 = attention_block2(batch, ad::constant(Matrix::Zero(5, 128)), zero, "data");
  CHECK(h2.cols() == 100);
  CHECK((h2.data().array() - 0.5).abs().maxCoeff() == 0.0);
}

TEST_CASE("attention block output follows a node permutation") {
  std::mt19937_64 rng(5);
  Model model(small(), 9);
  const Pdg p = random_pdg(6, rng);
  std::vector<int> perm = {3, 0, 5, 1, 4, 2};
  const Matrix h = random_matrix(6, model.config().d_hidden, rng);
  Matrix hp(6, h.cols());
  for (int i = 0; i < 6; ++i) hp.row(perm[static_cast<std::size_t>(i)]) = h.row(i);
  const Matrix a = attention_block1(batch_graphs(make_graph_tensors(p)), ad::constant(h), model, "data").data();
  const Matrix b = attention_block1(batch_graphs(make_graph_tensors(permute_pdg(p, perm))),
                                    ad::constant(hp), model, "data")
                       .data();
  for (int i = 0; i < 6; ++i)
    CHECK((a.row(i) - b.row(perm[static_cast<std::size_t>(i)])).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("block 2 sums its heads before the sigmoid") {
  std::mt19937_64 rng(6);
  ModelConfig cfg = small();
  Model model(cfg, 3);
  const GraphBatch batch = batch_graphs(make_graph_tensors(random_pdg(4, rng)));
  const Value h = ad::constant(random_matrix(4, cfg.block2_in(), rng));
  // Zeroing the last head's projection leaves sigmoid(sum of the others + 0).
  auto& w = model.params().get("data.attn2.W").mutable_data();
  w.rightCols(cfg.out_dim_block2).setZero();
  const Matrix full = attention_block2(batch, h, model, "data").data();
  const Matrix z = h.data() * w;
  Matrix pre = Matrix::Zero(4, cfg.out_dim_block2);
  const auto& m = batch.data.front();
  const Matrix& attn = model.params().get("data.attn2.a").data();
  for (int k = 0; k + 1 < cfg.heads_block2; ++k) {
    const Matrix zk = z.middleCols(k * cfg.out_dim_block2, cfg.out_dim_block2);
    Matrix alpha = Matrix::Zero(4, 4);
    for (int i = 0; i < 4; ++i) {
      double denom = 0.0;
      for (int j = 0; j < 4; ++j) {
        if (m(i, j) == 0) continue;
        double e = (zk.row(i) * attn.col(k).head(cfg.out_dim_block2))(0, 0) +
                   (zk.row(j) * attn.col(k).tail(cfg.out_dim_block2))(0, 0);
        e = e > 0 ? e : 0.02 * e;
        alpha(i, j) = std::exp(e);
        denom += alpha(i, j);
      }
      alpha.row(i) /= denom;
    }
    pre += alpha * zk;
  }
  const Matrix expected = pre.unaryExpr([](double x) { return sigm(x); });
  CHECK((full - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("lstm step") {
  ModelConfig cfg = small();
  SUBCASE("zero everything") {
    Model zero = Model::zeros(cfg);
    const auto out = lstm_step(ad::constant(Matrix::Zero(3, cfg.out_dim_block2)),
                               ad::constant(Matrix::Zero(3, cfg.lstm_hidden)), zero, "data");
    CHECK(out.cell.data().cwiseAbs().maxCoeff() == 0.0);
    CHECK(out.h.data().cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("element-loop oracle") {
    std::mt19937_64 rng(7);
    Model model(cfg, 5);
    const Matrix x = random_matrix(3, cfg.out_dim_block2, rng);
    const Matrix c = random_matrix(3, cfg.lstm_hidden, rng);
    const Matrix& w = model.params().get("data.lstm.W").data();
    const auto out = lstm_step(ad::constant(x), ad::constant(c), model, "data");
    const int hd = cfg.lstm_hidden;
    for (int r = 0; r < 3; ++r)
      for (int j = 0; j < hd; ++j) {
        double pre[4] = {0, 0, 0, 0};
        for (int g = 0; g < 4; ++g)
          for (int k = 0; k < x.cols(); ++k) pre[g] += x(r, k) * w(k, g * hd + j);
        const double i = sigm(pre[0]), f = sigm(pre[1]), o = sigm(pre[2]);
        const double cell = f * c(r, j) + i * std::tanh(pre[3]);
        CHECK(std::abs(out.cell.data()(r, j) - cell) < 1e-12);
        CHECK(std::abs(out.h.data()(r, j) - o * std::tanh(cell)) < 1e-12);
      }
  }
  SUBCASE("saturated forget gate passes memory through") {
    Model model = Model::zeros(cfg);
    auto& w = model.params().get("data.lstm.W").mutable_data();
    const int hd = cfg.lstm_hidden;
    w.middleCols(0, hd).setConstant(-1000.0);  // input gate -> 0
    w.middleCols(hd, hd).setConstant(1000.0);  // forget gate -> 1
    std::mt19937_64 rng(8);
    const Matrix c = random_matrix(2, hd, rng);
    const auto out = lstm_step(ad::constant(Matrix::Ones(2, cfg.out_dim_block2)), ad::constant(c),
                               model, "data");
    CHECK(out.cell.data() == c);
  }
}

TEST_CASE("node feature widths") {
  std::mt19937_64 rng(9);
  const GraphTensors g = make_graph_tensors(random_pdg(3, rng));
  ModelConfig cfg;
  cfg.rounds = 1;
  CHECK(final_node_features(g, Model(cfg, 1), nullptr).cols() == 200);
  cfg.no_jk = true;
  CHECK(final_node_features(g, Model(cfg, 1), nullptr).cols() == 100);
  ModelConfig def;
  CHECK(final_node_features(g, Model(def, 1), nullptr).cols() == 500);
}

TEST_CASE("pooling a single node") {
  ModelConfig cfg = small();
  Model model(cfg, 2);
  std::mt19937_64 rng(10);
  const Matrix h = random_matrix(1, cfg.node_width(), rng);
  const auto& p = model.params();
  const Matrix gate = (h * p.get("pool.gate.W").data() + p.get("pool.gate.b").data())
                          .unaryExpr([](double x) { return sigm(x); });
  const Matrix value = h * p.get("pool.value.W").data() + p.get("pool.value.b").data();
  const Matrix got = graph_pooling(ad::constant(h), model).data();
  CHECK((got - gate.cwiseProduct(value)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("EA with tied branches equals twice EU") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    Pdg p = random_pdg(6, rng);
    p.data_edges.clear();
    for (const auto& [s, d] : p.control_edges) p.data_edges.insert({s, d, "v"});
    const GraphTensors g = make_graph_tensors(p);
    Model ea(small(Variant::EdgeAttributed), rng());
    Model eu(small(Variant::EdgeUnified), 0);
    auto& ps = ea.params();
    for (std::size_t i = 0; i < ps.size(); ++i) {
      const std::string& name = ps.name(i);
      if (name.rfind("control.", 0) == 0)
        ps.at(i).mutable_data() = ps.get("data." + name.substr(8)).data();
    }
    for (std::size_t i = 0; i < eu.params().size(); ++i) {
      std::string name = eu.params().name(i);
      if (name.rfind("unified.", 0) == 0) name = "data." + name.substr(8);
      eu.params().at(i).mutable_data() = ps.get(name).data();
    }
    const Matrix a = final_node_features(g, ea).data();
    const Matrix b = final_node_features(g, eu).data();
    CHECK((a - 2.0 * b).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("similarity is invariant to node order") {
  std::mt19937_64 rng(12);
  Model model(ModelConfig{}, 3);
  const Pdg a = random_pdg(7, rng);
  const Pdg b = random_pdg(5, rng);
  std::vector<int> perm = {6, 2, 0, 5, 1, 3, 4};
  const double s1 = pair_score(make_graph_tensors(a), make_graph_tensors(b), model).scalar();
  const double s2 =
      pair_score(make_graph_tensors(permute_pdg(a, perm)), make_graph_tensors(b), model).scalar();
  CHECK(std::abs(s1 - s2) < 1e-9);
}

TEST_CASE("batched scoring equals pair-by-pair scoring") {
  std::mt19937_64 rng(13);
  Model model(small(), 7);
  std::vector<GraphTensors> gs;
  for (int i = 0; i < 6; ++i) gs.push_back(make_graph_tensors(random_pdg(2 + i, rng)));
  const Matrix batched = pair_scores({{&gs[0], &gs[1]}, {&gs[2], &gs[3]}, {&gs[4], &gs[5]}}, model).data();
  for (int k = 0; k < 3; ++k)
    CHECK(std::abs(batched(k, 0) - pair_score(gs[2 * k], gs[2 * k + 1], model).scalar()) < 1e-12);
}

TEST_CASE("siamese classifier and loss") {
  ModelConfig cfg = small();
  Model zero = Model::zeros(cfg);
  const Value g = ad::constant(Matrix::Zero(1, cfg.graph_dim));
  CHECK(siamese_similarity(g, g, zero).scalar() == 0.5);

  CHECK(bce_loss({ad::constant(Matrix::Constant(1, 1, 0.5))}, {1}).scalar() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(bce_loss({ad::constant(Matrix::Constant(1, 1, 1.0))}, {1}).scalar() ==
        doctest::Approx(1e-7).epsilon(1e-3));

  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix s(8, 1);
  std::vector<int> labels;
  double expected = 0.0;
  for (int i = 0; i < 8; ++i) {
    s(i, 0) = u(rng);
    labels.push_back(static_cast<int>(rng() % 2));
    const double p = std::clamp(s(i, 0), 1e-7, 1 - 1e-7);
    expected -= labels.back() ? std::log(p) : std::log(1 - p);
  }
  expected /= 8;
  CHECK(std::abs(bce_loss(ad::constant(s), labels).scalar() - expected) < 1e-12);
  CHECK_THROWS_AS(bce_loss(ad::constant(s), {1, 0}), LengthMismatch);
}

TEST_CASE("model file round-trips exactly") {
  ModelConfig cfg = small();
  cfg.pool = PoolMode::Gap;
  Model model(cfg, 21);
  const std::string text = serialize_model(model, 0.4);
  auto [back, eps] = deserialize_model(text);
  CHECK(eps == 0.4);
  CHECK(back.config() == cfg);
  CHECK(serialize_model(back, eps) == text);
  CHECK_THROWS_AS(deserialize_model("{}"), FormatError);
}

TEST_CASE("heads1 = 1 narrows the block-2 input") {
  ModelConfig cfg;
  cfg.heads_block1 = 1;
  Model model(cfg, 1);
  CHECK(model.params().get("data.attn2.W").rows() == cfg.head_dim_block1);
  std::mt19937_64 rng(15);
  const GraphTensors g = make_graph_tensors(random_pdg(4, rng));
  CHECK(pair_score(g, g, model).scalar() > 0.0);
}
