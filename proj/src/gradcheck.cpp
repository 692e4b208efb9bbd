#include "pdgsim/gradcheck.hpp"

#include <algorithm>
#include <functional>

namespace pdgsim {

using ad::Value;

namespace {

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double stddev = 1.0) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = dist(rng);
  return m;
}

// Scalar probe of a layer output: sum(out * R) for a fixed random R.
Value probe(const Value& out, std::mt19937_64& rng) {
  return ad::sum(ad::hadamard(out, ad::constant(gaussian(out.rows(), out.cols(), rng))));
}

void adopt_prefixed(ad::ParamStore& into, const ad::ParamStore& from, const std::string& prefix) {
  for (std::size_t i = 0; i < from.size(); ++i)
    if (from.name(i).rfind(prefix, 0) == 0 && from.at(i).requires_grad())
      into.adopt(from.name(i), from.at(i));
}

// Adds a term that is identically zero in value but contributes `c` to the
// reverse-mode gradient of the first parameter. Finite differences cannot
// see it, so the check must fail.
Value sabotage(const Value& loss, ad::ParamStore& params) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Value& p = params.at(i);
    if (!p.requires_grad()) continue;
    Value c = ad::constant(Matrix::Constant(p.rows(), p.cols(), 0.5));
    Value live = ad::sum(ad::hadamard(p, c));
    Value frozen = ad::sum(ad::hadamard(ad::detach(p), c));
    return ad::add(loss, ad::sub(live, frozen));
  }
  return loss;
}

class Checker {
public:
  Checker(bool sabotage, std::vector<GradcheckLine>& out) : sabotage_(sabotage), out_(out) {}

  void run(const std::string& name, ad::ParamStore& params, const std::function<Value()>& loss) {
    auto fn = [&]() { return sabotage_ ? sabotage(loss(), params) : loss(); };
    const auto r = ad::grad_check(fn, params, kGradcheckStep);
    out_.push_back(
        {name, r.max_relative_error, r.entries_checked, r.entries_skipped, r.worst_param});
  }

private:
  bool sabotage_;
  std::vector<GradcheckLine>& out_;
};

}  // namespace

ModelConfig gradcheck_config(Variant variant) {
  ModelConfig cfg;
  cfg.d_hidden = 5;
  cfg.lstm_hidden = 5;
  cfg.heads_block1 = 2;
  cfg.head_dim_block1 = 3;
  cfg.heads_block2 = 2;
  cfg.out_dim_block2 = 4;
  cfg.rounds = 2;
  cfg.graph_dim = 4;
  cfg.classifier_hidden = 3;
  cfg.variant = variant;
  return cfg;
}

Pdg random_pdg(int n, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> kind(0, kStatementKindCount - 1);
  std::bernoulli_distribution edge(0.3);
  Pdg pdg;
  for (int i = 0; i < n; ++i)
    pdg.nodes.push_back(PdgNode{i, static_cast<StatementKind>(kind(rng)), i + 1});
  for (int s = 0; s < n; ++s)
    for (int d = 0; d < n; ++d) {
      if (s == d) continue;
      if (edge(rng)) pdg.control_edges.insert({s, d});
      if (edge(rng)) pdg.data_edges.insert({s, d, "v"});
    }
  return pdg;
}

std::vector<GradcheckLine> run_gradchecks(std::uint64_t seed, bool sabotage) {
  std::vector<GradcheckLine> lines;
  Checker check(sabotage, lines);
  std::mt19937_64 rng(seed);

  const GraphTensors ga = make_graph_tensors(random_pdg(6, rng));
  const GraphTensors gb = make_graph_tensors(random_pdg(6, rng));
  const GraphTensors gc = make_graph_tensors(random_pdg(4, rng));
  const GraphBatch batch_a = batch_graphs(ga);
  const Eigen::Index n = ga.size();
  const int label = static_cast<int>(rng() % 2);

  const ModelConfig ea_cfg = gradcheck_config(Variant::EdgeAttributed);
  Model ea(ea_cfg, rng());
  const double slope = ea_cfg.leaky_slope;

  {
    ad::ParamStore ps;
    adopt_prefixed(ps, ea.params(), "embed.");
    std::mt19937_64 r(rng());
    const Matrix probe_r = gaussian(n, ea_cfg.d_hidden, r);
    check.run("embed", ps, [&] {
      return ad::sum(ad::hadamard(linear_embed(ga.features, ea), ad::constant(probe_r)));
    });
  }

  // Layers that take a node-feature input get that input as a parameter too.
  auto layer = [&](const std::string& name, const std::string& prefix, Eigen::Index in_width,
                   const std::function<Value(const Value&)>& f) {
    ad::ParamStore ps;
    ps.add("input", gaussian(n, in_width, rng));
    adopt_prefixed(ps, ea.params(), prefix);
    const Value input = ps.get("input");
    const std::uint64_t probe_seed = rng();
    check.run(name, ps, [&] {
      std::mt19937_64 r(probe_seed);
      return probe(f(input), r);
    });
  };

  {
    const int d = ea_cfg.head_dim_block1;
    ad::ParamStore ps;
    ps.add("input", gaussian(n, ea_cfg.d_hidden, rng));
    ps.add("W", ea.params().get("data.attn1.W").data().leftCols(d));
    ps.add("a", ea.params().get("data.attn1.a").data().leftCols(1));
    const std::uint64_t probe_seed = rng();
    check.run("attention_head", ps, [&] {
      std::mt19937_64 r(probe_seed);
      return probe(attention_head(ga.data, ps.get("input"), ps.get("W"), ps.get("a"), slope).out,
                   r);
    });
  }
  layer("attention_block1", "control.attn1.", ea_cfg.d_hidden,
        [&](const Value& h) { return attention_block1(batch_a, h, ea, "control"); });
  layer("attention_block2", "data.attn2.", ea_cfg.block2_in(),
        [&](const Value& h) { return attention_block2(batch_a, h, ea, "data"); });
  {
    ad::ParamStore ps;
    ps.add("input", gaussian(n, ea_cfg.out_dim_block2, rng));
    ps.add("cell", gaussian(n, ea_cfg.lstm_hidden, rng));
    adopt_prefixed(ps, ea.params(), "data.lstm.");
    const std::uint64_t probe_seed = rng();
    check.run("lstm_step", ps, [&] {
      std::mt19937_64 r(probe_seed);
      auto out = lstm_step(ps.get("input"), ps.get("cell"), ea, "data");
      return ad::add(probe(out.h, r), probe(out.cell, r));
    });
  }
  layer("pooling_soft", "pool.", ea_cfg.node_width(),
        [&](const Value& x) { return graph_pooling(x, ea); });
  {
    ModelConfig gap_cfg = ea_cfg;
    gap_cfg.pool = PoolMode::Gap;
    Model gap(gap_cfg, rng());
    ad::ParamStore ps;
    ps.add("input", gaussian(n, gap_cfg.node_width(), rng));
    adopt_prefixed(ps, gap.params(), "pool.");
    const std::uint64_t probe_seed = rng();
    check.run("pooling_gap", ps, [&] {
      std::mt19937_64 r(probe_seed);
      return probe(graph_pooling(ps.get("input"), gap), r);
    });
  }
  {
    ad::ParamStore ps;
    ps.add("g1", gaussian(1, ea_cfg.graph_dim, rng));
    ps.add("g2", gaussian(1, ea_cfg.graph_dim, rng));
    adopt_prefixed(ps, ea.params(), "cls.");
    check.run("siamese", ps,
              [&] { return siamese_similarity(ps.get("g1"), ps.get("g2"), ea); });
  }
  {
    ad::ParamStore ps;
    std::uniform_real_distribution<double> u(0.05, 0.95);
    ps.add("s1", Matrix::Constant(1, 1, u(rng)));
    ps.add("s2", Matrix::Constant(1, 1, u(rng)));
    check.run("bce", ps, [&] { return bce_loss({ps.get("s1"), ps.get("s2")}, {1, 0}); });
  }

  Model eu(gradcheck_config(Variant::EdgeUnified), rng());
  check.run("full_eu", eu.params(), [&] { return bce_loss({pair_score(ga, gb, eu)}, {label}); });
  check.run("full_ea", ea.params(), [&] { return bce_loss({pair_score(ga, gb, ea)}, {label}); });
  // Two pairs stacked into one batch exercise the segment boundaries.
  check.run("batched_ea", ea.params(), [&] {
    return bce_loss(pair_scores({{&ga, &gb}, {&gc, &ga}}, ea), {label, 1 - label});
  });
  return lines;
}

bool gradchecks_pass(const std::vector<GradcheckLine>& lines) {
  return std::all_of(lines.begin(), lines.end(), [](const GradcheckLine& l) {
    return l.max_relative_error < kGradcheckTolerance;
  });
}

}  // namespace pdgsim
