#include "pdgsim/model.hpp"

#include <json.hpp>
#include <random>

#include "pdgsim/errors.hpp"
#include "pdgsim/training.hpp"

namespace pdgsim {

using ad::Value;
using nlohmann::json;

std::string variant_name(Variant v) { return v == Variant::EdgeUnified ? "eu" : "ea"; }

Variant parse_variant(const std::string& s) {
  if (s == "eu" || s == "EU") return Variant::EdgeUnified;
  if (s == "ea" || s == "EA") return Variant::EdgeAttributed;
  throw ConfigError("variant must be eu or ea, got '" + s + "'");
}

std::string pool_name(PoolMode p) { return p == PoolMode::Soft ? "soft" : "gap"; }

PoolMode parse_pool(const std::string& s) {
  if (s == "soft") return PoolMode::Soft;
  if (s == "gap") return PoolMode::Gap;
  throw ConfigError("pool must be soft or gap, got '" + s + "'");
}

void ModelConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v < 1) throw ConfigError(std::string(name) + " must be >= 1");
  };
  positive(d_in, "d_in");
  positive(d_hidden, "d_hidden");
  positive(heads_block1, "heads_block1");
  positive(head_dim_block1, "head_dim_block1");
  positive(heads_block2, "heads_block2");
  positive(out_dim_block2, "out_dim_block2");
  positive(lstm_hidden, "lstm_hidden");
  positive(rounds, "rounds");
  positive(graph_dim, "graph_dim");
  positive(classifier_hidden, "classifier_hidden");
  if (d_in != kStatementKindCount)
    throw ConfigError("d_in must equal the statement-kind count (18)");
  // Round t's output is round t+1's block-1 input.
  if (lstm_hidden != d_hidden) throw ConfigError("lstm_hidden must equal d_hidden");
  if (leaky_slope < 0) throw ConfigError("leaky_slope must be >= 0");
}

std::vector<std::string> ModelConfig::branches() const {
  if (variant == Variant::EdgeUnified) return {"unified"};
  return {"data", "control"};
}

namespace {

enum class Init { Weight, Bias, Cell };

struct ParamSpec {
  std::string name;
  int rows;
  int cols;
  Init init;
};

std::vector<ParamSpec> layout(const ModelConfig& c) {
  std::vector<ParamSpec> specs;
  specs.push_back({"embed.W", c.d_in, c.d_hidden, Init::Weight});
  specs.push_back({"embed.b", 1, c.d_hidden, Init::Bias});
  for (const auto& br : c.branches()) {
    // Heads and gates are stored side by side: head k owns columns
    // [k*d, (k+1)*d) of W and column k of a; the LSTM gates are i, f, o, c.
    specs.push_back({br + ".attn1.W", c.d_hidden, c.heads_block1 * c.head_dim_block1, Init::Weight});
    specs.push_back({br + ".attn1.a", 2 * c.head_dim_block1, c.heads_block1, Init::Weight});
    specs.push_back({br + ".attn2.W", c.block2_in(), c.heads_block2 * c.out_dim_block2, Init::Weight});
    specs.push_back({br + ".attn2.a", 2 * c.out_dim_block2, c.heads_block2, Init::Weight});
    if (c.no_lstm) {
      specs.push_back({br + ".proj.W", c.out_dim_block2, c.d_hidden, Init::Weight});
    } else {
      specs.push_back({br + ".lstm.W", c.out_dim_block2, 4 * c.lstm_hidden, Init::Weight});
    }
  }
  if (c.pool == PoolMode::Soft) {
    specs.push_back({"pool.gate.W", c.node_width(), c.graph_dim, Init::Weight});
    specs.push_back({"pool.gate.b", 1, c.graph_dim, Init::Bias});
  }
  specs.push_back({"pool.value.W", c.node_width(), c.graph_dim, Init::Weight});
  specs.push_back({"pool.value.b", 1, c.graph_dim, Init::Bias});
  specs.push_back({"cls.fc1.W", 2 * c.graph_dim, c.classifier_hidden, Init::Weight});
  specs.push_back({"cls.fc1.b", 1, c.classifier_hidden, Init::Bias});
  specs.push_back({"cls.fc2.W", c.classifier_hidden, 1, Init::Weight});
  specs.push_back({"cls.fc2.b", 1, 1, Init::Bias});
  if (!c.no_lstm) specs.push_back({"lstm.c0", 1, c.lstm_hidden, Init::Cell});
  return specs;
}

constexpr double kCellInitStddev = 0.1;  // N(0, 0.01) read as variance 0.01

}  // namespace

Model::Model(ModelConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

Model Model::zeros(ModelConfig cfg) {
  Model m(std::move(cfg));
  for (const auto& s : layout(m.cfg_))
    m.params_.add(s.name, Matrix::Zero(s.rows, s.cols), s.init != Init::Cell);
  return m;
}

Model Model::clone() const {
  Model m = zeros(cfg_);
  for (std::size_t i = 0; i < params_.size(); ++i)
    m.params_.at(i).mutable_data() = params_.at(i).data();
  return m;
}

Model::Model(ModelConfig cfg, std::uint64_t seed) : Model(std::move(cfg)) {
  std::mt19937_64 rng(seed);
  for (const auto& s : layout(cfg_)) {
    Matrix init;
    switch (s.init) {
      case Init::Weight:
        init = kaiming_uniform_init(s.rows, s.cols, cfg_.leaky_slope, rng);
        break;
      case Init::Bias:
        init = Matrix::Zero(s.rows, s.cols);
        break;
      case Init::Cell: {
        std::normal_distribution<double> normal(0.0, kCellInitStddev);
        init = Matrix(s.rows, s.cols);
        for (Eigen::Index k = 0; k < init.size(); ++k) init(k) = normal(rng);
        break;
      }
    }
    params_.add(s.name, std::move(init), s.init != Init::Cell);
  }
}

// ---------------------------------------------------------------------------
// Forward pass

GraphBatch batch_graphs(const std::vector<const GraphTensors*>& graphs) {
  GraphBatch b;
  b.offsets.push_back(0);
  Eigen::Index total = 0;
  for (const auto* g : graphs) {
    if (g->size() == 0) throw EmptyGraph("batch_graphs: graph with no nodes");
    total += g->size();
    b.offsets.push_back(total);
  }
  const Eigen::Index width = graphs.empty() ? kStatementKindCount : graphs.front()->features.values.cols();
  b.features = Matrix(total, width);
  for (std::size_t k = 0; k < graphs.size(); ++k) {
    const auto* g = graphs[k];
    b.features.middleRows(b.offsets[k], g->size()) = g->features.values;
    // Attention rows are targets: mask(i, j) = A(j, i).
    b.control.push_back(g->control.values.transpose());
    b.data.push_back(g->data.values.transpose());
    b.unified.push_back(g->unified.values.transpose());
  }
  return b;
}

GraphBatch batch_graphs(const GraphTensors& g) { return batch_graphs(std::vector{&g}); }

const std::vector<Matrix>& GraphBatch::masks(const std::string& branch) const {
  if (branch == "control") return control;
  if (branch == "data") return data;
  if (branch == "unified") return unified;
  throw ConfigError("unknown branch '" + branch + "'");
}

Value linear_embed(const Matrix& features, const Model& model) {
  const auto& p = model.params();
  if (features.cols() != model.config().d_in)
    throw ShapeError("linear_embed: expected " + std::to_string(model.config().d_in) +
                     " feature columns, found " + std::to_string(features.cols()));
  return ad::add_row(ad::matmul(ad::constant(features), p.get("embed.W")), p.get("embed.b"));
}

Value linear_embed(const FeatureMatrix& x, const Model& model) {
  return linear_embed(x.values, model);
}

HeadOutput attention_head(const Adjacency& adj, const Value& h, const Value& weight,
                          const Value& attn, double slope) {
  if (adj.size() != h.rows())
    throw ShapeError("attention_head: adjacency is " + std::to_string(adj.size()) +
                     " nodes, features have " + std::to_string(h.rows()) + " rows");
  const Eigen::Index d = weight.cols();
  if (attn.rows() != 2 * d || attn.cols() != 1)
    throw ShapeError("attention_head: attention vector must be " + std::to_string(2 * d) + "x1");
  std::vector<Matrix> alphas;
  Value out = ad::segment_attention(ad::matmul(h, weight), attn, {0, h.rows()},
                                    {adj.values.transpose()}, slope, &alphas);
  return HeadOutput{out, alphas.front()};
}

namespace {

// Heads are packed column-wise: head k projects with columns [k*d, (k+1)*d)
// of W and scores with column k of a. `alphas` collects the per-head
// coefficients of a single-graph batch.
std::vector<Value> multi_head(const GraphBatch& batch, const std::vector<Matrix>& masks,
                              const Value& h, const Value& weight, const Value& attn, int heads,
                              int head_dim, double slope, std::vector<Matrix>* alphas) {
  if (batch.rows() != h.rows())
    throw ShapeError("attention: batch has " + std::to_string(batch.rows()) +
                     " nodes, features have " + std::to_string(h.rows()) + " rows");
  if (alphas && batch.graphs() != 1)
    throw ShapeError("attention: coefficients can only be traced for a single graph");
  Value z = ad::matmul(h, weight);
  std::vector<Value> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int k = 0; k < heads; ++k) {
    outs.push_back(ad::segment_attention(ad::col_slice(z, k * head_dim, head_dim),
                                         ad::col_slice(attn, k, 1), batch.offsets, masks, slope,
                                         alphas));
  }
  return outs;
}

}  // namespace

Value attention_block1(const GraphBatch& batch, const Value& h, const Model& model,
                       const std::string& branch, std::vector<Matrix>* alphas) {
  const auto& cfg = model.config();
  const auto& p = model.params();
  if (h.cols() != cfg.d_hidden)
    throw ShapeError("attention_block1: expected width " + std::to_string(cfg.d_hidden) +
                     ", found " + std::to_string(h.cols()));
  auto heads = multi_head(batch, batch.masks(branch), h, p.get(branch + ".attn1.W"),
                          p.get(branch + ".attn1.a"), cfg.heads_block1, cfg.head_dim_block1,
                          cfg.leaky_slope, alphas);
  // Elementwise, so one sigmoid over the concatenation equals per-head ones.
  return ad::sigmoid(ad::concat_cols(heads));
}

Value attention_block2(const GraphBatch& batch, const Value& h, const Model& model,
                       const std::string& branch, std::vector<Matrix>* alphas) {
  const auto& cfg = model.config();
  const auto& p = model.params();
  if (h.cols() != cfg.block2_in())
    throw ShapeError("attention_block2: expected width " + std::to_string(cfg.block2_in()) +
                     ", found " + std::to_string(h.cols()));
  auto heads = multi_head(batch, batch.masks(branch), h, p.get(branch + ".attn2.W"),
                          p.get(branch + ".attn2.a"), cfg.heads_block2, cfg.out_dim_block2,
                          cfg.leaky_slope, alphas);
  Value total = heads.front();
  for (std::size_t k = 1; k < heads.size(); ++k) total = ad::add(total, heads[k]);
  return ad::sigmoid(total);
}

LstmOutput lstm_step(const Value& input, const Value& cell, const Model& model,
                     const std::string& branch) {
  const Eigen::Index hid = model.config().lstm_hidden;
  if (cell.rows() != input.rows() || cell.cols() != hid)
    throw ShapeError("lstm_step: cell state shape does not match input");
  Value pre = ad::matmul(input, model.params().get(branch + ".lstm.W"));
  Value gates = ad::sigmoid(ad::col_slice(pre, 0, 3 * hid));
  Value i = ad::col_slice(gates, 0, hid);
  Value f = ad::col_slice(gates, hid, hid);
  Value o = ad::col_slice(gates, 2 * hid, hid);
  Value candidate = ad::tanh(ad::col_slice(pre, 3 * hid, hid));
  Value next = ad::add(ad::hadamard(f, cell), ad::hadamard(i, candidate));
  return LstmOutput{ad::hadamard(o, ad::tanh(next)), next};
}

Value initial_cell_state(const Model& model, Eigen::Index nodes) {
  return ad::matmul(ad::constant(Matrix::Ones(nodes, 1)), model.params().get("lstm.c0"));
}

Value compute_node_features(const Value& h0, const GraphBatch& batch, const Model& model,
                            const std::string& branch, AttentionTrace* trace) {
  const auto& cfg = model.config();
  if (h0.cols() != cfg.d_hidden) throw ShapeError("compute_node_features: H0 width mismatch");
  std::vector<std::vector<Matrix>>* b1 = nullptr;
  std::vector<std::vector<Matrix>>* b2 = nullptr;
  if (trace) {
    trace->branches.push_back(branch);
    b1 = &trace->block1.emplace_back();
    b2 = &trace->block2.emplace_back();
  }

  std::vector<Value> rounds = {h0};
  Value h = h0;
  Value cell;
  if (!cfg.no_lstm) cell = initial_cell_state(model, h0.rows());
  for (int t = 1; t <= cfg.rounds; ++t) {
    Value h1 = attention_block1(batch, h, model, branch, b1 ? &b1->emplace_back() : nullptr);
    Value h2 = attention_block2(batch, h1, model, branch, b2 ? &b2->emplace_back() : nullptr);
    if (cfg.no_lstm) {
      h = ad::matmul(h2, model.params().get(branch + ".proj.W"));
    } else {
      auto step = lstm_step(h2, cell, model, branch);
      h = step.h;
      cell = step.cell;
    }
    rounds.push_back(h);
  }
  if (cfg.no_jk) return h;
  return ad::concat_cols(rounds);
}

Value final_node_features(const GraphBatch& batch, const Model& model, AttentionTrace* trace) {
  Value h0 = linear_embed(batch.features, model);
  if (model.config().variant == Variant::EdgeUnified)
    return compute_node_features(h0, batch, model, "unified", trace);
  Value data = compute_node_features(h0, batch, model, "data", trace);
  Value control = compute_node_features(h0, batch, model, "control", trace);
  return ad::add(data, control);
}

Value final_node_features(const GraphTensors& g, const Model& model, AttentionTrace* trace) {
  return final_node_features(batch_graphs(g), model, trace);
}

Value graph_pooling(const Value& node_features, const std::vector<Eigen::Index>& offsets,
                    const Model& model) {
  const auto& cfg = model.config();
  const auto& p = model.params();
  if (node_features.rows() == 0) throw EmptyGraph("graph_pooling: no nodes");
  if (node_features.cols() != cfg.node_width())
    throw ShapeError("graph_pooling: expected width " + std::to_string(cfg.node_width()) +
                     ", found " + std::to_string(node_features.cols()));
  Value value = ad::add_row(ad::matmul(node_features, p.get("pool.value.W")), p.get("pool.value.b"));
  if (cfg.pool == PoolMode::Gap) return ad::segment_sum(value, offsets, /*mean=*/true);
  Value gate = ad::sigmoid(
      ad::add_row(ad::matmul(node_features, p.get("pool.gate.W")), p.get("pool.gate.b")));
  return ad::segment_sum(ad::hadamard(gate, value), offsets);
}

Value graph_pooling(const Value& node_features, const Model& model) {
  return graph_pooling(node_features, {0, node_features.rows()}, model);
}

Value compute_graph_features(const GraphBatch& batch, const Model& model, AttentionTrace* trace) {
  return graph_pooling(final_node_features(batch, model, trace), batch.offsets, model);
}

Value compute_graph_features(const GraphTensors& g, const Model& model, AttentionTrace* trace) {
  return compute_graph_features(batch_graphs(g), model, trace);
}

Value siamese_similarity(const Value& g1, const Value& g2, const Model& model) {
  const auto& cfg = model.config();
  const auto& p = model.params();
  for (const Value* g : {&g1, &g2})
    if (g->cols() != cfg.graph_dim)
      throw ShapeError("siamese_similarity: graph embeddings must have " +
                       std::to_string(cfg.graph_dim) + " columns");
  if (g1.rows() != g2.rows()) throw ShapeError("siamese_similarity: row counts differ");
  Value r = ad::concat_cols({g1, g2});
  r = ad::leaky_relu(ad::add_row(ad::matmul(r, p.get("cls.fc1.W")), p.get("cls.fc1.b")),
                     cfg.leaky_slope);
  return ad::sigmoid(ad::add_row(ad::matmul(r, p.get("cls.fc2.W")), p.get("cls.fc2.b")));
}

Value pair_scores(const std::vector<std::pair<const GraphTensors*, const GraphTensors*>>& pairs,
                  const Model& model) {
  if (pairs.empty()) throw LengthMismatch("pair_scores: no pairs");
  // Graph order in the batch: a_0, b_0, a_1, b_1, ...
  std::vector<const GraphTensors*> graphs;
  std::vector<Eigen::Index> rows_a, rows_b;
  for (const auto& [a, b] : pairs) {
    rows_a.push_back(static_cast<Eigen::Index>(graphs.size()));
    graphs.push_back(a);
    rows_b.push_back(static_cast<Eigen::Index>(graphs.size()));
    graphs.push_back(b);
  }
  Value g = compute_graph_features(batch_graphs(graphs), model);
  Value ga = ad::gather_rows(g, rows_a);
  Value gb = ad::gather_rows(g, rows_b);
  Value forward = siamese_similarity(ga, gb, model);
  if (!model.config().symmetrize) return forward;
  return ad::scale(ad::add(forward, siamese_similarity(gb, ga, model)), 0.5);
}

Value pair_score(const GraphTensors& a, const GraphTensors& b, const Model& model) {
  return pair_scores({{&a, &b}}, model);
}

Value bce_loss(const Value& scores, const std::vector<int>& labels) {
  if (scores.cols() != 1 || static_cast<std::size_t>(scores.rows()) != labels.size())
    throw LengthMismatch(std::to_string(scores.rows()) + " scores vs " +
                         std::to_string(labels.size()) + " labels");
  if (labels.empty()) throw LengthMismatch("empty batch");
  Matrix y(scores.rows(), 1);
  for (std::size_t i = 0; i < labels.size(); ++i) y(static_cast<Eigen::Index>(i)) = labels[i] == 1;
  Value p = ad::clamp(scores, kScoreClamp, 1.0 - kScoreClamp);
  Value pos = ad::hadamard(ad::constant(y), ad::log(p));
  Value neg = ad::hadamard(ad::constant(Matrix::Ones(y.rows(), 1) - y),
                           ad::log(ad::add_scalar(ad::scale(p, -1.0), 1.0)));
  return ad::scale(ad::sum(ad::add(pos, neg)), -1.0 / static_cast<double>(labels.size()));
}

Value bce_loss(const std::vector<Value>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw LengthMismatch(std::to_string(scores.size()) + " scores vs " +
                         std::to_string(labels.size()) + " labels");
  if (scores.empty()) throw LengthMismatch("empty batch");
  Value total;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    Value p = ad::clamp(scores[i], kScoreClamp, 1.0 - kScoreClamp);
    Value term = labels[i] == 1 ? ad::log(p) : ad::log(ad::add_scalar(ad::scale(p, -1.0), 1.0));
    total = total ? ad::add(total, term) : term;
  }
  return ad::scale(total, -1.0 / static_cast<double>(scores.size()));
}

// ---------------------------------------------------------------------------
// Model file

namespace {

json config_to_json(const ModelConfig& c) {
  return json{{"d_in", c.d_in},
              {"d_hidden", c.d_hidden},
              {"heads_block1", c.heads_block1},
              {"head_dim_block1", c.head_dim_block1},
              {"heads_block2", c.heads_block2},
              {"out_dim_block2", c.out_dim_block2},
              {"lstm_hidden", c.lstm_hidden},
              {"rounds", c.rounds},
              {"graph_dim", c.graph_dim},
              {"classifier_hidden", c.classifier_hidden},
              {"variant", variant_name(c.variant)},
              {"no_lstm", c.no_lstm},
              {"no_jk", c.no_jk},
              {"pool", pool_name(c.pool)},
              {"leaky_slope", c.leaky_slope},
              {"symmetrize", c.symmetrize}};
}

template <typename T>
T field(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw FormatError(std::string("$.config.") + key + ": missing");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw FormatError(std::string("$.config.") + key + ": wrong type");
  }
}

ModelConfig config_from_json(const json& j) {
  if (!j.is_object()) throw FormatError("$.config: expected an object");
  ModelConfig c;
  c.d_in = field<int>(j, "d_in");
  c.d_hidden = field<int>(j, "d_hidden");
  c.heads_block1 = field<int>(j, "heads_block1");
  c.head_dim_block1 = field<int>(j, "head_dim_block1");
  c.heads_block2 = field<int>(j, "heads_block2");
  c.out_dim_block2 = field<int>(j, "out_dim_block2");
  c.lstm_hidden = field<int>(j, "lstm_hidden");
  c.rounds = field<int>(j, "rounds");
  c.graph_dim = field<int>(j, "graph_dim");
  c.classifier_hidden = field<int>(j, "classifier_hidden");
  c.no_lstm = field<bool>(j, "no_lstm");
  c.no_jk = field<bool>(j, "no_jk");
  c.leaky_slope = field<double>(j, "leaky_slope");
  c.symmetrize = field<bool>(j, "symmetrize");
  try {
    c.variant = parse_variant(field<std::string>(j, "variant"));
    c.pool = parse_pool(field<std::string>(j, "pool"));
  } catch (const ConfigError& e) {
    throw FormatError(std::string("$.config: ") + e.what());
  }
  return c;
}

}  // namespace

std::string serialize_model(const Model& model, double threshold) {
  json params = json::object();
  const auto& store = model.params();
  for (std::size_t i = 0; i < store.size(); ++i) {
    const Matrix& m = store.at(i).data();
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
    params[store.name(i)] = json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
  }
  json doc{{"config", config_to_json(model.config())},
           {"threshold", threshold},
           {"params", std::move(params)}};
  return doc.dump();
}

std::pair<Model, double> deserialize_model(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("$: ") + e.what());
  }
  if (!doc.is_object()) throw FormatError("$: expected an object");
  for (const char* key : {"config", "threshold", "params"})
    if (!doc.contains(key)) throw FormatError(std::string("$.") + key + ": missing");
  if (!doc["threshold"].is_number()) throw FormatError("$.threshold: expected a number");

  ModelConfig cfg = config_from_json(doc["config"]);
  Model model = [&] {
    try {
      return Model::zeros(cfg);
    } catch (const ConfigError& e) {
      throw FormatError(std::string("$.config: ") + e.what());
    }
  }();
  const json& params = doc["params"];
  if (!params.is_object()) throw FormatError("$.params: expected an object");
  auto& store = model.params();
  if (params.size() != store.size())
    throw FormatError("$.params: expected " + std::to_string(store.size()) + " entries, found " +
                      std::to_string(params.size()));
  for (std::size_t i = 0; i < store.size(); ++i) {
    const std::string& name = store.name(i);
    const std::string path = "$.params." + name;
    auto it = params.find(name);
    if (it == params.end()) throw FormatError(path + ": missing");
    Matrix& m = store.at(i).mutable_data();
    if (!it->contains("rows") || !it->contains("cols") || !it->contains("data"))
      throw FormatError(path + ": expected rows, cols and data");
    if ((*it)["rows"] != m.rows() || (*it)["cols"] != m.cols())
      throw FormatError(path + ": shape does not match config");
    const json& data = (*it)["data"];
    if (!data.is_array() || static_cast<Eigen::Index>(data.size()) != m.size())
      throw FormatError(path + ".data: wrong length");
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        if (!data[k].is_number()) throw FormatError(path + ".data: expected numbers");
        m(r, c) = data[k++].get<double>();
      }
  }
  return {std::move(model), doc["threshold"].get<double>()};
}

}  // namespace pdgsim
