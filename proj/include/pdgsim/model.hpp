#pragma once

// Siamese graph network over PDGs: linear kind embedding, two multi-head
// graph-attention blocks, a gated (LSTM-style) propagation update repeated
// for T rounds, jumping-knowledge concatenation, gated-sum graph pooling, and
// a two-layer pair classifier.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pdgsim/autodiff.hpp"
#include "pdgsim/graphcore.hpp"

namespace pdgsim {

enum class Variant { EdgeUnified, EdgeAttributed };
enum class PoolMode { Soft, Gap };

std::string variant_name(Variant v);
Variant parse_variant(const std::string& s);
std::string pool_name(PoolMode p);
PoolMode parse_pool(const std::string& s);

struct ModelConfig {
  int d_in = kStatementKindCount;
  int d_hidden = 100;
  int heads_block1 = 8;
  int head_dim_block1 = 16;
  int heads_block2 = 6;
  int out_dim_block2 = 100;
  int lstm_hidden = 100;
  int rounds = 4;
  int graph_dim = 128;
  int classifier_hidden = 64;
  Variant variant = Variant::EdgeAttributed;
  bool no_lstm = false;
  bool no_jk = false;
  PoolMode pool = PoolMode::Soft;
  double leaky_slope = 0.02;
  // Average score(a, b) and score(b, a).
  bool symmetrize = false;

  // Throws ConfigError on a violated shape invariant.
  void validate() const;

  int block2_in() const { return heads_block1 * head_dim_block1; }
  int node_width() const { return no_jk ? d_hidden : d_hidden * (rounds + 1); }
  std::vector<std::string> branches() const;

  bool operator==(const ModelConfig&) const = default;
};

// Parameters plus the configuration that shaped them. Both Siamese inputs run
// through the same Model, so they share every parameter object.
class Model {
public:
  // Kaiming-uniform weights, zero biases, and a seeded initial cell state.
  Model(ModelConfig cfg, std::uint64_t seed);
  // All parameters zero; used before loading stored values.
  static Model zeros(ModelConfig cfg);

  // Parameters are shared handles; copying would alias them. Use clone().
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;
  Model clone() const;

  const ModelConfig& config() const { return cfg_; }
  ad::ParamStore& params() { return params_; }
  const ad::ParamStore& params() const { return params_; }

private:
  explicit Model(ModelConfig cfg);
  ModelConfig cfg_;
  ad::ParamStore params_;
};

// Attention coefficients captured during a forward pass:
// [branch][round][head] -> |V| x |V| matrix, row i = target, column j = source.
struct AttentionTrace {
  std::vector<std::string> branches;
  std::vector<std::vector<std::vector<Matrix>>> block1;
  std::vector<std::vector<std::vector<Matrix>>> block2;
};

// Several graphs stacked row-wise into one node matrix. Graph g owns rows
// [offsets[g], offsets[g+1]); its attention masks are the transposed
// adjacencies (row = target node).
struct GraphBatch {
  Matrix features;
  std::vector<Eigen::Index> offsets;
  std::vector<Matrix> control;
  std::vector<Matrix> data;
  std::vector<Matrix> unified;

  Eigen::Index rows() const { return offsets.empty() ? 0 : offsets.back(); }
  std::size_t graphs() const { return offsets.empty() ? 0 : offsets.size() - 1; }
  const std::vector<Matrix>& masks(const std::string& branch) const;
};

GraphBatch batch_graphs(const std::vector<const GraphTensors*>& graphs);
GraphBatch batch_graphs(const GraphTensors& g);

ad::Value linear_embed(const Matrix& features, const Model& model);
ad::Value linear_embed(const FeatureMatrix& x, const Model& model);

struct HeadOutput {
  ad::Value out;  // |V| x head_dim
  Matrix alpha;   // |V| x |V|, row i = target
};

// One attention head on a single graph. Node i aggregates over
// N(i) = {j : A(j, i) = 1}, so the adjacency must carry self-loops.
HeadOutput attention_head(const Adjacency& adj, const ad::Value& h, const ad::Value& weight,
                          const ad::Value& attn, double slope);

// Per-head sigmoid, then concatenation: N x (heads_block1 * head_dim_block1).
// `alphas` (single-graph batches only) receives one matrix per head.
ad::Value attention_block1(const GraphBatch& batch, const ad::Value& h, const Model& model,
                           const std::string& branch, std::vector<Matrix>* alphas = nullptr);

// Heads summed, then one sigmoid: N x out_dim_block2.
ad::Value attention_block2(const GraphBatch& batch, const ad::Value& h, const Model& model,
                           const std::string& branch, std::vector<Matrix>* alphas = nullptr);

struct LstmOutput {
  ad::Value h;
  ad::Value cell;
};

// Gates read only the current input (no recurrent weight on the previous h).
LstmOutput lstm_step(const ad::Value& input, const ad::Value& cell, const Model& model,
                     const std::string& branch);

// Initial cell state: the stored seeded row broadcast to every node.
ad::Value initial_cell_state(const Model& model, Eigen::Index nodes);

// T propagation rounds; returns [H0 | H1 | ... | HT] (or HT alone with no_jk).
ad::Value compute_node_features(const ad::Value& h0, const GraphBatch& batch, const Model& model,
                                const std::string& branch, AttentionTrace* trace = nullptr);

// Node features after the variant-specific combination (EA: data + control).
ad::Value final_node_features(const GraphBatch& batch, const Model& model,
                              AttentionTrace* trace = nullptr);
ad::Value final_node_features(const GraphTensors& g, const Model& model,
                              AttentionTrace* trace = nullptr);

// One row per graph: soft-attention (gate * value summed) or mean pooling.
ad::Value graph_pooling(const ad::Value& node_features, const std::vector<Eigen::Index>& offsets,
                        const Model& model);
ad::Value graph_pooling(const ad::Value& node_features, const Model& model);

ad::Value compute_graph_features(const GraphBatch& batch, const Model& model,
                                 AttentionTrace* trace = nullptr);
ad::Value compute_graph_features(const GraphTensors& g, const Model& model,
                                 AttentionTrace* trace = nullptr);

// Classifier over [g1 | g2] row by row; returns P x 1 scores in (0, 1).
ad::Value siamese_similarity(const ad::Value& g1, const ad::Value& g2, const Model& model);

// Scores every pair in one stacked forward pass, honoring cfg.symmetrize.
ad::Value pair_scores(
    const std::vector<std::pair<const GraphTensors*, const GraphTensors*>>& pairs,
    const Model& model);
ad::Value pair_score(const GraphTensors& a, const GraphTensors& b, const Model& model);

inline constexpr double kScoreClamp = 1e-7;

// Mean binary cross-entropy; scores are clamped to [1e-7, 1 - 1e-7].
ad::Value bce_loss(const std::vector<ad::Value>& scores, const std::vector<int>& labels);
ad::Value bce_loss(const ad::Value& scores, const std::vector<int>& labels);

// Model file: {"config": {...}, "params": {name: {rows, cols, data}}, "threshold": eps}.
std::string serialize_model(const Model& model, double threshold);
std::pair<Model, double> deserialize_model(const std::string& text);

}  // namespace pdgsim
