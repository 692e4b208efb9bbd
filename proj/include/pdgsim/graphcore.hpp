#pragma once

// Numeric view of a PDG (one-hot kind features, adjacency matrices) and the
// canonical PDG JSON / DOT formats.

#include <string>
#include <string_view>
#include <vector>

#include "pdgsim/dataflow.hpp"
#include "pdgsim/matrix.hpp"

namespace pdgsim {

// |V| x 18, row v one-hot at kind(v).
struct FeatureMatrix {
  Matrix values;
};

enum class EdgeClass { Control, Data, Both };

// Row = source, column = destination.
struct Adjacency {
  Matrix values;
  bool self_loops = false;

  int size() const { return static_cast<int>(values.rows()); }
};

FeatureMatrix encode_node_features(const Pdg& pdg);
Adjacency adjacency_matrix(const Pdg& pdg, EdgeClass cls, bool self_loops);

// Everything the model reads from one PDG. Adjacencies carry self-loops.
struct GraphTensors {
  FeatureMatrix features;
  Adjacency control;
  Adjacency data;
  Adjacency unified;

  int size() const { return control.size(); }
};

GraphTensors make_graph_tensors(const Pdg& pdg);

// Relabels nodes: node i of `pdg` becomes node perm[i] of the result.
Pdg permute_pdg(const Pdg& pdg, const std::vector<int>& perm);

std::string serialize_pdg(const Pdg& pdg);
Pdg deserialize_pdg(std::string_view text);

std::string pdg_to_dot(const Pdg& pdg, const std::string& name = "pdg");

}  // namespace pdgsim
