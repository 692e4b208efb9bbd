#pragma once

// Post-dominators, control dependence, reaching definitions, data dependence,
// and PDG assembly over an IrMethod.

#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "pdgsim/frontend.hpp"

namespace pdgsim {

// ipdom[n] for every statement n in 0..size-1; ipdom[exit] == exit.
struct PostDomTree {
  std::vector<int> ipdom;
  int exit = 0;

  // True if `p` post-dominates `n` (reflexive).
  bool post_dominates(int p, int n) const;
};

PostDomTree compute_postdominators(const IrMethod& ir);

using ControlEdge = std::pair<int, int>;
using DataEdge = std::tuple<int, int, std::string>;

std::set<ControlEdge> control_dependences(const IrMethod& ir, const PostDomTree& pdom);

using Definition = std::pair<std::string, int>;  // (variable, defining statement)

struct ReachInfo {
  std::vector<std::set<Definition>> in_defs;
  std::vector<std::set<Definition>> out_defs;
};

ReachInfo reaching_definitions(const IrMethod& ir);

// Same fixpoint, but the worklist is seeded (and re-filled) following
// `order`, which must be a permutation of 0..size-1.
ReachInfo reaching_definitions(const IrMethod& ir, const std::vector<int>& order);

std::set<DataEdge> data_dependences(const IrMethod& ir, const ReachInfo& reach);

struct PdgNode {
  int id = 0;
  StatementKind kind = StatementKind::Nop;
  int line = 0;

  bool operator==(const PdgNode&) const = default;
};

struct Pdg {
  std::vector<PdgNode> nodes;
  std::set<ControlEdge> control_edges;
  std::set<DataEdge> data_edges;

  int size() const { return static_cast<int>(nodes.size()); }
  bool operator==(const Pdg&) const = default;
};

Pdg build_pdg(const IrMethod& ir);

// Throws FormatError if an edge endpoint is out of range or an edge is a
// self-edge.
void validate_pdg(const Pdg& pdg);

}  // namespace pdgsim
