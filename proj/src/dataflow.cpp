#include "pdgsim/dataflow.hpp"

#include <algorithm>
#include <deque>
#include <map>

#include "pdgsim/errors.hpp"

namespace pdgsim {

bool PostDomTree::post_dominates(int p, int n) const {
  for (int cur = n;; cur = ipdom[static_cast<std::size_t>(cur)]) {
    if (cur == p) return true;
    if (cur == exit) return false;
  }
}

// Iterative dominator computation (Cooper, Harvey, Kennedy) on the reverse
// CFG rooted at the virtual exit.
PostDomTree compute_postdominators(const IrMethod& ir) {
  const int n = ir.size();
  const int exit = ir.exit;
  std::vector<std::vector<int>> rpred(static_cast<std::size_t>(n) + 1);  // reverse-graph preds
  std::vector<std::vector<int>> rsucc(static_cast<std::size_t>(n) + 1);  // reverse-graph succs
  for (int u = 0; u < n; ++u) {
    for (int v : ir.succ[static_cast<std::size_t>(u)]) {
      rpred[static_cast<std::size_t>(u)].push_back(v);
      rsucc[static_cast<std::size_t>(v)].push_back(u);
    }
  }

  // Post-order of the reverse graph from exit.
  std::vector<int> order;
  std::vector<int> po_index(static_cast<std::size_t>(n) + 1, -1);
  {
    std::vector<char> visited(static_cast<std::size_t>(n) + 1, 0);
    std::vector<std::pair<int, std::size_t>> stack = {{exit, 0}};
    visited[static_cast<std::size_t>(exit)] = 1;
    while (!stack.empty()) {
      auto& [u, next] = stack.back();
      const auto& out = rsucc[static_cast<std::size_t>(u)];
      if (next < out.size()) {
        int v = out[next++];
        if (!visited[static_cast<std::size_t>(v)]) {
          visited[static_cast<std::size_t>(v)] = 1;
          stack.emplace_back(v, 0);
        }
      } else {
        po_index[static_cast<std::size_t>(u)] = static_cast<int>(order.size());
        order.push_back(u);
        stack.pop_back();
      }
    }
  }
  for (int u = 0; u < n; ++u)
    if (po_index[static_cast<std::size_t>(u)] < 0)
      throw UnreachableExit("exit is unreachable from statement " + std::to_string(u));

  std::vector<int> idom(static_cast<std::size_t>(n) + 1, -1);
  idom[static_cast<std::size_t>(exit)] = exit;

  auto intersect = [&](int a, int b) {
    while (a != b) {
      while (po_index[static_cast<std::size_t>(a)] < po_index[static_cast<std::size_t>(b)])
        a = idom[static_cast<std::size_t>(a)];
      while (po_index[static_cast<std::size_t>(b)] < po_index[static_cast<std::size_t>(a)])
        b = idom[static_cast<std::size_t>(b)];
    }
    return a;
  };

  bool changed = true;
  while (changed) {
    changed = false;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const int u = *it;
      if (u == exit) continue;
      int new_idom = -1;
      for (int p : rpred[static_cast<std::size_t>(u)]) {
        if (idom[static_cast<std::size_t>(p)] < 0) continue;
        new_idom = new_idom < 0 ? p : intersect(p, new_idom);
      }
      if (idom[static_cast<std::size_t>(u)] != new_idom) {
        idom[static_cast<std::size_t>(u)] = new_idom;
        changed = true;
      }
    }
  }
  return PostDomTree{std::move(idom), exit};
}

std::set<ControlEdge> control_dependences(const IrMethod& ir, const PostDomTree& pdom) {
  std::set<ControlEdge> edges;
  for (int a = 0; a < ir.size(); ++a) {
    const int stop = pdom.ipdom[static_cast<std::size_t>(a)];
    for (int s : ir.succ[static_cast<std::size_t>(a)]) {
      for (int runner = s; runner != stop; runner = pdom.ipdom[static_cast<std::size_t>(runner)]) {
        // Loop headers come back to themselves; self-edges are not kept.
        if (runner != a) edges.emplace(a, runner);
      }
    }
  }
  return edges;
}

ReachInfo reaching_definitions(const IrMethod& ir) {
  std::vector<int> order(static_cast<std::size_t>(ir.size()));
  for (int i = 0; i < ir.size(); ++i) order[static_cast<std::size_t>(i)] = i;
  return reaching_definitions(ir, order);
}

ReachInfo reaching_definitions(const IrMethod& ir, const std::vector<int>& order) {
  const auto n = static_cast<std::size_t>(ir.size());
  if (order.size() != n) throw ShapeError("worklist order must cover every statement");

  std::map<std::string, std::set<int>> defs_of;
  for (const auto& st : ir.statements)
    for (const auto& v : st.defs) defs_of[v].insert(st.id);

  std::vector<std::vector<int>> pred(n);
  for (std::size_t u = 0; u < n; ++u)
    for (int v : ir.succ[u])
      if (v != ir.exit) pred[static_cast<std::size_t>(v)].push_back(static_cast<int>(u));

  ReachInfo info{std::vector<std::set<Definition>>(n), std::vector<std::set<Definition>>(n)};
  auto transfer = [&](std::size_t s) {
    const auto& st = ir.statements[s];
    std::set<Definition> out;
    for (const auto& d : info.in_defs[s])
      if (!st.defs.count(d.first)) out.insert(d);
    for (const auto& v : st.defs) out.emplace(v, st.id);
    return out;
  };

  std::deque<int> worklist(order.begin(), order.end());
  std::vector<char> queued(n, 1);
  while (!worklist.empty()) {
    const auto s = static_cast<std::size_t>(worklist.front());
    worklist.pop_front();
    queued[s] = 0;
    std::set<Definition> in;
    for (int p : pred[s]) {
      const auto& po = info.out_defs[static_cast<std::size_t>(p)];
      in.insert(po.begin(), po.end());
    }
    info.in_defs[s] = std::move(in);
    auto out = transfer(s);
    if (out != info.out_defs[s]) {
      info.out_defs[s] = std::move(out);
      for (int v : ir.succ[s]) {
        if (v == ir.exit || queued[static_cast<std::size_t>(v)]) continue;
        queued[static_cast<std::size_t>(v)] = 1;
        worklist.push_back(v);
      }
    }
  }
  return info;
}

// A use of v at s2 reached by (v, s1) is exactly an upward-exposed use, so
// no separate upward-exposed-uses pass is needed.
std::set<DataEdge> data_dependences(const IrMethod& ir, const ReachInfo& reach) {
  std::set<DataEdge> edges;
  for (const auto& st : ir.statements) {
    for (const auto& [var, def] : reach.in_defs[static_cast<std::size_t>(st.id)]) {
      if (st.uses.count(var) && def != st.id) edges.emplace(def, st.id, var);
    }
  }
  return edges;
}

Pdg build_pdg(const IrMethod& ir) {
  Pdg pdg;
  pdg.nodes.reserve(ir.statements.size());
  for (const auto& st : ir.statements) pdg.nodes.push_back(PdgNode{st.id, st.kind, st.line});
  const auto pdom = compute_postdominators(ir);
  pdg.control_edges = control_dependences(ir, pdom);
  pdg.data_edges = data_dependences(ir, reaching_definitions(ir));
  return pdg;
}

void validate_pdg(const Pdg& pdg) {
  for (int i = 0; i < pdg.size(); ++i)
    if (pdg.nodes[static_cast<std::size_t>(i)].id != i)
      throw FormatError("nodes: ids must be dense and ascending");
  auto check = [&](int s, int d, const char* what) {
    if (s < 0 || d < 0 || s >= pdg.size() || d >= pdg.size())
      throw FormatError(std::string(what) + ": endpoint out of range");
    if (s == d) throw FormatError(std::string(what) + ": self-edge");
  };
  for (const auto& [s, d] : pdg.control_edges) check(s, d, "edges[control]");
  for (const auto& [s, d, v] : pdg.data_edges) check(s, d, "edges[data]");
}

}  // namespace pdgsim
