#include "oracles.hpp"

#include <algorithm>
#include <functional>
#include <stdexcept>

#include "pdgsim/errors.hpp"

using namespace pdgsim;

namespace oracle {

IrMethod random_ir(int n, std::mt19937_64& rng) {
  const std::vector<std::string> vars = {"a", "b", "c", "d"};
  std::uniform_int_distribution<int> pick(0, 99);
  std::uniform_int_distribution<int> target(0, n);
  std::uniform_int_distribution<int> var(0, static_cast<int>(vars.size()) - 1);
  for (;;) {
    IrMethod ir;
    ir.name = "rand";
    ir.entry = 0;
    ir.exit = n;
    for (int i = 0; i < n; ++i) {
      IrStatement st;
      st.id = i;
      st.line = i + 1;
      std::vector<int> out;
      const int r = pick(rng);
      if (r < 30) {
        st.kind = StatementKind::If;
        int t = target(rng);
        while (t == i + 1) t = target(rng);
        out = {i + 1, t};
      } else if (r < 38) {
        st.kind = StatementKind::Goto;
        out = {target(rng)};
      } else if (r < 43) {
        st.kind = StatementKind::TableSwitch;
        std::set<int> ts = {i + 1, target(rng), target(rng)};
        out.assign(ts.begin(), ts.end());
      } else if (r < 50) {
        st.kind = StatementKind::Return;
        out = {n};
      } else {
        st.kind = r < 85 ? StatementKind::Assignment : StatementKind::Invoke;
        out = {i + 1};
      }
      if (st.kind == StatementKind::Assignment || (st.kind == StatementKind::Invoke && pick(rng) < 40))
        st.defs.insert(vars[static_cast<std::size_t>(var(rng))]);
      const int uses = pick(rng) % 3;
      for (int u = 0; u < uses; ++u) st.uses.insert(vars[static_cast<std::size_t>(var(rng))]);
      ir.statements.push_back(st);
      ir.succ.push_back(out);
    }
    try {
      validate_ir(ir);
      return ir;
    } catch (const LowerError&) {
    }
  }
}

namespace {

std::string random_expr(std::mt19937_64& rng, const std::vector<std::string>& vars) {
  std::uniform_int_distribution<int> pick(0, 99);
  auto var = [&] { return vars[rng() % vars.size()]; };
  const int r = pick(rng);
  if (r < 20) return std::to_string(pick(rng) % 10);
  if (r < 45) return var();
  static const char* ops[] = {"+", "-", "*", "<", "==", "!="};
  const std::string rhs = pick(rng) < 50 ? var() : std::to_string(pick(rng) % 10);
  return var() + " " + ops[rng() % 6] + " " + rhs;
}

void random_block(std::mt19937_64& rng, const std::vector<std::string>& vars, int depth,
                  int& budget, const std::string& indent, std::string& out) {
  std::uniform_int_distribution<int> pick(0, 99);
  const int count = 1 + pick(rng) % 4;
  for (int i = 0; i < count && budget > 0; ++i) {
    --budget;
    const int r = pick(rng);
    const std::string target = vars[rng() % vars.size()];
    if (r < 55 || depth >= 2) {
      out += indent + target + " = " + random_expr(rng, vars) + ";\n";
    } else if (r < 70) {
      out += indent + "if (" + random_expr(rng, vars) + ") {\n";
      random_block(rng, vars, depth + 1, budget, indent + "  ", out);
      if (pick(rng) < 50) {
        out += indent + "} else {\n";
        random_block(rng, vars, depth + 1, budget, indent + "  ", out);
      }
      out += indent + "}\n";
    } else if (r < 80) {
      out += indent + "while (" + target + " < " + std::to_string(pick(rng) % 9 + 1) + ") {\n";
      random_block(rng, vars, depth + 1, budget, indent + "  ", out);
      out += indent + "  " + target + " = " + target + " + 1;\n";
      out += indent + "}\n";
    } else if (r < 92) {
      out += indent + "call log(" + vars[rng() % vars.size()] + ");\n";
    } else {
      out += indent + "skip;\n";
    }
  }
}

}  // namespace

std::string random_program(std::mt19937_64& rng, int max_nodes) {
  const std::vector<std::string> vars = {"a", "b", "c", "d", "p", "q"};
  for (;;) {
    std::string src = "def f(p, q) {\n  a = 0;\n  b = 1;\n";
    int budget = 6;
    random_block(rng, vars, 0, budget, "  ", src);
    src += "  return " + vars[rng() % vars.size()] + ";\n}\n";
    try {
      if (lower_source(src).size() <= max_nodes) return src;
    } catch (const Error&) {
    }
  }
}

bool post_dominates(const IrMethod& ir, int p, int x) {
  if (p == x) return true;
  const int n = ir.size();
  std::vector<char> seen(static_cast<std::size_t>(n) + 1, 0);
  std::vector<int> stack = {x};
  seen[static_cast<std::size_t>(x)] = 1;
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    if (u == n) return false;
    for (int v : ir.succ[static_cast<std::size_t>(u)])
      if (v != p && !seen[static_cast<std::size_t>(v)]) {
        seen[static_cast<std::size_t>(v)] = 1;
        stack.push_back(v);
      }
  }
  return true;
}

std::set<ControlEdge> control_dependences(const IrMethod& ir) {
  const int n = ir.size();
  std::set<ControlEdge> out;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      if (a == b || post_dominates(ir, b, a)) continue;
      // Enumerate simple paths from a's successors, staying inside the set of
      // nodes post-dominated by b, until one reaches b.
      std::vector<char> on_path(static_cast<std::size_t>(n), 0);
      std::function<bool(int)> walk = [&](int u) {
        if (u == n || !post_dominates(ir, b, u)) return false;
        if (u == b) return true;
        on_path[static_cast<std::size_t>(u)] = 1;
        bool found = false;
        for (int v : ir.succ[static_cast<std::size_t>(u)])
          if ((v == n || !on_path[static_cast<std::size_t>(v)]) && walk(v)) {
            found = true;
            break;
          }
        on_path[static_cast<std::size_t>(u)] = 0;
        return found;
      };
      for (int s : ir.succ[static_cast<std::size_t>(a)])
        if (walk(s)) {
          out.insert({a, b});
          break;
        }
    }
  return out;
}

std::set<DataEdge> data_dependences(const IrMethod& ir) {
  const int n = ir.size();
  const int max_len = 2 * n;
  std::set<DataEdge> out;
  for (int s = 0; s < n; ++s)
    for (const auto& v : ir.statements[static_cast<std::size_t>(s)].defs) {
      std::vector<char> on_path(static_cast<std::size_t>(n), 0);
      on_path[static_cast<std::size_t>(s)] = 1;
      std::function<void(int, int)> walk = [&](int u, int len) {
        if (u == n || len > max_len) return;
        const auto& st = ir.statements[static_cast<std::size_t>(u)];
        if (st.uses.count(v) && u != s) out.insert({s, u, v});
        if (st.defs.count(v)) return;
        on_path[static_cast<std::size_t>(u)] = 1;
        for (int w : ir.succ[static_cast<std::size_t>(u)])
          if (w == n || !on_path[static_cast<std::size_t>(w)]) walk(w, len + 1);
        on_path[static_cast<std::size_t>(u)] = 0;
      };
      for (int w : ir.succ[static_cast<std::size_t>(s)]) walk(w, 1);
    }
  return out;
}

bool isomorphic(const Pdg& a, const Pdg& b) {
  const int n = a.size();
  if (n != b.size() || a.control_edges.size() != b.control_edges.size() ||
      a.data_edges.size() != b.data_edges.size())
    return false;
  using Labels = std::map<std::pair<int, int>, std::set<std::string>>;
  auto labels = [](const Pdg& p) {
    Labels l;
    for (const auto& [s, d] : p.control_edges) l[{s, d}].insert("@control");
    for (const auto& [s, d, v] : p.data_edges) l[{s, d}].insert(v);
    return l;
  };
  const Labels la = labels(a), lb = labels(b);
  auto edge = [](const Labels& l, int s, int d) {
    auto it = l.find({s, d});
    return it == l.end() ? std::set<std::string>{} : it->second;
  };

  std::vector<int> map(static_cast<std::size_t>(n), -1);
  std::vector<char> used(static_cast<std::size_t>(n), 0);
  std::function<bool(int)> assign = [&](int i) {
    if (i == n) return true;
    for (int j = 0; j < n; ++j) {
      if (used[static_cast<std::size_t>(j)] ||
          a.nodes[static_cast<std::size_t>(i)].kind != b.nodes[static_cast<std::size_t>(j)].kind)
        continue;
      bool ok = true;
      for (int k = 0; k <= i && ok; ++k) {
        const int mk = k == i ? j : map[static_cast<std::size_t>(k)];
        ok = edge(la, i, k) == edge(lb, j, mk) && edge(la, k, i) == edge(lb, mk, j);
      }
      if (!ok) continue;
      map[static_cast<std::size_t>(i)] = j;
      used[static_cast<std::size_t>(j)] = 1;
      if (assign(i + 1)) return true;
      used[static_cast<std::size_t>(j)] = 0;
    }
    return false;
  };
  return assign(0);
}

Pdg rename_edge_vars(const Pdg& pdg, const std::map<std::string, std::string>& mapping) {
  Pdg out = pdg;
  out.data_edges.clear();
  for (const auto& [s, d, v] : pdg.data_edges) {
    auto it = mapping.find(v);
    out.data_edges.insert({s, d, it == mapping.end() ? v : it->second});
  }
  return out;
}

double mann_whitney_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  double concordant = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) concordant += 1.0;
      else if (scores[i] == scores[j]) concordant += 0.5;
    }
  }
  if (pairs == 0.0) throw std::invalid_argument("need both classes");
  return concordant / pairs;
}

}  // namespace oracle
