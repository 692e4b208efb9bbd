#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "pdgsim/dataflow.hpp"
#include "pdgsim/errors.hpp"

using namespace pdgsim;

namespace {

IrMethod graph(const std::vector<StatementKind>& kinds, const std::vector<std::vector<int>>& succ) {
  IrMethod ir;
  ir.name = "g";
  for (std::size_t i = 0; i < kinds.size(); ++i)
    ir.statements.push_back(IrStatement{static_cast<int>(i), kinds[i], {}, {}, 0});
  ir.succ = succ;
  ir.exit = static_cast<int>(kinds.size());
  return ir;
}

constexpr auto A = StatementKind::Assignment;
constexpr auto I = StatementKind::If;
constexpr auto G = StatementKind::Goto;

}  // namespace

TEST_CASE("post-dominators of a chain") {
  const IrMethod ir = graph({A, A}, {{1}, {2}});
  const auto pd = compute_postdominators(ir);
  CHECK(pd.ipdom[0] == 1);
  CHECK(pd.ipdom[1] == 2);
  CHECK(pd.ipdom[2] == 2);
}

TEST_CASE("post-dominators of a diamond match the brute-force definition") {
  // s0 -> {s1, s2} -> s3 -> exit
  const IrMethod ir = graph({I, A, A, A}, {{1, 2}, {3}, {3}, {4}});
  const auto pd = compute_postdominators(ir);
  CHECK(pd.ipdom[0] == 3);
  CHECK(pd.ipdom[1] == 3);
  CHECK(pd.ipdom[2] == 3);
  for (int p = 0; p < 4; ++p)
    for (int x = 0; x < 4; ++x) CHECK(pd.post_dominates(p, x) == oracle::post_dominates(ir, p, x));
  CHECK(control_dependences(ir, pd) == std::set<ControlEdge>{{0, 1}, {0, 2}});
}

TEST_CASE("post-dominators of a while loop") {
  // 0: If -> {1 body, exit}; 1: body -> 2: Goto -> 0
  const IrMethod ir = graph({I, A, G}, {{1, 3}, {2}, {0}});
  const auto pd = compute_postdominators(ir);
  CHECK(pd.ipdom[1] == 2);
  CHECK(pd.ipdom[2] == 0);
  CHECK(pd.ipdom[0] == 3);
  CHECK(control_dependences(ir, pd) == oracle::control_dependences(ir));
}

TEST_CASE("straight-line code has no control dependences") {
  const IrMethod ir = lower_source("def m(a){ x = a; y = x; return y; }");
  CHECK(control_dependences(ir, compute_postdominators(ir)).empty());
}

TEST_CASE("reaching definitions and data dependences on small programs") {
  SUBCASE("single def") {
    const IrMethod ir = lower_source("def m(){ x = 1; y = x; }");
    const auto reach = reaching_definitions(ir);
    CHECK(reach.in_defs[1].count({"x", 0}) == 1);
    CHECK(data_dependences(ir, reach) == std::set<DataEdge>{{0, 1, "x"}});
  }
  SUBCASE("redefinition kills") {
    const IrMethod ir = lower_source("def m(){ x = 1; x = 2; y = x; }");
    const auto reach = reaching_definitions(ir);
    std::set<Definition> x_defs;
    for (const auto& d : reach.in_defs[2])
      if (d.first == "x") x_defs.insert(d);
    CHECK(x_defs == std::set<Definition>{{"x", 1}});
    CHECK(data_dependences(ir, reach) == std::set<DataEdge>{{1, 2, "x"}});
  }
  SUBCASE("parameter flow") {
    const IrMethod ir = lower_source("def m(a){ x = a; }");
    CHECK(data_dependences(ir, reaching_definitions(ir)) == std::set<DataEdge>{{0, 1, "a"}});
  }
  SUBCASE("loop carries both definitions to the header") {
    const IrMethod ir = lower_source("def m(n){ i = 0; while (i < n) { i = i + 1; } }");
    const auto reach = reaching_definitions(ir);
    int header = -1, init = -1, body = -1;
    for (const auto& st : ir.statements) {
      if (st.kind == StatementKind::If) header = st.id;
      if (st.kind == StatementKind::Assignment && st.uses.empty()) init = st.id;
      if (st.kind == StatementKind::Assignment && st.uses.count("i")) body = st.id;
    }
    std::set<Definition> i_defs;
    for (const auto& d : reach.in_defs[static_cast<std::size_t>(header)])
      if (d.first == "i") i_defs.insert(d);
    CHECK(i_defs == std::set<Definition>{{"i", init}, {"i", body}});
    CHECK(data_dependences(ir, reach) == oracle::data_dependences(ir));
  }
}

TEST_CASE("PDG of small programs") {
  const Pdg one = build_pdg(lower_source("def m(a){ x = a; }"));
  CHECK(one.size() == 2);
  CHECK(one.control_edges.empty());
  CHECK(one.data_edges.size() == 1);

  const Pdg diamond =
      build_pdg(lower_source("def m(a){ if (a > 0) { x = 1; } else { x = 2; } return x; }"));
  int if_id = -1;
  for (const auto& n : diamond.nodes)
    if (n.kind == StatementKind::If) if_id = n.id;
  int targets = 0;
  for (const auto& [s, d] : diamond.control_edges) targets += s == if_id;
  CHECK(targets >= 2);

  const Pdg indep = build_pdg(lower_source("def m(){ x = 1; y = 2; }"));
  CHECK(indep.control_edges.empty());
  CHECK(indep.data_edges.empty());
}

TEST_CASE("dataflow matches brute-force oracles on random CFGs") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 12);
    const IrMethod ir = oracle::random_ir(n, rng);
    const auto pd = compute_postdominators(ir);
    for (int p = 0; p < n; ++p)
      for (int x = 0; x < n; ++x)
        REQUIRE(pd.post_dominates(p, x) == oracle::post_dominates(ir, p, x));
    REQUIRE(control_dependences(ir, pd) == oracle::control_dependences(ir));
    REQUIRE(data_dependences(ir, reaching_definitions(ir)) == oracle::data_dependences(ir));
  }
}

TEST_CASE("reaching definitions do not depend on worklist order") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 10);
    const IrMethod ir = oracle::random_ir(n, rng);
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = n - 1 - i;
    const auto a = reaching_definitions(ir);
    const auto b = reaching_definitions(ir, order);
    CHECK(a.in_defs == b.in_defs);
    CHECK(a.out_defs == b.out_defs);
  }
}

TEST_CASE("validate_pdg rejects bad edges") {
  Pdg p = build_pdg(lower_source("def m(a){ x = a; }"));
  Pdg bad = p;
  bad.control_edges.insert({0, 0});
  CHECK_THROWS_AS(validate_pdg(bad), FormatError);
  bad = p;
  bad.data_edges.insert({0, 5, "a"});
  CHECK_THROWS_AS(validate_pdg(bad), FormatError);
}
