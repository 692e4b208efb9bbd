#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "pdgsim/errors.hpp"
#include "pdgsim/graphcore.hpp"

using namespace pdgsim;

namespace {

Pdg two_node() {
  Pdg p;
  p.nodes = {{0, StatementKind::Identity, 1}, {1, StatementKind::Assignment, 2}};
  p.data_edges.insert({0, 1, "a"});
  return p;
}

}  // namespace

TEST_CASE("one-hot kind features") {
  Pdg p;
  p.nodes = {{0, StatementKind::Assignment, 1}, {1, StatementKind::Identity, 1},
             {2, StatementKind::TableSwitch, 2}};
  const Matrix x = encode_node_features(p).values;
  REQUIRE(x.rows() == 3);
  REQUIRE(x.cols() == 18);
  Matrix expected = Matrix::Zero(1, 18);
  expected(0, 1) = 1.0;
  CHECK(x.row(0) == expected);
  CHECK(x(1, 0) == 1.0);
  CHECK(x(2, 15) == 1.0);
  for (Eigen::Index r = 0; r < 3; ++r) CHECK(x.row(r).sum() == 1.0);
}

TEST_CASE("adjacency orientation and edge classes") {
  const Pdg p = two_node();
  Matrix data(2, 2);
  data << 0, 1, 0, 0;
  CHECK(adjacency_matrix(p, EdgeClass::Data, false).values == data);
  CHECK(adjacency_matrix(p, EdgeClass::Control, false).values == Matrix::Zero(2, 2));
  Matrix both(2, 2);
  both << 1, 1, 0, 1;
  CHECK(adjacency_matrix(p, EdgeClass::Both, true).values == both);
}

TEST_CASE("canonical JSON round-trip") {
  const Pdg p = two_node();
  const std::string text = serialize_pdg(p);
  CHECK(text == serialize_pdg(p));
  CHECK(deserialize_pdg(text) == p);
  CHECK(text.find(R"("var":"a")") != std::string::npos);
  CHECK_THROWS_AS(deserialize_pdg(R"({"nodes":[]})"), FormatError);
  CHECK_THROWS_AS(deserialize_pdg("not json"), FormatError);
}

TEST_CASE("DOT draws control solid and data dashed") {
  Pdg p = two_node();
  p.nodes.push_back({2, StatementKind::If, 3});
  p.control_edges.insert({2, 1});
  const std::string dot = pdg_to_dot(p);
  CHECK(dot.find("n2 -> n1") != std::string::npos);
  CHECK(dot.find("style=dashed") != std::string::npos);
  const auto ctl = dot.find("n2 -> n1");
  const auto eol = dot.find('\n', ctl);
  CHECK(dot.substr(ctl, eol - ctl).find("dashed") == std::string::npos);
}

TEST_CASE("permute_pdg relabels nodes consistently") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Pdg p = build_pdg(oracle::random_ir(2 + static_cast<int>(rng() % 8), rng));
    std::vector<int> perm(static_cast<std::size_t>(p.size()));
    for (int i = 0; i < p.size(); ++i) perm[static_cast<std::size_t>(i)] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    const Pdg q = permute_pdg(p, perm);
    CHECK(oracle::isomorphic(p, q));
    for (int i = 0; i < p.size(); ++i)
      CHECK(q.nodes[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])].kind ==
            p.nodes[static_cast<std::size_t>(i)].kind);
  }
}

TEST_CASE("isomorphism oracle tells graphs apart") {
  Pdg a = two_node();
  Pdg b = a;
  b.data_edges = {{0, 1, "b"}};
  CHECK_FALSE(oracle::isomorphic(a, b));
  b = a;
  b.data_edges = {{1, 0, "a"}};
  CHECK_FALSE(oracle::isomorphic(a, b));
}
