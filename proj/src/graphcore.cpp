#include "pdgsim/graphcore.hpp"

#include <sstream>

#include <json.hpp>

#include "pdgsim/errors.hpp"

namespace pdgsim {

using nlohmann::json;

FeatureMatrix encode_node_features(const Pdg& pdg) {
  if (pdg.size() == 0) throw EmptyGraph("cannot encode features of an empty PDG");
  FeatureMatrix x{Matrix::Zero(pdg.size(), kStatementKindCount)};
  for (const auto& node : pdg.nodes) x.values(node.id, kind_index(node.kind)) = 1.0;
  return x;
}

Adjacency adjacency_matrix(const Pdg& pdg, EdgeClass cls, bool self_loops) {
  Adjacency a{Matrix::Zero(pdg.size(), pdg.size()), self_loops};
  if (cls != EdgeClass::Data)
    for (const auto& [s, d] : pdg.control_edges) a.values(s, d) = 1.0;
  if (cls != EdgeClass::Control)
    for (const auto& [s, d, v] : pdg.data_edges) a.values(s, d) = 1.0;
  if (self_loops) a.values.diagonal().setOnes();
  return a;
}

GraphTensors make_graph_tensors(const Pdg& pdg) {
  return GraphTensors{encode_node_features(pdg), adjacency_matrix(pdg, EdgeClass::Control, true),
                      adjacency_matrix(pdg, EdgeClass::Data, true),
                      adjacency_matrix(pdg, EdgeClass::Both, true)};
}

Pdg permute_pdg(const Pdg& pdg, const std::vector<int>& perm) {
  if (static_cast<int>(perm.size()) != pdg.size())
    throw ShapeError("permutation size does not match PDG");
  Pdg out;
  out.nodes.resize(pdg.nodes.size());
  for (const auto& node : pdg.nodes) {
    const int to = perm[static_cast<std::size_t>(node.id)];
    out.nodes[static_cast<std::size_t>(to)] = PdgNode{to, node.kind, node.line};
  }
  for (const auto& [s, d] : pdg.control_edges)
    out.control_edges.emplace(perm[static_cast<std::size_t>(s)], perm[static_cast<std::size_t>(d)]);
  for (const auto& [s, d, v] : pdg.data_edges)
    out.data_edges.emplace(perm[static_cast<std::size_t>(s)], perm[static_cast<std::size_t>(d)], v);
  return out;
}

std::string serialize_pdg(const Pdg& pdg) {
  json nodes = json::array();
  for (const auto& node : pdg.nodes)
    nodes.push_back({{"id", node.id}, {"kind", statement_kind_name(node.kind)}, {"line", node.line}});

  // Merge both edge classes into one (src, dst, kind, var)-ordered list.
  struct Row {
    int src, dst;
    std::string kind, var;
    bool operator<(const Row& o) const {
      return std::tie(src, dst, kind, var) < std::tie(o.src, o.dst, o.kind, o.var);
    }
  };
  std::vector<Row> rows;
  for (const auto& [s, d] : pdg.control_edges) rows.push_back({s, d, "control", ""});
  for (const auto& [s, d, v] : pdg.data_edges) rows.push_back({s, d, "data", v});
  std::sort(rows.begin(), rows.end());

  json edges = json::array();
  for (const auto& r : rows) {
    json e = {{"src", r.src}, {"dst", r.dst}, {"kind", r.kind}};
    if (r.kind == "data") e["var"] = r.var;
    edges.push_back(std::move(e));
  }
  return json{{"nodes", std::move(nodes)}, {"edges", std::move(edges)}}.dump();
}

namespace {

const json& require(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) throw FormatError(path + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw FormatError(path + "." + key + ": missing");
  return *it;
}

int require_int(const json& obj, const std::string& key, const std::string& path) {
  const json& v = require(obj, key, path);
  if (!v.is_number_integer()) throw FormatError(path + "." + key + ": expected an integer");
  return v.get<int>();
}

std::string require_string(const json& obj, const std::string& key, const std::string& path) {
  const json& v = require(obj, key, path);
  if (!v.is_string()) throw FormatError(path + "." + key + ": expected a string");
  return v.get<std::string>();
}

}  // namespace

Pdg deserialize_pdg(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("$: ") + e.what());
  }
  const json& nodes = require(doc, "nodes", "$");
  const json& edges = require(doc, "edges", "$");
  if (!nodes.is_array()) throw FormatError("$.nodes: expected an array");
  if (!edges.is_array()) throw FormatError("$.edges: expected an array");

  Pdg pdg;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const std::string path = "$.nodes[" + std::to_string(i) + "]";
    PdgNode node;
    node.id = require_int(nodes[i], "id", path);
    auto kind = statement_kind_from_name(require_string(nodes[i], "kind", path));
    if (!kind) throw FormatError(path + ".kind: unknown statement kind");
    node.kind = *kind;
    node.line = require_int(nodes[i], "line", path);
    pdg.nodes.push_back(node);
  }
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const std::string path = "$.edges[" + std::to_string(i) + "]";
    const int src = require_int(edges[i], "src", path);
    const int dst = require_int(edges[i], "dst", path);
    const std::string kind = require_string(edges[i], "kind", path);
    if (kind == "control") {
      pdg.control_edges.emplace(src, dst);
    } else if (kind == "data") {
      pdg.data_edges.emplace(src, dst, require_string(edges[i], "var", path));
    } else {
      throw FormatError(path + ".kind: expected \"control\" or \"data\"");
    }
  }
  validate_pdg(pdg);
  return pdg;
}

std::string pdg_to_dot(const Pdg& pdg, const std::string& name) {
  std::ostringstream os;
  os << "digraph \"" << name << "\" {\n";
  os << "  node [shape=box];\n";
  for (const auto& node : pdg.nodes)
    os << "  n" << node.id << " [label=\"" << node.id << ": " << statement_kind_name(node.kind)
       << " (line " << node.line << ")\"];\n";
  for (const auto& [s, d] : pdg.control_edges)
    os << "  n" << s << " -> n" << d << " [style=solid];\n";
  for (const auto& [s, d, v] : pdg.data_edges)
    os << "  n" << s << " -> n" << d << " [style=dashed, label=\"" << v << "\"];\n";
  os << "}\n";
  return os.str();
}

}  // namespace pdgsim
