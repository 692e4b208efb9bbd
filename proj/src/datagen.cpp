#include "pdgsim/datagen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <json.hpp>

#include "pdgsim/errors.hpp"

namespace pdgsim {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<const char*, kTransformKindCount> kTransformNames = {
    "rename", "reorder", "loop_convert", "dead_code", "reassociate"};

// Pseudo-variable standing for the input stream: two reads of input() must
// stay in order.
constexpr const char* kInputVar = "$input";

std::size_t pick(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

// ---------------------------------------------------------------------------
// AST walkers

void for_each_block(std::vector<Stmt>& block, const std::function<void(std::vector<Stmt>&)>& fn) {
  fn(block);
  for (auto& s : block) {
    for_each_block(s.body, fn);
    for_each_block(s.else_body, fn);
    for (auto& c : s.cases) for_each_block(c.body, fn);
  }
}

void for_each_expr(Expr& e, const std::function<void(Expr&)>& fn) {
  fn(e);
  for (auto& o : e.operands) for_each_expr(o, fn);
}

void for_each_stmt(std::vector<Stmt>& block, const std::function<void(Stmt&)>& fn) {
  for (auto& s : block) {
    fn(s);
    for_each_stmt(s.init, fn);
    for_each_stmt(s.update, fn);
    for_each_stmt(s.body, fn);
    for_each_stmt(s.else_body, fn);
    for (auto& c : s.cases) for_each_stmt(c.body, fn);
  }
}

void for_each_stmt_expr(Stmt& s, const std::function<void(Expr&)>& fn) {
  for (auto* list : {&s.index, &s.value, &s.cond, &s.args})
    for (auto& e : *list) for_each_expr(e, fn);
}

std::set<std::string> program_variables(Ast& ast) {
  std::set<std::string> vars(ast.params.begin(), ast.params.end());
  for_each_stmt(ast.body, [&](Stmt& s) {
    if (s.kind == Stmt::Kind::Assign) vars.insert(s.target);
    for_each_stmt_expr(s, [&](Expr& e) {
      if (e.kind == Expr::Kind::Var || e.kind == Expr::Kind::Index) vars.insert(e.name);
    });
  });
  return vars;
}

bool lowers(const Ast& ast) {
  try {
    lower_to_ir(ast);
    return true;
  } catch (const LowerError&) {
    return false;
  }
}

std::string fresh_name(std::mt19937_64& rng, const std::set<std::string>& taken) {
  static constexpr std::array<const char*, 12> kBases = {
      "tmp", "val", "acc", "idx", "cur", "res", "buf", "cnt", "lim", "pos", "arg", "elem"};
  for (;;) {
    std::string name = kBases[pick(rng, kBases.size())] + std::to_string(pick(rng, 100));
    if (!taken.count(name)) return name;
  }
}

// ---------------------------------------------------------------------------
// Individual rewrites. Each one enumerates its sites on a fresh copy so a
// site that breaks lowering can be skipped.

Ast apply_rename(const Ast& program, std::mt19937_64& rng) {
  Ast copy = program;
  const auto vars = program_variables(copy);
  if (vars.empty()) throw NotApplicable("rename: program has no variables");
  std::set<std::string> taken;
  std::map<std::string, std::string> mapping;
  for (const auto& v : vars) {
    std::string n = fresh_name(rng, taken);
    taken.insert(n);
    mapping[v] = n;
  }
  return rename_variables(program, mapping);
}

struct Effects {
  std::set<std::string> defs;
  std::set<std::string> uses;
};

// Only straight-line statements are swap candidates.
std::optional<Effects> simple_effects(const Stmt& s) {
  Effects fx;
  const auto add_uses = [&](const std::vector<Expr>& list) {
    for (const auto& e : list) {
      collect_expr_vars(e, fx.uses);
      if (expr_has_input(e)) {
        fx.uses.insert(kInputVar);
        fx.defs.insert(kInputVar);
      }
    }
  };
  switch (s.kind) {
    case Stmt::Kind::Assign:
      fx.defs.insert(s.target);
      add_uses(s.index);
      add_uses(s.value);
      return fx;
    case Stmt::Kind::Call:
      // Calls are observable; keep their relative order.
      fx.defs.insert("$call");
      fx.uses.insert("$call");
      add_uses(s.args);
      return fx;
    case Stmt::Kind::Skip:
      return fx;
    default:
      return std::nullopt;
  }
}

bool intersects(const std::set<std::string>& a, const std::set<std::string>& b) {
  return std::any_of(a.begin(), a.end(), [&](const std::string& x) { return b.count(x) > 0; });
}

bool independent(const Stmt& x, const Stmt& y) {
  const auto fx = simple_effects(x);
  const auto fy = simple_effects(y);
  if (!fx || !fy) return false;
  if (x.kind == Stmt::Kind::Skip && y.kind == Stmt::Kind::Skip) return false;  // no-op swap
  return !intersects(fx->defs, fy->defs) && !intersects(fx->defs, fy->uses) &&
         !intersects(fy->defs, fx->uses);
}

template <typename Site, typename Collect, typename Apply>
Ast rewrite_at_random_site(const Ast& program, std::mt19937_64& rng, const char* what,
                           Collect collect, Apply apply) {
  Ast probe = program;
  const std::size_t count = collect(probe).size();
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t k : order) {
    Ast copy = program;
    std::vector<Site> sites = collect(copy);
    apply(sites[k], rng, copy);
    if (lowers(copy)) return copy;
  }
  throw NotApplicable(std::string(what) + ": no legal site");
}

using BlockSite = std::pair<std::vector<Stmt>*, std::size_t>;

Ast apply_reorder(const Ast& program, std::mt19937_64& rng) {
  auto collect = [](Ast& ast) {
    std::vector<BlockSite> sites;
    for_each_block(ast.body, [&](std::vector<Stmt>& b) {
      for (std::size_t i = 0; i + 1 < b.size(); ++i)
        if (independent(b[i], b[i + 1])) sites.emplace_back(&b, i);
    });
    return sites;
  };
  auto apply = [](BlockSite& s, std::mt19937_64&, Ast&) {
    std::swap((*s.first)[s.second], (*s.first)[s.second + 1]);
  };
  return rewrite_at_random_site<BlockSite>(program, rng, "reorder", collect, apply);
}

bool is_simple_assign(const Stmt& s) { return s.kind == Stmt::Kind::Assign; }

Ast apply_loop_convert(const Ast& program, std::mt19937_64& rng) {
  auto collect = [](Ast& ast) {
    std::vector<BlockSite> sites;
    for_each_block(ast.body, [&](std::vector<Stmt>& b) {
      for (std::size_t i = 0; i < b.size(); ++i) {
        if (b[i].kind == Stmt::Kind::For) sites.emplace_back(&b, i);
        // while -> for needs an assignment right before (init) and one
        // closing the body (update).
        if (b[i].kind == Stmt::Kind::While && i > 0 && is_simple_assign(b[i - 1]) &&
            !b[i].body.empty() && is_simple_assign(b[i].body.back()))
          sites.emplace_back(&b, i);
      }
    });
    return sites;
  };
  auto apply = [](BlockSite& site, std::mt19937_64&, Ast&) {
    auto& block = *site.first;
    const std::size_t i = site.second;
    Stmt loop = block[i];
    if (loop.kind == Stmt::Kind::For) {
      Stmt init = loop.init.front();
      Stmt w;
      w.kind = Stmt::Kind::While;
      w.line = loop.line;
      w.cond = loop.cond;
      w.body = loop.body;
      w.body.push_back(loop.update.front());
      block[i] = std::move(w);
      block.insert(block.begin() + static_cast<std::ptrdiff_t>(i), std::move(init));
    } else {
      Stmt f;
      f.kind = Stmt::Kind::For;
      f.line = loop.line;
      f.cond = loop.cond;
      f.init.push_back(block[i - 1]);
      f.update.push_back(loop.body.back());
      f.body = loop.body;
      f.body.pop_back();
      block[i] = std::move(f);
      block.erase(block.begin() + static_cast<std::ptrdiff_t>(i - 1));
    }
  };
  return rewrite_at_random_site<BlockSite>(program, rng, "loop_convert", collect, apply);
}

Ast apply_dead_code(const Ast& program, std::mt19937_64& rng) {
  auto collect = [](Ast& ast) {
    std::vector<BlockSite> sites;
    for_each_block(ast.body, [&](std::vector<Stmt>& b) {
      for (std::size_t i = 0; i <= b.size(); ++i) sites.emplace_back(&b, i);
    });
    return sites;
  };
  auto apply = [](BlockSite& site, std::mt19937_64& r, Ast& ast) {
    Stmt s;
    if (pick(r, 2) == 0) {
      s.kind = Stmt::Kind::Skip;
    } else {
      s.kind = Stmt::Kind::Assign;
      s.target = fresh_name(r, program_variables(ast));
      const auto literal = Expr::integer(static_cast<std::int64_t>(pick(r, 10)));
      if (!ast.params.empty() && pick(r, 2) == 0)
        s.value.push_back(Expr::binary("+", Expr::var(ast.params[pick(r, ast.params.size())]),
                                       literal));
      else
        s.value.push_back(literal);
    }
    site.first->insert(site.first->begin() + static_cast<std::ptrdiff_t>(site.second),
                       std::move(s));
  };
  return rewrite_at_random_site<BlockSite>(program, rng, "dead_code", collect, apply);
}

Ast apply_reassociate(const Ast& program, std::mt19937_64& rng) {
  static const std::set<std::string> kCommutative = {"+", "*", "==", "!="};
  auto collect = [](Ast& ast) {
    std::vector<Expr*> sites;
    for_each_stmt(ast.body, [&](Stmt& s) {
      for_each_stmt_expr(s, [&](Expr& e) {
        if (e.kind == Expr::Kind::Binary && kCommutative.count(e.op) && !expr_has_input(e) &&
            !(e.operands[0] == e.operands[1]))
          sites.push_back(&e);
      });
    });
    return sites;
  };
  auto apply = [](Expr*& e, std::mt19937_64&, Ast&) {
    std::swap(e->operands[0], e->operands[1]);
  };
  return rewrite_at_random_site<Expr*>(program, rng, "reassociate", collect, apply);
}

void rename_expr(Expr& e, const std::map<std::string, std::string>& m) {
  for_each_expr(e, [&](Expr& x) {
    if (x.kind == Expr::Kind::Var || x.kind == Expr::Kind::Index) {
      auto it = m.find(x.name);
      if (it != m.end()) x.name = it->second;
    }
  });
}

struct ChainResult {
  std::string source;
  std::vector<std::string> kinds;
};

ChainResult apply_chain(const std::string& source, int length, std::mt19937_64& rng) {
  Ast ast = parse_source(source);
  ChainResult out;
  for (int step = 0; step < length; ++step) {
    // A kind without a legal site is redrawn; give up on the step after a
    // bounded number of draws.
    for (int attempt = 0; attempt < 20; ++attempt) {
      const auto kind = static_cast<TransformKind>(pick(rng, kTransformKindCount));
      try {
        ast = transform(ast, kind, rng);
        out.kinds.push_back(transform_name(kind));
        break;
      } catch (const NotApplicable&) {
      }
    }
  }
  out.source = print_source(ast);
  return out;
}

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw FormatError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw FormatError("cannot write " + p.string());
  out << text;
}

}  // namespace

std::string transform_name(TransformKind k) { return kTransformNames[static_cast<int>(k)]; }

TransformKind parse_transform(const std::string& s) {
  for (int i = 0; i < kTransformKindCount; ++i)
    if (s == kTransformNames[i]) return static_cast<TransformKind>(i);
  throw ConfigError("unknown transform '" + s + "'");
}

Ast rename_variables(const Ast& program, const std::map<std::string, std::string>& mapping) {
  Ast out = program;
  for (auto& p : out.params) {
    auto it = mapping.find(p);
    if (it != mapping.end()) p = it->second;
  }
  for_each_stmt(out.body, [&](Stmt& s) {
    if (s.kind == Stmt::Kind::Assign) {
      auto it = mapping.find(s.target);
      if (it != mapping.end()) s.target = it->second;
    }
    for_each_stmt_expr(s, [&](Expr& e) { rename_expr(e, mapping); });
  });
  return out;
}

Ast transform(const Ast& program, TransformKind kind, std::mt19937_64& rng) {
  switch (kind) {
    case TransformKind::Rename:
      return apply_rename(program, rng);
    case TransformKind::Reorder:
      return apply_reorder(program, rng);
    case TransformKind::LoopConvert:
      return apply_loop_convert(program, rng);
    case TransformKind::DeadCode:
      return apply_dead_code(program, rng);
    case TransformKind::Reassociate:
      return apply_reassociate(program, rng);
  }
  throw NotApplicable("unknown transform");
}

std::string transform_source(const std::string& source, TransformKind kind,
                             std::mt19937_64& rng) {
  return print_source(transform(parse_source(source), kind, rng));
}

std::vector<SeedGroup> load_seed_groups(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InsufficientSeeds("seed directory not found: " + dir.string());
  std::vector<fs::path> group_dirs;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) group_dirs.push_back(e.path());
  std::sort(group_dirs.begin(), group_dirs.end());
  std::vector<SeedGroup> groups;
  for (const auto& gd : group_dirs) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(gd))
      if (e.is_regular_file() && e.path().extension() == ".src") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    SeedGroup g{gd.filename().string(), {}};
    for (const auto& f : files) g.programs.push_back({f.stem().string(), read_file(f)});
    if (!g.programs.empty()) groups.push_back(std::move(g));
  }
  return groups;
}

std::vector<LabeledPair> generate_dataset(const std::vector<SeedGroup>& groups, int n_pairs,
                                          std::uint64_t seed) {
  if (groups.size() < 2)
    throw InsufficientSeeds("need at least 2 functionality groups, found " +
                            std::to_string(groups.size()));
  for (const auto& g : groups)
    if (g.programs.empty()) throw InsufficientSeeds("group '" + g.name + "' has no programs");
  if (n_pairs < 0) throw ConfigError("pair count must be >= 0");

  std::mt19937_64 rng(seed);
  const int n_non = n_pairs / 2;
  std::vector<int> labels(static_cast<std::size_t>(n_pairs), 1);
  std::fill(labels.begin(), labels.begin() + n_non, 0);
  std::shuffle(labels.begin(), labels.end(), rng);

  std::vector<LabeledPair> pairs;
  pairs.reserve(labels.size());
  for (int label : labels) {
    std::mt19937_64 prng(rng());
    const int chain_len = 1 + static_cast<int>(pick(prng, 3));
    LabeledPair p;
    p.label = label;
    if (label == 1) {
      const auto& g = groups[pick(prng, groups.size())];
      const std::size_t i = pick(prng, g.programs.size());
      std::size_t j = i;
      std::string prefix;
      if (g.programs.size() > 1 && pick(prng, 2) == 0) {
        j = (i + 1 + pick(prng, g.programs.size() - 1)) % g.programs.size();
        prefix = "variant(" + g.programs[i].name + "," + g.programs[j].name + ")+";
      }
      auto chain = apply_chain(g.programs[j].source, chain_len, prng);
      p.source_a = g.programs[i].source;
      p.source_b = std::move(chain.source);
      p.provenance = prefix + join(chain.kinds, ">");
    } else {
      const std::size_t ga = pick(prng, groups.size());
      const std::size_t gb = (ga + 1 + pick(prng, groups.size() - 1)) % groups.size();
      const auto& pa = groups[ga].programs[pick(prng, groups[ga].programs.size())];
      const auto& pb = groups[gb].programs[pick(prng, groups[gb].programs.size())];
      p.source_a = pa.source;
      p.source_b = apply_chain(pb.source, chain_len, prng).source;
      p.provenance = kDistinctProvenance;
    }
    if (pick(prng, 2) == 0) std::swap(p.source_a, p.source_b);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

std::string split_name(Split s) {
  switch (s) {
    case Split::Train:
      return "train";
    case Split::Val:
      return "val";
    case Split::Test:
      return "test";
  }
  return "train";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw FormatError("unknown split '" + s + "'");
}

std::vector<Split> assign_splits(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(0.70 * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(0.15 * static_cast<double>(n)));
  std::vector<Split> out(n, Split::Test);
  for (std::size_t k = 0; k < n; ++k) {
    if (k < n_train) out[order[k]] = Split::Train;
    else if (k < n_train + n_val) out[order[k]] = Split::Val;
  }
  return out;
}

std::vector<CorpusEntry> make_corpus(const std::vector<LabeledPair>& pairs, std::uint64_t seed) {
  const auto splits = assign_splits(pairs.size(), seed);
  std::vector<CorpusEntry> out;
  out.reserve(pairs.size());
  char id[32];
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    std::snprintf(id, sizeof id, "p%04zu", i);
    out.push_back({id, pairs[i], splits[i]});
  }
  return out;
}

void write_corpus(const fs::path& dir, const std::vector<CorpusEntry>& entries,
                  std::uint64_t seed) {
  fs::create_directories(dir / "pairs");
  json index;
  index["seed"] = seed;
  index["pairs"] = json::array();
  for (const auto& e : entries) {
    const fs::path pd = dir / "pairs" / e.id;
    fs::create_directories(pd);
    write_file(pd / "a.src", e.pair.source_a);
    write_file(pd / "b.src", e.pair.source_b);
    json meta = {{"label", e.pair.label}, {"provenance", e.pair.provenance}};
    write_file(pd / "meta.json", meta.dump(2) + "\n");
    index["pairs"].push_back({{"id", e.id}, {"label", e.pair.label}, {"split", split_name(e.split)}});
  }
  write_file(dir / "index.json", index.dump(2) + "\n");
}

std::vector<CorpusEntry> read_corpus(const fs::path& dir) {
  json index;
  try {
    index = json::parse(read_file(dir / "index.json"));
  } catch (const json::exception& ex) {
    throw FormatError((dir / "index.json").string() + ": " + ex.what());
  }
  if (!index.contains("pairs") || !index["pairs"].is_array())
    throw FormatError((dir / "index.json").string() + ": $.pairs missing");
  std::vector<CorpusEntry> out;
  for (const auto& item : index["pairs"]) {
    if (!item.contains("id") || !item["id"].is_string() || !item.contains("split") ||
        !item["split"].is_string())
      throw FormatError((dir / "index.json").string() + ": pair entry needs id and split");
    CorpusEntry e;
    e.id = item["id"].get<std::string>();
    e.split = parse_split(item["split"].get<std::string>());
    const fs::path pd = dir / "pairs" / e.id;
    e.pair.source_a = read_file(pd / "a.src");
    e.pair.source_b = read_file(pd / "b.src");
    json meta;
    try {
      meta = json::parse(read_file(pd / "meta.json"));
    } catch (const json::exception& ex) {
      throw FormatError((pd / "meta.json").string() + ": " + ex.what());
    }
    if (!meta.contains("label") || !meta["label"].is_number_integer())
      throw FormatError((pd / "meta.json").string() + ": $.label missing");
    e.pair.label = meta["label"].get<int>();
    if (e.pair.label != 0 && e.pair.label != 1)
      throw FormatError((pd / "meta.json").string() + ": $.label must be 0 or 1");
    e.pair.provenance = meta.value("provenance", "");
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace pdgsim
