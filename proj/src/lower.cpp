#include <algorithm>
#include <array>
#include <charconv>
#include <sstream>

#include "pdgsim/errors.hpp"
#include "pdgsim/frontend.hpp"

namespace pdgsim {

namespace {

constexpr std::array<std::string_view, kStatementKindCount> kKindNames = {
    "Identity",   "Assignment",   "Abstract",    "AbstractDefinition", "Breakpoint",
    "EnterMonitor", "ExitMonitor", "Goto",       "If",                 "Invoke",
    "LookupSwitch", "Nop",        "Return",      "ReturnVoid",         "Throw",
    "TableSwitch",  "Reserved16", "Reserved17",
};

// An unresolved CFG edge: slot `slot` of statement `stmt` points at whatever
// statement is emitted next. stmt == -1 stands for the method entry.
struct Pending {
  int stmt;
  int slot;
};

bool block_can_leave(const std::vector<Stmt>& block);

bool stmt_can_leave(const Stmt& s) {
  if (s.kind == Stmt::Kind::Return || s.kind == Stmt::Kind::Throw) return true;
  if (block_can_leave(s.body) || block_can_leave(s.else_body)) return true;
  return std::any_of(s.cases.begin(), s.cases.end(),
                     [](const SwitchCase& c) { return block_can_leave(c.body); });
}

bool block_can_leave(const std::vector<Stmt>& block) {
  return std::any_of(block.begin(), block.end(), stmt_can_leave);
}

bool is_constant_true(const Expr& e) { return e.kind == Expr::Kind::Int && e.value != 0; }

class Lowering {
public:
  IrMethod run(const Ast& ast) {
    ir_.name = ast.method;
    pending_.push_back({-1, 0});
    for (const auto& p : ast.params) {
      const int id = emit(StatementKind::Identity, {p}, {}, 1, 1);
      pending_ = {{id, 0}};
    }
    lower_block(ast.body);
    ir_.exit = ir_.size();
    for (const auto& p : pending_) patch(p, ir_.exit);
    for (int id : exits_) ir_.succ[static_cast<std::size_t>(id)][0] = ir_.exit;
    if (ir_.size() == 0) ir_.entry = ir_.exit;
    return std::move(ir_);
  }

private:
  IrMethod ir_;
  std::vector<Pending> pending_;
  std::vector<int> exits_;  // Return/ReturnVoid/Throw sites

  void patch(const Pending& p, int target) {
    if (p.stmt < 0) {
      ir_.entry = target;
    } else {
      ir_.succ[static_cast<std::size_t>(p.stmt)][static_cast<std::size_t>(p.slot)] = target;
    }
  }

  int emit(StatementKind kind, std::set<std::string> defs, std::set<std::string> uses, int line,
           int slots) {
    const int id = ir_.size();
    if (pending_.empty())
      throw LowerError("unreachable statement at line " + std::to_string(line));
    ir_.statements.push_back(IrStatement{id, kind, std::move(defs), std::move(uses), line});
    ir_.succ.emplace_back(static_cast<std::size_t>(slots), -1);
    for (const auto& p : pending_) patch(p, id);
    pending_.clear();
    return id;
  }

  void lower_block(const std::vector<Stmt>& block) {
    for (const auto& s : block) lower_stmt(s);
  }

  void lower_assign(const Stmt& s) {
    std::set<std::string> uses;
    for (const auto& e : s.index) collect_expr_vars(e, uses);
    for (const auto& e : s.value) collect_expr_vars(e, uses);
    emit(StatementKind::Assignment, {s.target}, std::move(uses), s.line, 1);
    pending_ = {{ir_.size() - 1, 0}};
  }

  void lower_loop(const Stmt& s) {
    if (is_constant_true(s.cond.front()) && !block_can_leave(s.body))
      throw LowerError("loop at line " + std::to_string(s.line) +
                       " has a constant-true condition and no exit");
    std::set<std::string> uses;
    collect_expr_vars(s.cond.front(), uses);
    const int head = emit(StatementKind::If, {}, std::move(uses), s.line, 2);
    pending_ = {{head, 0}};
    lower_block(s.body);
    if (!pending_.empty()) {
      for (const auto& u : s.update) lower_assign(u);
      const int back = emit(StatementKind::Goto, {}, {}, s.line, 1);
      ir_.succ[static_cast<std::size_t>(back)][0] = head;
    }
    pending_ = {{head, 1}};
  }

  void lower_stmt(const Stmt& s) {
    switch (s.kind) {
      case Stmt::Kind::Assign:
        lower_assign(s);
        return;
      case Stmt::Kind::If: {
        std::set<std::string> uses;
        collect_expr_vars(s.cond.front(), uses);
        const int id = emit(StatementKind::If, {}, std::move(uses), s.line, 2);
        pending_ = {{id, 0}};
        lower_block(s.body);
        auto then_out = std::move(pending_);
        pending_ = {{id, 1}};
        lower_block(s.else_body);
        pending_.insert(pending_.begin(), then_out.begin(), then_out.end());
        return;
      }
      case Stmt::Kind::While:
        lower_loop(s);
        return;
      case Stmt::Kind::For:
        lower_assign(s.init.front());
        lower_loop(s);
        return;
      case Stmt::Kind::Switch: {
        std::vector<std::int64_t> labels;
        for (const auto& c : s.cases) labels.push_back(c.label);
        std::sort(labels.begin(), labels.end());
        if (std::adjacent_find(labels.begin(), labels.end()) != labels.end())
          throw LowerError("duplicate case label in switch at line " + std::to_string(s.line));
        const bool dense =
            !labels.empty() &&
            labels.back() - labels.front() + 1 == static_cast<std::int64_t>(labels.size());
        std::set<std::string> uses;
        collect_expr_vars(s.cond.front(), uses);
        const int id = emit(dense ? StatementKind::TableSwitch : StatementKind::LookupSwitch, {},
                            std::move(uses), s.line, static_cast<int>(s.cases.size()) + 1);
        std::vector<Pending> out;
        for (std::size_t k = 0; k < s.cases.size(); ++k) {
          pending_ = {{id, static_cast<int>(k)}};
          lower_block(s.cases[k].body);
          out.insert(out.end(), pending_.begin(), pending_.end());
        }
        pending_ = {{id, static_cast<int>(s.cases.size())}};
        lower_block(s.else_body);
        out.insert(out.end(), pending_.begin(), pending_.end());
        pending_ = std::move(out);
        return;
      }
      case Stmt::Kind::Call: {
        std::set<std::string> uses;
        for (const auto& e : s.args) collect_expr_vars(e, uses);
        const int id = emit(StatementKind::Invoke, {}, std::move(uses), s.line, 1);
        pending_ = {{id, 0}};
        return;
      }
      case Stmt::Kind::Return:
      case Stmt::Kind::Throw: {
        std::set<std::string> uses;
        for (const auto& e : s.value) collect_expr_vars(e, uses);
        StatementKind kind = StatementKind::Throw;
        if (s.kind == Stmt::Kind::Return)
          kind = s.value.empty() ? StatementKind::ReturnVoid : StatementKind::Return;
        const int id = emit(kind, {}, std::move(uses), s.line, 1);
        // Exit id is only known once the whole body is lowered.
        exits_.push_back(id);
        pending_.clear();
        return;
      }
      case Stmt::Kind::Skip: {
        const int id = emit(StatementKind::Nop, {}, {}, s.line, 1);
        pending_ = {{id, 0}};
        return;
      }
    }
  }
};

std::string join(const std::set<std::string>& xs) {
  std::string out;
  for (const auto& x : xs) {
    if (!out.empty()) out += ',';
    out += x;
  }
  return out;
}

}  // namespace

std::string_view statement_kind_name(StatementKind kind) {
  return kKindNames[static_cast<std::size_t>(kind)];
}

std::optional<StatementKind> statement_kind_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i)
    if (kKindNames[i] == name) return static_cast<StatementKind>(i);
  return std::nullopt;
}

IrMethod lower_to_ir(const Ast& ast) {
  IrMethod ir = Lowering().run(ast);
  validate_ir(ir);
  return ir;
}

IrMethod lower_source(std::string_view source) { return lower_to_ir(parse_source(source)); }

void validate_ir(const IrMethod& ir) {
  const int n = ir.size();
  if (ir.exit != n) throw LowerError("exit id must equal the statement count");
  if (static_cast<int>(ir.succ.size()) != n) throw LowerError("successor table size mismatch");
  if (n == 0) return;
  if (ir.entry < 0 || ir.entry >= n) throw LowerError("entry id out of range");

  std::vector<std::vector<int>> pred(static_cast<std::size_t>(n) + 1);
  for (int i = 0; i < n; ++i) {
    const auto& st = ir.statements[static_cast<std::size_t>(i)];
    const auto& out = ir.succ[static_cast<std::size_t>(i)];
    if (st.id != i) throw LowerError("statement ids must be dense and ordered");
    if (out.empty()) throw LowerError("statement " + std::to_string(i) + " has no successor");
    if (st.kind == StatementKind::If && out.size() != 2)
      throw LowerError("If statement " + std::to_string(i) + " must have 2 successors");
    if (st.kind == StatementKind::Goto && out.size() != 1)
      throw LowerError("Goto statement " + std::to_string(i) + " must have 1 successor");
    for (int t : out) {
      if (t < 0 || t > n)
        throw LowerError("statement " + std::to_string(i) + " has an invalid successor");
      pred[static_cast<std::size_t>(t)].push_back(i);
    }
  }

  std::vector<char> seen(static_cast<std::size_t>(n) + 1, 0);
  std::vector<int> stack = {ir.entry};
  seen[static_cast<std::size_t>(ir.entry)] = 1;
  while (!stack.empty()) {
    int u = stack.back();
    stack.pop_back();
    if (u == n) continue;
    for (int v : ir.succ[static_cast<std::size_t>(u)])
      if (!seen[static_cast<std::size_t>(v)]++) stack.push_back(v);
  }
  for (int i = 0; i < n; ++i)
    if (!seen[static_cast<std::size_t>(i)])
      throw LowerError("statement " + std::to_string(i) + " is unreachable from entry");

  std::fill(seen.begin(), seen.end(), 0);
  stack = {n};
  seen[static_cast<std::size_t>(n)] = 1;
  while (!stack.empty()) {
    int u = stack.back();
    stack.pop_back();
    for (int v : pred[static_cast<std::size_t>(u)])
      if (!seen[static_cast<std::size_t>(v)]++) stack.push_back(v);
  }
  for (int i = 0; i < n; ++i)
    if (!seen[static_cast<std::size_t>(i)])
      throw LowerError("exit is unreachable from statement " + std::to_string(i));
}

std::string format_ir(const IrMethod& ir) {
  std::ostringstream os;
  for (const auto& st : ir.statements) {
    os << st.id << ' ' << statement_kind_name(st.kind) << " defs=[" << join(st.defs)
       << "] uses=[" << join(st.uses) << "] succ=[";
    const auto& out = ir.succ[static_cast<std::size_t>(st.id)];
    for (std::size_t i = 0; i < out.size(); ++i) os << (i ? "," : "") << out[i];
    os << "] line=" << st.line << '\n';
  }
  return os.str();
}

namespace {

std::string_view field(std::string_view token, std::string_view key, int lineno) {
  if (token.substr(0, key.size()) != key)
    throw FormatError("IR line " + std::to_string(lineno) + ": expected " + std::string(key));
  return token.substr(key.size());
}

std::vector<std::string> bracket_list(std::string_view v, int lineno) {
  if (v.size() < 2 || v.front() != '[' || v.back() != ']')
    throw FormatError("IR line " + std::to_string(lineno) + ": malformed list");
  v = v.substr(1, v.size() - 2);
  std::vector<std::string> out;
  while (!v.empty()) {
    auto comma = v.find(',');
    out.emplace_back(v.substr(0, comma));
    if (out.back().empty())
      throw FormatError("IR line " + std::to_string(lineno) + ": empty list element");
    if (comma == std::string_view::npos) break;
    v = v.substr(comma + 1);
  }
  return out;
}

int to_int(std::string_view s, int lineno) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw FormatError("IR line " + std::to_string(lineno) + ": bad integer '" + std::string(s) +
                      "'");
  return v;
}

}  // namespace

IrMethod parse_ir(std::string_view text) {
  IrMethod ir;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::vector<std::string> parts;
    for (std::string p; ls >> p;) parts.push_back(p);
    if (parts.empty() || parts[0][0] == '#') continue;
    if (parts.size() < 5 || parts.size() > 6)
      throw FormatError("IR line " + std::to_string(lineno) + ": expected 5 or 6 fields");
    IrStatement st;
    st.id = to_int(parts[0], lineno);
    auto kind = statement_kind_from_name(parts[1]);
    if (!kind) throw FormatError("IR line " + std::to_string(lineno) + ": unknown kind");
    st.kind = *kind;
    for (auto& d : bracket_list(field(parts[2], "defs=", lineno), lineno)) st.defs.insert(d);
    for (auto& u : bracket_list(field(parts[3], "uses=", lineno), lineno)) st.uses.insert(u);
    std::vector<int> out;
    for (auto& s : bracket_list(field(parts[4], "succ=", lineno), lineno))
      out.push_back(to_int(s, lineno));
    if (parts.size() == 6) st.line = to_int(field(parts[5], "line=", lineno), lineno);
    ir.statements.push_back(std::move(st));
    ir.succ.push_back(std::move(out));
  }
  ir.exit = ir.size();
  ir.entry = ir.size() == 0 ? ir.exit : 0;
  try {
    validate_ir(ir);
  } catch (const LowerError& e) {
    throw FormatError(e.what());
  }
  return ir;
}

}  // namespace pdgsim
