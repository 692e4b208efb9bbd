#include <algorithm>
#include <charconv>
#include <sstream>

#include "pdgsim/errors.hpp"
#include "pdgsim/frontend.hpp"

namespace pdgsim {

Expr Expr::integer(std::int64_t v, int line) {
  Expr e;
  e.kind = Kind::Int;
  e.value = v;
  e.line = line;
  return e;
}

Expr Expr::var(std::string n, int line) {
  Expr e;
  e.kind = Kind::Var;
  e.name = std::move(n);
  e.line = line;
  return e;
}

Expr Expr::index(std::string array, Expr idx, int line) {
  Expr e;
  e.kind = Kind::Index;
  e.name = std::move(array);
  e.operands.push_back(std::move(idx));
  e.line = line;
  return e;
}

Expr Expr::binary(std::string op, Expr lhs, Expr rhs, int line) {
  Expr e;
  e.kind = Kind::Binary;
  e.op = std::move(op);
  e.operands.push_back(std::move(lhs));
  e.operands.push_back(std::move(rhs));
  e.line = line;
  return e;
}

Expr Expr::unary(std::string op, Expr operand, int line) {
  Expr e;
  e.kind = Kind::Unary;
  e.op = std::move(op);
  e.operands.push_back(std::move(operand));
  e.line = line;
  return e;
}

Expr Expr::input(int line) {
  Expr e;
  e.kind = Kind::Input;
  e.line = line;
  return e;
}

bool Expr::operator==(const Expr& o) const {
  return kind == o.kind && value == o.value && name == o.name && op == o.op &&
         operands == o.operands;
}

bool Stmt::operator==(const Stmt& o) const {
  return kind == o.kind && target == o.target && index == o.index && value == o.value &&
         cond == o.cond && body == o.body && else_body == o.else_body &&
         has_else == o.has_else && init == o.init && update == o.update && cases == o.cases &&
         callee == o.callee && args == o.args;
}

void collect_expr_vars(const Expr& e, std::set<std::string>& out) {
  if (e.kind == Expr::Kind::Var || e.kind == Expr::Kind::Index) out.insert(e.name);
  for (const auto& child : e.operands) collect_expr_vars(child, out);
}

bool expr_has_input(const Expr& e) {
  if (e.kind == Expr::Kind::Input) return true;
  return std::any_of(e.operands.begin(), e.operands.end(), expr_has_input);
}

namespace {

class Parser {
public:
  explicit Parser(const std::vector<Token>& tokens) : tokens_(tokens) {}

  Ast parse_method() {
    Ast ast;
    expect(TokenKind::KwDef, "'def'");
    ast.method = expect(TokenKind::Ident, "method name").text;
    expect(TokenKind::LParen, "'('");
    if (!at(TokenKind::RParen)) {
      ast.params.push_back(expect(TokenKind::Ident, "parameter name").text);
      while (accept(TokenKind::Comma))
        ast.params.push_back(expect(TokenKind::Ident, "parameter name").text);
    }
    expect(TokenKind::RParen, "')'");
    ast.body = parse_block();
    if (pos_ < tokens_.size()) fail("end of input");
    return ast;
  }

private:
  const std::vector<Token>& tokens_;
  std::size_t pos_ = 0;

  bool at(TokenKind k) const { return pos_ < tokens_.size() && tokens_[pos_].kind == k; }

  int line() const {
    if (pos_ < tokens_.size()) return tokens_[pos_].line;
    return tokens_.empty() ? 1 : tokens_.back().line;
  }

  [[noreturn]] void fail(const std::string& expected) const {
    std::string found = "end of input";
    if (pos_ < tokens_.size()) found = "'" + tokens_[pos_].text + "'";
    throw ParseError(line(), expected, found);
  }

  bool accept(TokenKind k) {
    if (!at(k)) return false;
    ++pos_;
    return true;
  }

  const Token& expect(TokenKind k, const std::string& what) {
    if (!at(k)) fail(what);
    return tokens_[pos_++];
  }

  std::vector<Stmt> parse_block() {
    expect(TokenKind::LBrace, "'{'");
    std::vector<Stmt> out;
    while (!at(TokenKind::RBrace)) {
      if (pos_ >= tokens_.size()) fail("'}'");
      out.push_back(parse_stmt());
    }
    expect(TokenKind::RBrace, "'}'");
    return out;
  }

  // IDENT ["[" expr "]"] "=" expr, without the trailing semicolon.
  Stmt parse_simple() {
    Stmt s;
    s.kind = Stmt::Kind::Assign;
    s.line = line();
    s.target = expect(TokenKind::Ident, "statement").text;
    if (accept(TokenKind::LBracket)) {
      s.index.push_back(parse_expr());
      expect(TokenKind::RBracket, "']'");
    }
    expect(TokenKind::Eq, "'='");
    s.value.push_back(parse_expr());
    return s;
  }

  Stmt parse_stmt() {
    const int ln = line();
    if (at(TokenKind::Ident)) {
      Stmt s = parse_simple();
      expect(TokenKind::Semi, "';'");
      return s;
    }
    Stmt s;
    s.line = ln;
    if (accept(TokenKind::KwIf)) {
      s.kind = Stmt::Kind::If;
      expect(TokenKind::LParen, "'('");
      s.cond.push_back(parse_expr());
      expect(TokenKind::RParen, "')'");
      s.body = parse_block();
      if (accept(TokenKind::KwElse)) {
        s.has_else = true;
        s.else_body = parse_block();
      }
      return s;
    }
    if (accept(TokenKind::KwWhile)) {
      s.kind = Stmt::Kind::While;
      expect(TokenKind::LParen, "'('");
      s.cond.push_back(parse_expr());
      expect(TokenKind::RParen, "')'");
      s.body = parse_block();
      return s;
    }
    if (accept(TokenKind::KwFor)) {
      s.kind = Stmt::Kind::For;
      expect(TokenKind::LParen, "'('");
      s.init.push_back(parse_simple());
      expect(TokenKind::Semi, "';'");
      s.cond.push_back(parse_expr());
      expect(TokenKind::Semi, "';'");
      s.update.push_back(parse_simple());
      expect(TokenKind::RParen, "')'");
      s.body = parse_block();
      return s;
    }
    if (accept(TokenKind::KwSwitch)) {
      s.kind = Stmt::Kind::Switch;
      expect(TokenKind::LParen, "'('");
      s.cond.push_back(parse_expr());
      expect(TokenKind::RParen, "')'");
      expect(TokenKind::LBrace, "'{'");
      while (accept(TokenKind::KwCase)) {
        SwitchCase c;
        bool negative = accept(TokenKind::Minus);
        c.label = parse_int(expect(TokenKind::Int, "case label"));
        if (negative) c.label = -c.label;
        expect(TokenKind::Colon, "':'");
        c.body = parse_block();
        s.cases.push_back(std::move(c));
      }
      if (accept(TokenKind::KwDefault)) {
        expect(TokenKind::Colon, "':'");
        s.has_else = true;
        s.else_body = parse_block();
      }
      expect(TokenKind::RBrace, "'}'");
      return s;
    }
    if (accept(TokenKind::KwCall)) {
      s.kind = Stmt::Kind::Call;
      s.callee = expect(TokenKind::Ident, "callee name").text;
      expect(TokenKind::LParen, "'('");
      if (!at(TokenKind::RParen)) {
        s.args.push_back(parse_expr());
        while (accept(TokenKind::Comma)) s.args.push_back(parse_expr());
      }
      expect(TokenKind::RParen, "')'");
      expect(TokenKind::Semi, "';'");
      return s;
    }
    if (accept(TokenKind::KwReturn)) {
      s.kind = Stmt::Kind::Return;
      if (!at(TokenKind::Semi)) s.value.push_back(parse_expr());
      expect(TokenKind::Semi, "';'");
      return s;
    }
    if (accept(TokenKind::KwThrow)) {
      s.kind = Stmt::Kind::Throw;
      s.value.push_back(parse_expr());
      expect(TokenKind::Semi, "';'");
      return s;
    }
    if (accept(TokenKind::KwSkip)) {
      s.kind = Stmt::Kind::Skip;
      expect(TokenKind::Semi, "';'");
      return s;
    }
    fail("statement");
  }

  std::int64_t parse_int(const Token& t) const {
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
    if (ec != std::errc()) throw ParseError(t.line, "integer literal in range", t.text);
    return v;
  }

  Expr parse_expr() { return parse_or(); }

  Expr parse_or() {
    Expr lhs = parse_and();
    while (at(TokenKind::OrOr)) {
      int ln = line();
      ++pos_;
      lhs = Expr::binary("||", std::move(lhs), parse_and(), ln);
    }
    return lhs;
  }

  Expr parse_and() {
    Expr lhs = parse_equality();
    while (at(TokenKind::AndAnd)) {
      int ln = line();
      ++pos_;
      lhs = Expr::binary("&&", std::move(lhs), parse_equality(), ln);
    }
    return lhs;
  }

  Expr parse_equality() {
    Expr lhs = parse_relational();
    while (at(TokenKind::EqEq) || at(TokenKind::NotEq)) {
      const Token& t = tokens_[pos_++];
      lhs = Expr::binary(t.text, std::move(lhs), parse_relational(), t.line);
    }
    return lhs;
  }

  Expr parse_relational() {
    Expr lhs = parse_additive();
    while (at(TokenKind::Lt) || at(TokenKind::Le) || at(TokenKind::Gt) || at(TokenKind::Ge)) {
      const Token& t = tokens_[pos_++];
      lhs = Expr::binary(t.text, std::move(lhs), parse_additive(), t.line);
    }
    return lhs;
  }

  Expr parse_additive() {
    Expr lhs = parse_multiplicative();
    while (at(TokenKind::Plus) || at(TokenKind::Minus)) {
      const Token& t = tokens_[pos_++];
      lhs = Expr::binary(t.text, std::move(lhs), parse_multiplicative(), t.line);
    }
    return lhs;
  }

  Expr parse_multiplicative() {
    Expr lhs = parse_unary();
    while (at(TokenKind::Star) || at(TokenKind::Slash) || at(TokenKind::Percent)) {
      const Token& t = tokens_[pos_++];
      lhs = Expr::binary(t.text, std::move(lhs), parse_unary(), t.line);
    }
    return lhs;
  }

  Expr parse_unary() {
    if (at(TokenKind::Bang) || at(TokenKind::Minus)) {
      const Token& t = tokens_[pos_++];
      return Expr::unary(t.text, parse_unary(), t.line);
    }
    return parse_primary();
  }

  Expr parse_primary() {
    const int ln = line();
    if (at(TokenKind::Int)) return Expr::integer(parse_int(tokens_[pos_++]), ln);
    if (accept(TokenKind::KwInput)) {
      expect(TokenKind::LParen, "'('");
      expect(TokenKind::RParen, "')'");
      return Expr::input(ln);
    }
    if (at(TokenKind::Ident)) {
      std::string name = tokens_[pos_++].text;
      if (accept(TokenKind::LBracket)) {
        Expr idx = parse_expr();
        expect(TokenKind::RBracket, "']'");
        return Expr::index(std::move(name), std::move(idx), ln);
      }
      return Expr::var(std::move(name), ln);
    }
    if (accept(TokenKind::LParen)) {
      Expr inner = parse_expr();
      expect(TokenKind::RParen, "')'");
      return inner;
    }
    fail("expression");
  }
};

// Use-before-assignment scan. A name counts as assigned once any earlier
// statement (in text order, or anywhere in an enclosing loop) assigns it.
class AssignmentScan {
public:
  explicit AssignmentScan(Ast& ast) : ast_(ast) {
    assigned_.insert(ast.params.begin(), ast.params.end());
  }

  void run() { scan_block(ast_.body); }

private:
  Ast& ast_;
  std::set<std::string> assigned_;
  std::set<std::string> reported_;

  static void assigned_in(const std::vector<Stmt>& block, std::set<std::string>& out) {
    for (const auto& s : block) {
      if (s.kind == Stmt::Kind::Assign) out.insert(s.target);
      for (const auto& x : s.init) out.insert(x.target);
      for (const auto& x : s.update) out.insert(x.target);
      assigned_in(s.body, out);
      assigned_in(s.else_body, out);
      for (const auto& c : s.cases) assigned_in(c.body, out);
    }
  }

  void check(const Expr& e) {
    std::set<std::string> vars;
    collect_expr_vars(e, vars);
    for (const auto& v : vars) {
      if (!assigned_.count(v) && reported_.insert(v).second)
        ast_.warnings.push_back("line " + std::to_string(e.line) + ": '" + v +
                                "' may be used before assignment");
    }
  }

  void scan_stmt(const Stmt& s) {
    switch (s.kind) {
      case Stmt::Kind::Assign:
        for (const auto& e : s.index) check(e);
        for (const auto& e : s.value) check(e);
        assigned_.insert(s.target);
        break;
      case Stmt::Kind::If:
        check(s.cond.front());
        scan_block(s.body);
        scan_block(s.else_body);
        break;
      case Stmt::Kind::For:
        scan_stmt(s.init.front());
        [[fallthrough]];
      case Stmt::Kind::While: {
        std::set<std::string> loop_defs;
        assigned_in(s.body, loop_defs);
        for (const auto& x : s.update) loop_defs.insert(x.target);
        assigned_.insert(loop_defs.begin(), loop_defs.end());
        check(s.cond.front());
        scan_block(s.body);
        for (const auto& x : s.update) scan_stmt(x);
        break;
      }
      case Stmt::Kind::Switch:
        check(s.cond.front());
        for (const auto& c : s.cases) scan_block(c.body);
        scan_block(s.else_body);
        break;
      case Stmt::Kind::Call:
        for (const auto& e : s.args) check(e);
        break;
      case Stmt::Kind::Return:
      case Stmt::Kind::Throw:
        for (const auto& e : s.value) check(e);
        break;
      case Stmt::Kind::Skip:
        break;
    }
  }

  void scan_block(const std::vector<Stmt>& block) {
    for (const auto& s : block) scan_stmt(s);
  }
};

// ---------------------------------------------------------------------------
// Printer

int precedence(const std::string& op) {
  if (op == "||") return 1;
  if (op == "&&") return 2;
  if (op == "==" || op == "!=") return 3;
  if (op == "<" || op == "<=" || op == ">" || op == ">=") return 4;
  if (op == "+" || op == "-") return 5;
  return 6;  // * / %
}

constexpr int kUnaryPrecedence = 7;

void print_expr(const Expr& e, std::ostream& os, int min_prec) {
  switch (e.kind) {
    case Expr::Kind::Int:
      if (e.value < 0 && min_prec > 0) {
        os << '(' << e.value << ')';
      } else {
        os << e.value;
      }
      return;
    case Expr::Kind::Var:
      os << e.name;
      return;
    case Expr::Kind::Index:
      os << e.name << '[';
      print_expr(e.operands[0], os, 0);
      os << ']';
      return;
    case Expr::Kind::Input:
      os << "input()";
      return;
    case Expr::Kind::Unary: {
      bool paren = kUnaryPrecedence < min_prec;
      if (paren) os << '(';
      os << e.op;
      print_expr(e.operands[0], os, kUnaryPrecedence);
      if (paren) os << ')';
      return;
    }
    case Expr::Kind::Binary: {
      const int p = precedence(e.op);
      bool paren = p < min_prec;
      if (paren) os << '(';
      print_expr(e.operands[0], os, p);
      os << ' ' << e.op << ' ';
      print_expr(e.operands[1], os, p + 1);
      if (paren) os << ')';
      return;
    }
  }
}

void print_simple(const Stmt& s, std::ostream& os) {
  os << s.target;
  if (!s.index.empty()) {
    os << '[';
    print_expr(s.index[0], os, 0);
    os << ']';
  }
  os << " = ";
  print_expr(s.value[0], os, 0);
}

void print_block(const std::vector<Stmt>& block, std::ostream& os, int depth);

void print_stmt(const Stmt& s, std::ostream& os, int depth) {
  const std::string pad(static_cast<std::size_t>(depth) * 2, ' ');
  os << pad;
  switch (s.kind) {
    case Stmt::Kind::Assign:
      print_simple(s, os);
      os << ";\n";
      return;
    case Stmt::Kind::If:
      os << "if (";
      print_expr(s.cond[0], os, 0);
      os << ") ";
      print_block(s.body, os, depth);
      if (s.has_else) {
        os << " else ";
        print_block(s.else_body, os, depth);
      }
      os << '\n';
      return;
    case Stmt::Kind::While:
      os << "while (";
      print_expr(s.cond[0], os, 0);
      os << ") ";
      print_block(s.body, os, depth);
      os << '\n';
      return;
    case Stmt::Kind::For:
      os << "for (";
      print_simple(s.init[0], os);
      os << "; ";
      print_expr(s.cond[0], os, 0);
      os << "; ";
      print_simple(s.update[0], os);
      os << ") ";
      print_block(s.body, os, depth);
      os << '\n';
      return;
    case Stmt::Kind::Switch:
      os << "switch (";
      print_expr(s.cond[0], os, 0);
      os << ") {\n";
      for (const auto& c : s.cases) {
        os << pad << "  case " << c.label << ": ";
        print_block(c.body, os, depth + 1);
        os << '\n';
      }
      if (s.has_else) {
        os << pad << "  default: ";
        print_block(s.else_body, os, depth + 1);
        os << '\n';
      }
      os << pad << "}\n";
      return;
    case Stmt::Kind::Call:
      os << "call " << s.callee << '(';
      for (std::size_t i = 0; i < s.args.size(); ++i) {
        if (i) os << ", ";
        print_expr(s.args[i], os, 0);
      }
      os << ");\n";
      return;
    case Stmt::Kind::Return:
      os << "return";
      if (!s.value.empty()) {
        os << ' ';
        print_expr(s.value[0], os, 0);
      }
      os << ";\n";
      return;
    case Stmt::Kind::Throw:
      os << "throw ";
      print_expr(s.value[0], os, 0);
      os << ";\n";
      return;
    case Stmt::Kind::Skip:
      os << "skip;\n";
      return;
  }
}

void print_block(const std::vector<Stmt>& block, std::ostream& os, int depth) {
  os << "{\n";
  for (const auto& s : block) print_stmt(s, os, depth + 1);
  os << std::string(static_cast<std::size_t>(depth) * 2, ' ') << '}';
}

}  // namespace

Ast parse(const std::vector<Token>& tokens) {
  Parser p(tokens);
  Ast ast = p.parse_method();
  AssignmentScan(ast).run();
  return ast;
}

Ast parse_source(std::string_view source) { return parse(tokenize(source)); }

std::string print_source(const Ast& ast) {
  std::ostringstream os;
  os << "def " << ast.method << '(';
  for (std::size_t i = 0; i < ast.params.size(); ++i) {
    if (i) os << ", ";
    os << ast.params[i];
  }
  os << ") ";
  print_block(ast.body, os, 0);
  os << '\n';
  return os.str();
}

}  // namespace pdgsim
