#pragma once

// Frontend for the mini-language: lexer, recursive-descent parser, and
// lowering into a statement-typed IR with an explicit control flow graph.

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace pdgsim {

enum class TokenKind {
  Ident,
  Int,
  KwDef,
  KwIf,
  KwElse,
  KwWhile,
  KwFor,
  KwSwitch,
  KwCase,
  KwDefault,
  KwCall,
  KwReturn,
  KwThrow,
  KwSkip,
  KwInput,
  LParen,
  RParen,
  LBrace,
  RBrace,
  LBracket,
  RBracket,
  Semi,
  Comma,
  Colon,
  Eq,
  Plus,
  Minus,
  Star,
  Slash,
  Percent,
  Lt,
  Le,
  Gt,
  Ge,
  EqEq,
  NotEq,
  AndAnd,
  OrOr,
  Bang,
};

std::string_view token_kind_name(TokenKind kind);

struct Token {
  TokenKind kind;
  std::string text;
  int line = 1;

  bool operator==(const Token&) const = default;
};

std::vector<Token> tokenize(std::string_view source);

// ---------------------------------------------------------------------------
// AST

struct Expr {
  enum class Kind { Int, Var, Index, Binary, Unary, Input };

  Kind kind = Kind::Int;
  std::int64_t value = 0;  // Int
  std::string name;        // Var, Index (array name)
  std::string op;          // Binary, Unary
  std::vector<Expr> operands;
  int line = 1;

  static Expr integer(std::int64_t v, int line = 1);
  static Expr var(std::string n, int line = 1);
  static Expr index(std::string array, Expr idx, int line = 1);
  static Expr binary(std::string op, Expr lhs, Expr rhs, int line = 1);
  static Expr unary(std::string op, Expr operand, int line = 1);
  static Expr input(int line = 1);

  // Structural equality; source lines are ignored.
  bool operator==(const Expr&) const;
};

struct SwitchCase;

struct Stmt {
  enum class Kind { Assign, If, While, For, Switch, Call, Return, Throw, Skip };

  Kind kind = Kind::Skip;
  int line = 1;

  // Assign: target[index] = value. For `return e` and `throw e` the
  // operand lives in `value`; `cond` holds if/while/for conditions and the
  // switch scrutinee.
  std::string target;
  std::vector<Expr> index;  // empty or exactly one element
  std::vector<Expr> value;  // empty or exactly one element
  std::vector<Expr> cond;   // empty or exactly one element

  std::vector<Stmt> body;       // then-branch / loop body
  std::vector<Stmt> else_body;  // else-branch / switch default
  bool has_else = false;        // also "has default" for switch

  std::vector<Stmt> init;    // for-init, exactly one Assign
  std::vector<Stmt> update;  // for-update, exactly one Assign

  std::vector<SwitchCase> cases;

  std::string callee;
  std::vector<Expr> args;

  // Structural equality; source lines are ignored.
  bool operator==(const Stmt&) const;
};

struct SwitchCase {
  std::int64_t label = 0;
  std::vector<Stmt> body;

  bool operator==(const SwitchCase&) const = default;
};

struct Ast {
  std::string method;
  std::vector<std::string> params;
  std::vector<Stmt> body;
  // Identifiers read before any assignment on some path. Not an error.
  std::vector<std::string> warnings;

  bool operator==(const Ast& other) const {
    return method == other.method && params == other.params && body == other.body;
  }
};

Ast parse(const std::vector<Token>& tokens);
Ast parse_source(std::string_view source);

// Canonical pretty-printer; `parse_source(print_source(a)) == a` modulo lines.
std::string print_source(const Ast& ast);

// Variables read by an expression (array names included for Index).
void collect_expr_vars(const Expr& e, std::set<std::string>& out);
bool expr_has_input(const Expr& e);

// ---------------------------------------------------------------------------
// IR

inline constexpr int kStatementKindCount = 18;

enum class StatementKind : std::uint8_t {
  Identity = 0,
  Assignment = 1,
  Abstract = 2,
  AbstractDefinition = 3,
  Breakpoint = 4,
  EnterMonitor = 5,
  ExitMonitor = 6,
  Goto = 7,
  If = 8,
  Invoke = 9,
  LookupSwitch = 10,
  Nop = 11,
  Return = 12,
  ReturnVoid = 13,
  Throw = 14,
  TableSwitch = 15,
  Reserved16 = 16,
  Reserved17 = 17,
};

std::string_view statement_kind_name(StatementKind kind);
std::optional<StatementKind> statement_kind_from_name(std::string_view name);
inline int kind_index(StatementKind k) { return static_cast<int>(k); }

struct IrStatement {
  int id = 0;
  StatementKind kind = StatementKind::Nop;
  std::set<std::string> defs;
  std::set<std::string> uses;
  int line = 0;

  bool operator==(const IrStatement&) const = default;
};

// Statements are dense 0..n-1; id n is the virtual exit, which has no entry in
// `statements` or `succ`.
struct IrMethod {
  std::string name;
  std::vector<IrStatement> statements;
  std::vector<std::vector<int>> succ;
  int entry = 0;
  int exit = 0;

  int size() const { return static_cast<int>(statements.size()); }
  bool operator==(const IrMethod&) const = default;
};

IrMethod lower_to_ir(const Ast& ast);

// Convenience: tokenize + parse + lower.
IrMethod lower_source(std::string_view source);

// Throws LowerError when ids are not dense, successor counts are wrong for the
// statement kind, a statement is unreachable from entry, or exit is
// unreachable from some statement.
void validate_ir(const IrMethod& ir);

// Debug text format, one statement per line:
//   <id> <KIND> defs=[a,b] uses=[c] succ=[1,2] line=3
// `line=` is optional on input.
std::string format_ir(const IrMethod& ir);
IrMethod parse_ir(std::string_view text);

}  // namespace pdgsim
