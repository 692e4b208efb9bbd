#include <cctype>
#include <unordered_map>

#include "pdgsim/errors.hpp"
#include "pdgsim/frontend.hpp"

namespace pdgsim {

std::string_view token_kind_name(TokenKind kind) {
  switch (kind) {
    case TokenKind::Ident: return "identifier";
    case TokenKind::Int: return "integer";
    case TokenKind::KwDef: return "'def'";
    case TokenKind::KwIf: return "'if'";
    case TokenKind::KwElse: return "'else'";
    case TokenKind::KwWhile: return "'while'";
    case TokenKind::KwFor: return "'for'";
    case TokenKind::KwSwitch: return "'switch'";
    case TokenKind::KwCase: return "'case'";
    case TokenKind::KwDefault: return "'default'";
    case TokenKind::KwCall: return "'call'";
    case TokenKind::KwReturn: return "'return'";
    case TokenKind::KwThrow: return "'throw'";
    case TokenKind::KwSkip: return "'skip'";
    case TokenKind::KwInput: return "'input'";
    case TokenKind::LParen: return "'('";
    case TokenKind::RParen: return "')'";
    case TokenKind::LBrace: return "'{'";
    case TokenKind::RBrace: return "'}'";
    case TokenKind::LBracket: return "'['";
    case TokenKind::RBracket: return "']'";
    case TokenKind::Semi: return "';'";
    case TokenKind::Comma: return "','";
    case TokenKind::Colon: return "':'";
    case TokenKind::Eq: return "'='";
    case TokenKind::Plus: return "'+'";
    case TokenKind::Minus: return "'-'";
    case TokenKind::Star: return "'*'";
    case TokenKind::Slash: return "'/'";
    case TokenKind::Percent: return "'%'";
    case TokenKind::Lt: return "'<'";
    case TokenKind::Le: return "'<='";
    case TokenKind::Gt: return "'>'";
    case TokenKind::Ge: return "'>='";
    case TokenKind::EqEq: return "'=='";
    case TokenKind::NotEq: return "'!='";
    case TokenKind::AndAnd: return "'&&'";
    case TokenKind::OrOr: return "'||'";
    case TokenKind::Bang: return "'!'";
  }
  return "?";
}

namespace {

const std::unordered_map<std::string_view, TokenKind>& keywords() {
  static const std::unordered_map<std::string_view, TokenKind> table = {
      {"def", TokenKind::KwDef},       {"if", TokenKind::KwIf},
      {"else", TokenKind::KwElse},     {"while", TokenKind::KwWhile},
      {"for", TokenKind::KwFor},       {"switch", TokenKind::KwSwitch},
      {"case", TokenKind::KwCase},     {"default", TokenKind::KwDefault},
      {"call", TokenKind::KwCall},     {"return", TokenKind::KwReturn},
      {"throw", TokenKind::KwThrow},   {"skip", TokenKind::KwSkip},
      {"input", TokenKind::KwInput},
  };
  return table;
}

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }
bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

}  // namespace

std::vector<Token> tokenize(std::string_view source) {
  std::vector<Token> tokens;
  int line = 1;
  std::size_t i = 0;
  const std::size_t n = source.size();

  auto emit = [&](TokenKind kind, std::size_t len) {
    tokens.push_back(Token{kind, std::string(source.substr(i, len)), line});
    i += len;
  };

  while (i < n) {
    const char c = source[i];
    if (c == '\n') {
      ++line;
      ++i;
      continue;
    }
    if (c == ' ' || c == '\t' || c == '\r') {
      ++i;
      continue;
    }
    if (c == '/' && i + 1 < n && source[i + 1] == '/') {
      while (i < n && source[i] != '\n') ++i;
      continue;
    }
    if (is_ident_start(c)) {
      std::size_t j = i;
      while (j < n && is_ident_char(source[j])) ++j;
      auto word = source.substr(i, j - i);
      auto kw = keywords().find(word);
      emit(kw == keywords().end() ? TokenKind::Ident : kw->second, j - i);
      continue;
    }
    if (is_digit(c)) {
      std::size_t j = i;
      while (j < n && is_digit(source[j])) ++j;
      if (j < n && is_ident_start(source[j]))
        throw LexError(line, "malformed integer literal");
      emit(TokenKind::Int, j - i);
      continue;
    }
    const char next = i + 1 < n ? source[i + 1] : '\0';
    switch (c) {
      case '(': emit(TokenKind::LParen, 1); continue;
      case ')': emit(TokenKind::RParen, 1); continue;
      case '{': emit(TokenKind::LBrace, 1); continue;
      case '}': emit(TokenKind::RBrace, 1); continue;
      case '[': emit(TokenKind::LBracket, 1); continue;
      case ']': emit(TokenKind::RBracket, 1); continue;
      case ';': emit(TokenKind::Semi, 1); continue;
      case ',': emit(TokenKind::Comma, 1); continue;
      case ':': emit(TokenKind::Colon, 1); continue;
      case '+': emit(TokenKind::Plus, 1); continue;
      case '-': emit(TokenKind::Minus, 1); continue;
      case '*': emit(TokenKind::Star, 1); continue;
      case '/': emit(TokenKind::Slash, 1); continue;
      case '%': emit(TokenKind::Percent, 1); continue;
      case '=':
        if (next == '=') emit(TokenKind::EqEq, 2);
        else emit(TokenKind::Eq, 1);
        continue;
      case '<':
        if (next == '=') emit(TokenKind::Le, 2);
        else emit(TokenKind::Lt, 1);
        continue;
      case '>':
        if (next == '=') emit(TokenKind::Ge, 2);
        else emit(TokenKind::Gt, 1);
        continue;
      case '!':
        if (next == '=') emit(TokenKind::NotEq, 2);
        else emit(TokenKind::Bang, 1);
        continue;
      case '&':
        if (next == '&') {
          emit(TokenKind::AndAnd, 2);
          continue;
        }
        break;
      case '|':
        if (next == '|') {
          emit(TokenKind::OrOr, 2);
          continue;
        }
        break;
      default:
        break;
    }
    throw LexError(line, std::string("unexpected character '") + c + "'");
  }
  return tokens;
}

}  // namespace pdgsim
