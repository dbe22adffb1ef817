#include "paw/syntax.hh"

#include <cassert>
#include <cctype>
#include <functional>
#include <map>
#include <sstream>

namespace paw {

Action Action::visible(const std::string& n) {
  if (n.empty() || n == "tau")
    throw std::runtime_error("invalid visible action name '" + n + "'");
  return Action{n};
}

NExprP nil() {
  static NExprP z = std::make_shared<NExpr>(NExpr{NKind::Nil, "", {}, {}, {}, {}});
  return z;
}

NExprP var(const std::string& name) {
  if (name.empty() || !std::isupper(static_cast<unsigned char>(name[0])))
    throw std::runtime_error("variable must start with an uppercase letter: '" + name + "'");
  return std::make_shared<NExpr>(NExpr{NKind::Var, name, {}, {}, {}, {}});
}

NExprP prefix(const Action& a, const PExprP& body) {
  assert(body);
  return std::make_shared<NExpr>(NExpr{NKind::Prefix, "", a, body, {}, {}});
}

NExprP rec(const std::string& binder, const NExprP& body) {
  assert(body);
  if (binder.empty() || !std::isupper(static_cast<unsigned char>(binder[0])))
    throw std::runtime_error("rec binder must start with an uppercase letter");
  return std::make_shared<NExpr>(NExpr{NKind::Rec, binder, {}, {}, body, {}});
}

NExprP choice(const NExprP& l, const NExprP& r) {
  assert(l && r);
  return std::make_shared<NExpr>(NExpr{NKind::Choice, "", {}, {}, l, r});
}

PExprP dirac(const NExprP& e) {
  assert(e);
  return std::make_shared<PExpr>(PExpr{PKind::Dirac, e, Rat(0), {}, {}});
}

PExprP pchoice(const Rat& p, const PExprP& l, const PExprP& r) {
  assert(l && r);
  if (!(p > 0 && p < 1))
    throw std::runtime_error("probabilistic choice weight must lie strictly in (0,1), got " + rat_str(p));
  return std::make_shared<PExpr>(PExpr{PKind::PChoice, {}, p, l, r});
}

NExprP prefix1(const Action& a, const NExprP& e) { return prefix(a, dirac(e)); }

NExprP sum(const std::vector<NExprP>& es) {
  if (es.empty()) return nil();
  NExprP acc = es[0];
  for (size_t i = 1; i < es.size(); ++i) acc = choice(acc, es[i]);
  return acc;
}

PExprP psum(const std::vector<std::pair<Rat, NExprP>>& parts) {
  if (parts.empty()) throw std::runtime_error("psum needs at least one part");
  Rat total = 0;
  for (auto& [w, e] : parts) total += w;
  if (total != 1) throw std::runtime_error("psum weights must sum to 1");
  // right-nested: p1 of first, rest renormalized
  std::function<PExprP(size_t, Rat)> build = [&](size_t i, Rat remaining) -> PExprP {
    if (i + 1 == parts.size()) return dirac(parts[i].second);
    Rat p = parts[i].first / remaining;
    if (p == 1) return dirac(parts[i].second);  // trailing zero-weight parts impossible (weights > 0)
    return pchoice(p, dirac(parts[i].second), build(i + 1, remaining - parts[i].first));
  };
  return build(0, Rat(1));
}

// ---------------------------------------------------------------- lexer

namespace {

enum class Tok { End, Plus, PlusP, Dot, LParen, RParen, Zero, Upper, Lower, Rec, Tau };

struct Token {
  Tok kind;
  std::string text;  // identifier text
  Rat prob;          // PlusP payload
  SourceSpan span;
};

struct Lexer {
  const std::string& src;
  size_t pos = 0;
  explicit Lexer(const std::string& s) : src(s) {}

  void skip_ws() {
    while (pos < src.size()) {
      if (std::isspace(static_cast<unsigned char>(src[pos]))) { ++pos; continue; }
      if (src[pos] == '-' && pos + 1 < src.size() && src[pos + 1] == '-') {
        while (pos < src.size() && src[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
  }

  [[noreturn]] void fail(const std::string& msg, size_t start) {
    throw ParseError(msg, SourceSpan{start, pos});
  }

  static bool ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '\'';
  }

  Token next() {
    skip_ws();
    size_t start = pos;
    if (pos >= src.size()) return {Tok::End, "", Rat(0), {start, start}};
    char c = src[pos];
    if (c == '+') {
      ++pos;
      if (pos < src.size() && src[pos] == '[') {
        ++pos;
        size_t rstart = pos;
        while (pos < src.size() && src[pos] != ']') ++pos;
        if (pos >= src.size()) fail("unterminated probability literal", start);
        std::string body = src.substr(rstart, pos - rstart);
        ++pos;  // ']'
        Rat p;
        try {
          p = rat_parse(body);
        } catch (const std::exception& e) {
          fail(e.what(), start);
        }
        if (!(p > 0 && p < 1))
          fail("probability literal outside (0,1): " + rat_str(p), start);
        return {Tok::PlusP, "", p, {start, pos}};
      }
      return {Tok::Plus, "", Rat(0), {start, pos}};
    }
    if (c == '.') { ++pos; return {Tok::Dot, "", Rat(0), {start, pos}}; }
    if (c == '(') { ++pos; return {Tok::LParen, "", Rat(0), {start, pos}}; }
    if (c == ')') { ++pos; return {Tok::RParen, "", Rat(0), {start, pos}}; }
    if (c == '0' && (pos + 1 >= src.size() || !ident_char(src[pos + 1]))) {
      ++pos;
      return {Tok::Zero, "", Rat(0), {start, pos}};
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      size_t s = pos;
      while (pos < src.size() && ident_char(src[pos])) ++pos;
      std::string id = src.substr(s, pos - s);
      if (id == "rec") return {Tok::Rec, id, Rat(0), {start, pos}};
      if (id == "tau") return {Tok::Tau, id, Rat(0), {start, pos}};
      if (std::isupper(static_cast<unsigned char>(c)))
        return {Tok::Upper, id, Rat(0), {start, pos}};
      return {Tok::Lower, id, Rat(0), {start, pos}};
    }
    ++pos;
    fail(std::string("unexpected character '") + c + "'", start);
  }
};

// Either sort, used while disambiguating parenthesized subexpressions.
struct Parsed {
  NExprP n;
  PExprP p;
};

struct Parser {
  Lexer lex;
  Token tok;
  explicit Parser(const std::string& s) : lex(s) { tok = lex.next(); }

  void advance() { tok = lex.next(); }

  [[noreturn]] void fail(const std::string& msg) { throw ParseError(msg, tok.span); }

  void expect(Tok k, const std::string& what) {
    if (tok.kind != k) fail("expected " + what);
    advance();
  }

  NExprP parse_nexpr() {
    NExprP acc = parse_term();
    while (tok.kind == Tok::Plus) {
      advance();
      acc = choice(acc, parse_term());
    }
    if (tok.kind == Tok::PlusP)
      fail("probabilistic choice between nondeterministic expressions; parenthesize the operands");
    return acc;
  }

  NExprP parse_term() {
    switch (tok.kind) {
      case Tok::Zero: advance(); return nil();
      case Tok::Upper: {
        auto v = var(tok.text);
        advance();
        return v;
      }
      case Tok::Rec: {
        advance();
        if (tok.kind != Tok::Upper) fail("expected recursion variable after 'rec'");
        std::string binder = tok.text;
        advance();
        return rec(binder, parse_nexpr());
      }
      case Tok::Tau:
      case Tok::Lower: {
        Action a = tok.kind == Tok::Tau ? Action::tau() : Action::visible(tok.text);
        advance();
        expect(Tok::Dot, "'.' after action");
        return prefix(a, parse_pexpr());
      }
      case Tok::LParen: {
        advance();
        Parsed inner = parse_paren_body();
        expect(Tok::RParen, "')'");
        if (inner.p) fail("probabilistic expression where a nondeterministic one is expected");
        return inner.n;
      }
      default:
        fail("expected an expression");
    }
  }

  PExprP parse_pexpr() {
    std::vector<PExprP> atoms{parse_patom()};
    std::vector<Rat> ps;
    while (tok.kind == Tok::PlusP) {
      ps.push_back(tok.prob);
      advance();
      atoms.push_back(parse_patom());
    }
    PExprP acc = atoms.back();
    for (size_t i = ps.size(); i-- > 0;) acc = pchoice(ps[i], atoms[i], acc);
    return acc;
  }

  PExprP parse_patom() {
    if (tok.kind == Tok::LParen) {
      advance();
      Parsed inner = parse_paren_body();
      expect(Tok::RParen, "')'");
      return inner.p ? inner.p : dirac(inner.n);
    }
    return dirac(parse_term());
  }

  // Contents of "(...)": a nondeterministic sum or a probabilistic choice,
  // decided by the first separator; mixing the two is rejected.
  Parsed parse_paren_body() {
    Parsed first = parse_operand();
    if (tok.kind == Tok::Plus) {
      if (first.p) fail("probabilistic operand in a nondeterministic sum");
      NExprP acc = first.n;
      while (tok.kind == Tok::Plus) {
        advance();
        acc = choice(acc, parse_term());
      }
      if (tok.kind == Tok::PlusP)
        fail("cannot mix '+' and '+[p]' at one level; parenthesize");
      return {acc, nullptr};
    }
    if (tok.kind == Tok::PlusP) {
      std::vector<PExprP> atoms{first.p ? first.p : dirac(first.n)};
      std::vector<Rat> ps;
      while (tok.kind == Tok::PlusP) {
        ps.push_back(tok.prob);
        advance();
        atoms.push_back(parse_patom());
      }
      if (tok.kind == Tok::Plus)
        fail("cannot mix '+' and '+[p]' at one level; parenthesize");
      PExprP acc = atoms.back();
      for (size_t i = ps.size(); i-- > 0;) acc = pchoice(ps[i], atoms[i], acc);
      return {nullptr, acc};
    }
    return first;
  }

  Parsed parse_operand() {
    if (tok.kind == Tok::LParen) {
      advance();
      Parsed inner = parse_paren_body();
      expect(Tok::RParen, "')'");
      return inner;
    }
    return {parse_term(), nullptr};
  }
};

}  // namespace

NExprP parse(const std::string& text) {
  Parser p(text);
  NExprP e = p.parse_nexpr();
  if (p.tok.kind != Tok::End) p.fail("trailing input");
  return e;
}

// ---------------------------------------------------------------- printing

namespace {

void print_n(std::ostream& os, const NExprP& e, bool scope_closes);
void print_p(std::ostream& os, const PExprP& p, bool parenthesize_always);

// scope_closes: whether everything printed after this subterm is outside it,
// i.e. a trailing-scope construct (rec, or a prefix whose body could extend)
// may be printed bare.
void print_summand(std::ostream& os, const NExprP& e, bool scope_closes) {
  switch (e->kind) {
    case NKind::Nil: os << "0"; return;
    case NKind::Var: os << e->name; return;
    case NKind::Prefix:
      os << e->act.str() << ".";
      print_p(os, e->parg, false);
      return;
    case NKind::Rec:
      if (!scope_closes) {
        os << "(";
        print_n(os, e, true);
        os << ")";
      } else {
        print_n(os, e, true);
      }
      return;
    case NKind::Choice:
      os << "(";
      print_n(os, e, true);
      os << ")";
      return;
  }
}

void print_n(std::ostream& os, const NExprP& e, bool scope_closes) {
  if (e->kind == NKind::Rec) {
    os << "rec " << e->name << " ";
    print_n(os, e->left, true);
    return;
  }
  if (e->kind == NKind::Choice) {
    // flatten the left spine; only the final summand may hold an open scope
    std::vector<NExprP> parts;
    NExprP cur = e;
    while (cur->kind == NKind::Choice) {
      parts.push_back(cur->right);
      cur = cur->left;
    }
    parts.push_back(cur);
    for (size_t i = parts.size(); i-- > 0;) {
      print_summand(os, parts[i], scope_closes && i == 0);
      if (i > 0) os << " + ";
    }
    return;
  }
  print_summand(os, e, scope_closes);
}

// A Dirac inner expression printable bare as a probabilistic atom.
void print_dirac_inner(std::ostream& os, const NExprP& e, bool is_last_atom) {
  bool needs_paren = e->kind == NKind::Choice || e->kind == NKind::Rec ||
                     (e->kind == NKind::Prefix && !is_last_atom);
  if (needs_paren) {
    os << "(";
    print_n(os, e, true);
    os << ")";
  } else {
    print_n(os, e, is_last_atom);
  }
}

void print_p(std::ostream& os, const PExprP& p, bool parenthesize_always) {
  if (p->kind == PKind::Dirac) {
    print_dirac_inner(os, p->inner, !parenthesize_always);
    return;
  }
  // right spine flattening; printed inside parens when used as a prefix body
  os << "(";
  PExprP cur = p;
  while (cur->kind == PKind::PChoice) {
    const PExprP& l = cur->left;
    if (l->kind == PKind::PChoice) {
      os << "(";
      print_p(os, l, true);
      os << ")";
    } else {
      print_dirac_inner(os, l->inner, false);
    }
    os << " +[" << rat_str(cur->p) << "] ";
    cur = cur->right;
  }
  if (cur->kind == PKind::Dirac)
    print_dirac_inner(os, cur->inner, false);
  os << ")";
}

}  // namespace

std::string pretty(const NExprP& e) {
  std::ostringstream os;
  print_n(os, e, true);
  return os.str();
}

std::string pretty(const PExprP& p) {
  std::ostringstream os;
  print_p(os, p, true);
  return os.str();
}

// ------------------------------------------------------- variables & subst

namespace {
void fv_n(const NExprP& e, std::set<std::string>& bound, std::set<std::string>& out);
void fv_p(const PExprP& p, std::set<std::string>& bound, std::set<std::string>& out) {
  if (p->kind == PKind::Dirac) {
    fv_n(p->inner, bound, out);
  } else {
    fv_p(p->left, bound, out);
    fv_p(p->right, bound, out);
  }
}
void fv_n(const NExprP& e, std::set<std::string>& bound, std::set<std::string>& out) {
  switch (e->kind) {
    case NKind::Nil: return;
    case NKind::Var:
      if (!bound.count(e->name)) out.insert(e->name);
      return;
    case NKind::Prefix: fv_p(e->parg, bound, out); return;
    case NKind::Choice:
      fv_n(e->left, bound, out);
      fv_n(e->right, bound, out);
      return;
    case NKind::Rec: {
      bool fresh = bound.insert(e->name).second;
      fv_n(e->left, bound, out);
      if (fresh) bound.erase(e->name);
      return;
    }
  }
}

void all_idents(const NExprP& e, std::set<std::string>& out);
void all_idents(const PExprP& p, std::set<std::string>& out) {
  if (p->kind == PKind::Dirac) all_idents(p->inner, out);
  else { all_idents(p->left, out); all_idents(p->right, out); }
}
void all_idents(const NExprP& e, std::set<std::string>& out) {
  switch (e->kind) {
    case NKind::Nil: return;
    case NKind::Var: out.insert(e->name); return;
    case NKind::Prefix: all_idents(e->parg, out); return;
    case NKind::Choice: all_idents(e->left, out); all_idents(e->right, out); return;
    case NKind::Rec: out.insert(e->name); all_idents(e->left, out); return;
  }
}
}  // namespace

std::set<std::string> free_vars(const NExprP& e) {
  std::set<std::string> bound, out;
  fv_n(e, bound, out);
  return out;
}

std::set<std::string> free_vars(const PExprP& p) {
  std::set<std::string> bound, out;
  fv_p(p, bound, out);
  return out;
}

std::string fresh_var(const std::string& base, const std::vector<NExprP>& ctx,
                      const std::set<std::string>& avoid) {
  std::set<std::string> used = avoid;
  for (auto& e : ctx) all_idents(e, used);
  std::string cand = base;
  while (used.count(cand)) cand += "'";
  return cand;
}

namespace {
using Map = std::map<std::string, NExprP>;

NExprP subst_n(const NExprP& e, const Map& m);
PExprP subst_p(const PExprP& p, const Map& m) {
  if (p->kind == PKind::Dirac) {
    NExprP i = subst_n(p->inner, m);
    return i == p->inner ? p : dirac(i);
  }
  PExprP l = subst_p(p->left, m), r = subst_p(p->right, m);
  return (l == p->left && r == p->right) ? p : pchoice(p->p, l, r);
}

NExprP subst_n(const NExprP& e, const Map& m) {
  switch (e->kind) {
    case NKind::Nil: return e;
    case NKind::Var: {
      auto it = m.find(e->name);
      return it == m.end() ? e : it->second;
    }
    case NKind::Prefix: {
      PExprP b = subst_p(e->parg, m);
      return b == e->parg ? e : prefix(e->act, b);
    }
    case NKind::Choice: {
      NExprP l = subst_n(e->left, m), r = subst_n(e->right, m);
      return (l == e->left && r == e->right) ? e : choice(l, r);
    }
    case NKind::Rec: {
      auto body_free = free_vars(e->left);
      Map relevant;
      std::vector<NExprP> repl_ctx;
      for (auto& [v, r] : m)
        if (v != e->name && body_free.count(v)) {
          relevant.emplace(v, r);
          repl_ctx.push_back(r);
        }
      if (relevant.empty()) return e;
      bool capture = false;
      for (auto& r : repl_ctx)
        if (free_vars(r).count(e->name)) { capture = true; break; }
      if (!capture) {
        NExprP b = subst_n(e->left, relevant);
        return b == e->left ? e : rec(e->name, b);
      }
      repl_ctx.push_back(e->left);
      std::set<std::string> avoid;
      for (auto& [v, r] : relevant) avoid.insert(v);
      std::string nb = fresh_var(e->name, repl_ctx, avoid);
      Map rename{{e->name, var(nb)}};
      NExprP renamed = subst_n(e->left, rename);
      return rec(nb, subst_n(renamed, relevant));
    }
  }
  return e;  // unreachable
}
}  // namespace

NExprP substitute(const NExprP& e, const Bindings& bs) {
  Map m;
  for (auto& [v, r] : bs)
    if (!m.emplace(v, r).second)
      throw std::runtime_error("duplicate binding for '" + v + "'");
  if (m.empty()) return e;
  return subst_n(e, m);
}

PExprP substitute(const PExprP& p, const Bindings& bs) {
  Map m;
  for (auto& [v, r] : bs)
    if (!m.emplace(v, r).second)
      throw std::runtime_error("duplicate binding for '" + v + "'");
  if (m.empty()) return p;
  return subst_p(p, m);
}

// ------------------------------------------------------------- alpha ops

namespace {
struct Env {
  std::vector<std::pair<std::string, std::string>> pairs;  // (left binder, right binder)

  // -1 if free on both sides with equal name, -2 mismatch, else shared depth
  int lookup(const std::string& a, const std::string& b) const {
    for (size_t i = pairs.size(); i-- > 0;) {
      bool la = pairs[i].first == a, rb = pairs[i].second == b;
      if (la != rb) return -2;
      if (la && rb) return static_cast<int>(i);
    }
    return a == b ? -1 : -2;
  }
};

bool aeq_n(const NExprP& a, const NExprP& b, Env& env);
bool aeq_p(const PExprP& a, const PExprP& b, Env& env) {
  if (a == b && env.pairs.empty()) return true;
  if (a->kind != b->kind) return false;
  if (a->kind == PKind::Dirac) return aeq_n(a->inner, b->inner, env);
  return a->p == b->p && aeq_p(a->left, b->left, env) && aeq_p(a->right, b->right, env);
}
bool aeq_n(const NExprP& a, const NExprP& b, Env& env) {
  if (a == b && env.pairs.empty()) return true;
  if (a->kind != b->kind) return false;
  switch (a->kind) {
    case NKind::Nil: return true;
    case NKind::Var: return env.lookup(a->name, b->name) != -2;
    case NKind::Prefix: return a->act == b->act && aeq_p(a->parg, b->parg, env);
    case NKind::Choice:
      return aeq_n(a->left, b->left, env) && aeq_n(a->right, b->right, env);
    case NKind::Rec: {
      env.pairs.emplace_back(a->name, b->name);
      bool ok = aeq_n(a->left, b->left, env);
      env.pairs.pop_back();
      return ok;
    }
  }
  return false;
}

void mix(size_t& h, size_t v) { h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2); }

void ah_n(const NExprP& e, std::vector<std::string>& binders, size_t& h);
void ah_p(const PExprP& p, std::vector<std::string>& binders, size_t& h) {
  if (p->kind == PKind::Dirac) {
    mix(h, 11);
    ah_n(p->inner, binders, h);
  } else {
    mix(h, 13);
    mix(h, std::hash<std::string>{}(rat_str(p->p)));
    ah_p(p->left, binders, h);
    ah_p(p->right, binders, h);
  }
}
void ah_n(const NExprP& e, std::vector<std::string>& binders, size_t& h) {
  switch (e->kind) {
    case NKind::Nil: mix(h, 1); return;
    case NKind::Var: {
      mix(h, 2);
      for (size_t i = binders.size(); i-- > 0;)
        if (binders[i] == e->name) {
          mix(h, 1000 + (binders.size() - i));
          return;
        }
      mix(h, std::hash<std::string>{}(e->name));
      return;
    }
    case NKind::Prefix:
      mix(h, 3);
      mix(h, std::hash<std::string>{}(e->act.name));
      ah_p(e->parg, binders, h);
      return;
    case NKind::Choice:
      mix(h, 5);
      ah_n(e->left, binders, h);
      ah_n(e->right, binders, h);
      return;
    case NKind::Rec:
      mix(h, 7);
      binders.push_back(e->name);
      ah_n(e->left, binders, h);
      binders.pop_back();
      return;
  }
}
}  // namespace

bool alpha_eq(const NExprP& a, const NExprP& b) {
  Env env;
  return aeq_n(a, b, env);
}
bool alpha_eq(const PExprP& a, const PExprP& b) {
  Env env;
  return aeq_p(a, b, env);
}

size_t alpha_hash(const NExprP& e) {
  size_t h = 0;
  std::vector<std::string> binders;
  ah_n(e, binders, h);
  return h;
}

namespace {
void ak_n(const NExprP& e, std::vector<std::string>& binders, std::string& out);
void ak_p(const PExprP& p, std::vector<std::string>& binders, std::string& out) {
  if (p->kind == PKind::Dirac) {
    out += "<";
    ak_n(p->inner, binders, out);
    out += ">";
  } else {
    out += "(" + rat_str(p->p) + " ";
    ak_p(p->left, binders, out);
    out += " ";
    ak_p(p->right, binders, out);
    out += ")";
  }
}
void ak_n(const NExprP& e, std::vector<std::string>& binders, std::string& out) {
  switch (e->kind) {
    case NKind::Nil: out += "0"; return;
    case NKind::Var:
      for (size_t i = binders.size(); i-- > 0;)
        if (binders[i] == e->name) {
          out += "#" + std::to_string(binders.size() - i);
          return;
        }
      out += e->name;
      return;
    case NKind::Prefix:
      out += e->act.str() + ".";
      ak_p(e->parg, binders, out);
      return;
    case NKind::Choice:
      out += "(+ ";
      ak_n(e->left, binders, out);
      out += " ";
      ak_n(e->right, binders, out);
      out += ")";
      return;
    case NKind::Rec:
      out += "(r ";
      binders.push_back(e->name);
      ak_n(e->left, binders, out);
      binders.pop_back();
      out += ")";
      return;
  }
}
}  // namespace

std::string alpha_key(const NExprP& e) {
  std::string out;
  std::vector<std::string> binders;
  ak_n(e, binders, out);
  return out;
}

// ----------------------------------------------------------------- paths

namespace {
std::optional<Subterm> sub_at(Subterm cur, const Path& path, size_t i) {
  if (i == path.size()) return cur;
  int c = path[i];
  if (cur.n) {
    const NExpr& e = *cur.n;
    switch (e.kind) {
      case NKind::Prefix:
        if (c == 0) return sub_at({nullptr, e.parg}, path, i + 1);
        return std::nullopt;
      case NKind::Rec:
        if (c == 0) return sub_at({e.left, nullptr}, path, i + 1);
        return std::nullopt;
      case NKind::Choice:
        if (c == 0) return sub_at({e.left, nullptr}, path, i + 1);
        if (c == 1) return sub_at({e.right, nullptr}, path, i + 1);
        return std::nullopt;
      default:
        return std::nullopt;
    }
  }
  const PExpr& p = *cur.p;
  if (p.kind == PKind::Dirac) {
    if (c == 0) return sub_at({p.inner, nullptr}, path, i + 1);
    return std::nullopt;
  }
  if (c == 0) return sub_at({nullptr, p.left}, path, i + 1);
  if (c == 1) return sub_at({nullptr, p.right}, path, i + 1);
  return std::nullopt;
}

Subterm repl_at(Subterm cur, const Path& path, size_t i, const Subterm& repl) {
  if (i == path.size()) {
    if ((cur.n != nullptr) != (repl.n != nullptr))
      throw std::runtime_error("replacement sort mismatch at " + path_str(path));
    return repl;
  }
  int c = path[i];
  auto bad = [&]() -> Subterm {
    throw std::runtime_error("invalid path " + path_str(path));
  };
  if (cur.n) {
    const NExpr& e = *cur.n;
    switch (e.kind) {
      case NKind::Prefix: {
        if (c != 0) return bad();
        Subterm s = repl_at({nullptr, e.parg}, path, i + 1, repl);
        return {prefix(e.act, s.p), nullptr};
      }
      case NKind::Rec: {
        if (c != 0) return bad();
        Subterm s = repl_at({e.left, nullptr}, path, i + 1, repl);
        return {rec(e.name, s.n), nullptr};
      }
      case NKind::Choice: {
        if (c == 0) {
          Subterm s = repl_at({e.left, nullptr}, path, i + 1, repl);
          return {choice(s.n, e.right), nullptr};
        }
        if (c == 1) {
          Subterm s = repl_at({e.right, nullptr}, path, i + 1, repl);
          return {choice(e.left, s.n), nullptr};
        }
        return bad();
      }
      default:
        return bad();
    }
  }
  const PExpr& p = *cur.p;
  if (p.kind == PKind::Dirac) {
    if (c != 0) return bad();
    Subterm s = repl_at({p.inner, nullptr}, path, i + 1, repl);
    return {nullptr, dirac(s.n)};
  }
  if (c == 0) {
    Subterm s = repl_at({nullptr, p.left}, path, i + 1, repl);
    return {nullptr, pchoice(p.p, s.p, p.right)};
  }
  if (c == 1) {
    Subterm s = repl_at({nullptr, p.right}, path, i + 1, repl);
    return {nullptr, pchoice(p.p, p.left, s.p)};
  }
  return bad();
}
}  // namespace

std::optional<Subterm> subterm_at(const NExprP& root, const Path& path) {
  return sub_at({root, nullptr}, path, 0);
}

NExprP replace_at(const NExprP& root, const Path& path, const Subterm& repl) {
  return repl_at({root, nullptr}, path, 0, repl).n;
}

std::string path_str(const Path& p) {
  std::string s = "[";
  for (size_t i = 0; i < p.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(p[i]);
  }
  return s + "]";
}

}  // namespace paw
