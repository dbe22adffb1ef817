// Two-sorted abstract syntax: nondeterministic expressions (0, variables,
// prefixes, recursion, choice) and probabilistic expressions (Dirac points
// and binary probabilistic choice with 0 < p < 1), plus parsing, printing,
// capture-avoiding substitution and alpha-equivalence.
#pragma once

#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "paw/rational.hh"

namespace paw {

struct Action {
  std::string name;  // empty = tau

  bool is_tau() const { return name.empty(); }
  static Action tau() { return Action{}; }
  static Action visible(const std::string& n);
  std::string str() const { return is_tau() ? "tau" : name; }

  bool operator==(const Action& o) const { return name == o.name; }
  auto operator<=>(const Action& o) const { return name <=> o.name; }
};

struct NExpr;
struct PExpr;
using NExprP = std::shared_ptr<const NExpr>;
using PExprP = std::shared_ptr<const PExpr>;

enum class NKind { Nil, Var, Prefix, Rec, Choice };
enum class PKind { Dirac, PChoice };

struct NExpr {
  NKind kind;
  std::string name;    // Var name / Rec binder
  Action act;          // Prefix
  PExprP parg;         // Prefix body
  NExprP left, right;  // Choice children; Rec body in left
};

struct PExpr {
  PKind kind;
  NExprP inner;        // Dirac
  Rat p;               // PChoice weight of left branch
  PExprP left, right;  // PChoice children
};

// Constructors (the only way nodes should be built).
NExprP nil();
NExprP var(const std::string& name);
NExprP prefix(const Action& a, const PExprP& body);
NExprP rec(const std::string& binder, const NExprP& body);
NExprP choice(const NExprP& l, const NExprP& r);
PExprP dirac(const NExprP& e);
PExprP pchoice(const Rat& p, const PExprP& l, const PExprP& r);

// Sugar: alpha.<E> and left-associated sums / right-associated pchoices.
NExprP prefix1(const Action& a, const NExprP& e);
NExprP sum(const std::vector<NExprP>& es);  // empty -> 0, left-assoc
PExprP psum(const std::vector<std::pair<Rat, NExprP>>& parts);  // weights sum to 1

struct SourceSpan {
  size_t start = 0, end = 0;  // byte offsets, start <= end
};

struct ParseError : std::runtime_error {
  SourceSpan span;
  ParseError(const std::string& msg, SourceSpan sp)
      : std::runtime_error(msg), span(sp) {}
};

NExprP parse(const std::string& text);

std::string pretty(const NExprP& e);
std::string pretty(const PExprP& p);

std::set<std::string> free_vars(const NExprP& e);
std::set<std::string> free_vars(const PExprP& p);

using Bindings = std::vector<std::pair<std::string, NExprP>>;
NExprP substitute(const NExprP& e, const Bindings& bs);
PExprP substitute(const PExprP& p, const Bindings& bs);

bool alpha_eq(const NExprP& a, const NExprP& b);
bool alpha_eq(const PExprP& a, const PExprP& b);
size_t alpha_hash(const NExprP& e);

// Canonical alpha-invariant encoding: equal strings iff alpha-equal terms.
// Used as a deterministic map key for state spaces and memo tables.
std::string alpha_key(const NExprP& e);

// Key wrapper so expressions can be used in hash maps modulo alpha.
struct ExprKey {
  NExprP e;
  bool operator==(const ExprKey& o) const { return alpha_eq(e, o.e); }
};
struct ExprKeyHash {
  size_t operator()(const ExprKey& k) const { return alpha_hash(k.e); }
};

// Paths address subterms across both sorts by child index:
// Choice/PChoice: 0 left, 1 right; Prefix: 0 its PExpr; Rec: 0 body;
// Dirac: 0 inner expression.
using Path = std::vector<int>;

struct Subterm {  // exactly one of n/p is set
  NExprP n;
  PExprP p;
};
std::optional<Subterm> subterm_at(const NExprP& root, const Path& path);
// Replaces the subterm at path; the replacement must be of the same sort.
NExprP replace_at(const NExprP& root, const Path& path, const Subterm& repl);

std::string path_str(const Path& p);

// Fresh variable not free in any of the given expressions and distinct from
// the avoided names; derived from base by appending primes.
std::string fresh_var(const std::string& base, const std::vector<NExprP>& ctx,
                      const std::set<std::string>& avoid = {});

}  // namespace paw
