#include "doctest.h"

#include <random>

#include "paw/syntax.hh"

using namespace paw;

TEST_CASE("parse basics") {
  NExprP e = parse("rec X tau.X");
  REQUIRE(e->kind == NKind::Rec);
  CHECK(e->name == "X");
  CHECK(e->left->kind == NKind::Prefix);
  CHECK(e->left->act.is_tau());
  CHECK(e->left->parg->kind == PKind::Dirac);
  CHECK(e->left->parg->inner->kind == NKind::Var);

  NExprP f = parse("tau.(X +[1/3] (Y + a.0))");
  REQUIRE(f->kind == NKind::Prefix);
  CHECK(f->act.is_tau());
  REQUIRE(f->parg->kind == PKind::PChoice);
  CHECK(f->parg->p == Rat(1, 3));
  CHECK(f->parg->left->inner->name == "X");
  REQUIRE(f->parg->right->kind == PKind::Dirac);
  const NExprP& rhs = f->parg->right->inner;
  REQUIRE(rhs->kind == NKind::Choice);
  CHECK(rhs->left->name == "Y");
  CHECK(rhs->right->kind == NKind::Prefix);
  CHECK(rhs->right->act.name == "a");
  CHECK(rhs->right->parg->inner->kind == NKind::Nil);
}

TEST_CASE("parse rejects bare actions as pchoice operands") {
  CHECK_THROWS_AS(parse("a +[1/2] b"), ParseError);
}

TEST_CASE("parse rejects out-of-range probabilities") {
  CHECK_THROWS_AS(parse("tau.(0 +[1] 0)"), ParseError);
  CHECK_THROWS_AS(parse("tau.(0 +[0] 0)"), ParseError);
  CHECK_THROWS_AS(parse("tau.(0 +[3/2] 0)"), ParseError);
}

TEST_CASE("parse rejects mixed sum kinds and reserved-word misuse") {
  CHECK_THROWS_AS(parse("tau.(X + Y +[1/2] Z)"), ParseError);
  CHECK_THROWS_AS(parse("rec tau X"), ParseError);
  CHECK_THROWS_AS(parse("a.0 +"), ParseError);
  CHECK_THROWS_AS(parse(""), ParseError);
}

TEST_CASE("rec scope extends to end") {
  // rec binds to end of scope: everything after the binder is in the body
  NExprP e = parse("rec X a.X + b.0");
  REQUIRE(e->kind == NKind::Rec);
  CHECK(e->left->kind == NKind::Choice);
  NExprP f = parse("(rec X a.X) + b.0");
  CHECK(f->kind == NKind::Choice);
}

TEST_CASE("sum is left-associative, pchoice right-associative") {
  NExprP e = parse("a.0 + b.0 + c.0");
  REQUIRE(e->kind == NKind::Choice);
  CHECK(e->left->kind == NKind::Choice);
  CHECK(e->right->act.name == "c");

  NExprP f = parse("tau.(0 +[1/2] X +[1/3] Y)");
  REQUIRE(f->parg->kind == PKind::PChoice);
  CHECK(f->parg->p == Rat(1, 2));
  REQUIRE(f->parg->right->kind == PKind::PChoice);
  CHECK(f->parg->right->p == Rat(1, 3));
}

TEST_CASE("pretty fixed points") {
  CHECK(pretty(nil()) == "0");
  CHECK(pretty(rec("X", prefix1(Action::tau(), var("X")))) == "rec X tau.X");
  CHECK(pretty(prefix(Action::visible("a"),
                      pchoice(Rat(1, 2), dirac(nil()), dirac(nil())))) ==
        "a.(0 +[1/2] 0)");
}

TEST_CASE("line comments are skipped") {
  NExprP e = parse("a.0 -- a comment\n + b.0");
  CHECK(e->kind == NKind::Choice);
}

TEST_CASE("free_vars") {
  CHECK(free_vars(var("X")) == std::set<std::string>{"X"});
  CHECK(free_vars(parse("rec X (X + Y)")) == std::set<std::string>{"Y"});
  CHECK(free_vars(parse("tau.(X +[1/3] (Y + a.0))")) ==
        std::set<std::string>{"X", "Y"});
}

TEST_CASE("substitute") {
  NExprP e = substitute(parse("X + Y"), {{"X", parse("a.0")}});
  CHECK(alpha_eq(e, parse("a.0 + Y")));

  // capture avoidance: binder X must be renamed before X flows in for Y
  NExprP f = substitute(parse("rec X (X + Y)"), {{"Y", var("X")}});
  REQUIRE(f->kind == NKind::Rec);
  CHECK(f->name != "X");
  CHECK(alpha_eq(f, rec("Z", choice(var("Z"), var("X")))));
  CHECK(free_vars(f) == std::set<std::string>{"X"});

  NExprP g = parse("rec X tau.(X +[1/2] Y)");
  CHECK(substitute(g, {}) == g);

  // simultaneous, not sequential
  NExprP h = substitute(parse("X + Y"), {{"X", var("Y")}, {"Y", var("X")}});
  CHECK(alpha_eq(h, parse("Y + X")));
}

TEST_CASE("alpha_eq") {
  CHECK(alpha_eq(parse("rec X tau.X"), parse("rec Y tau.Y")));
  CHECK(!alpha_eq(parse("rec X tau.X"), parse("rec X tau.(X +[1/2] X)")));
  CHECK(!alpha_eq(var("X"), var("Y")));
  CHECK(alpha_eq(parse("rec X rec Y (X + Y)"), parse("rec Y rec X (Y + X)")));
  CHECK(!alpha_eq(parse("rec X rec Y (X + Y)"), parse("rec X rec Y (Y + X)")));
  CHECK(alpha_hash(parse("rec X tau.X")) == alpha_hash(parse("rec Y tau.Y")));
}

TEST_CASE("paths address subterms and replace preserves context") {
  NExprP e = parse("a.(X +[1/3] Y) + 0");
  auto s = subterm_at(e, {0, 0, 1, 0});
  REQUIRE(s.has_value());
  REQUIRE(s->n);
  CHECK(s->n->name == "Y");
  NExprP r = replace_at(e, {0, 0, 1, 0}, {nil(), nullptr});
  CHECK(alpha_eq(r, parse("a.(X +[1/3] 0) + 0")));
  CHECK(!subterm_at(e, {5}).has_value());
}

namespace {
// random closed-ish expression generator for the round-trip property
NExprP gen_n(std::mt19937& rng, int depth, std::vector<std::string>& binders);
PExprP gen_p(std::mt19937& rng, int depth, std::vector<std::string>& binders) {
  if (depth <= 0 || rng() % 3 == 0) return dirac(gen_n(rng, depth - 1, binders));
  Rat p(1 + rng() % 4, 5);
  return pchoice(p, gen_p(rng, depth - 1, binders), gen_p(rng, depth - 1, binders));
}
NExprP gen_n(std::mt19937& rng, int depth, std::vector<std::string>& binders) {
  int pick = depth <= 0 ? static_cast<int>(rng() % 2) : static_cast<int>(rng() % 6);
  switch (pick) {
    case 0: return nil();
    case 1:
      if (!binders.empty()) return var(binders[rng() % binders.size()]);
      return nil();
    case 2:
    case 3: {
      Action a = rng() % 2 ? Action::tau() : Action::visible(std::string(1, 'a' + rng() % 3));
      return prefix(a, gen_p(rng, depth - 1, binders));
    }
    case 4: {
      std::string b(1, 'X' + static_cast<char>(rng() % 3));
      binders.push_back(b);
      NExprP body = gen_n(rng, depth - 1, binders);
      binders.pop_back();
      return rec(b, body);
    }
    default:
      return choice(gen_n(rng, depth - 1, binders), gen_n(rng, depth - 1, binders));
  }
}
}  // namespace

TEST_CASE("round trip: parse(pretty(E)) is alpha-equal to E") {
  std::mt19937 rng(12345);
  for (int i = 0; i < 500; ++i) {
    std::vector<std::string> binders;
    NExprP e = gen_n(rng, 5, binders);
    std::string s = pretty(e);
    CAPTURE(s);
    NExprP back = parse(s);
    CHECK(alpha_eq(e, back));
  }
}

TEST_CASE("substitution interplay with free_vars") {
  std::mt19937 rng(99);
  for (int i = 0; i < 200; ++i) {
    std::vector<std::string> binders{"X", "Y"};
    NExprP e = gen_n(rng, 4, binders);
    binders.clear();
    NExprP g = gen_n(rng, 3, binders);
    NExprP r = substitute(e, {{"X", g}});
    auto fe = free_vars(e), fg = free_vars(g), fr = free_vars(r);
    std::set<std::string> expect;
    for (auto& v : fe)
      if (v != "X") expect.insert(v);
    if (fe.count("X")) expect.insert(fg.begin(), fg.end());
    CHECK(fr == expect);
  }
}
