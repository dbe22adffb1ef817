#include "doctest.h"

#include <random>

#include "paw/axioms.hh"
#include "paw/equiv.hh"
#include "paw/errors.hh"
#include "paw/guard.hh"

using namespace paw;

namespace {

const char* kRecursiveRunning =
    "rec X tau.(X +[1/2] (tau.X + tau.a.0 + b.0))";
const char* kGuardedRunning =
    "b.0 + tau.rec Y (tau.(Y +[2/3] (a.0)) + b.0)";

NExprP gen_open(std::mt19937& rng, int depth) {
  int pick = static_cast<int>(rng() % (depth <= 0 ? 3 : 6));
  switch (pick) {
    case 0:
      return nil();
    case 1:
      return var("X");
    case 2:
      return var("Y");
    case 3: {
      Action a = rng() % 2 ? Action::tau() : Action::visible("a");
      if (rng() % 2) return prefix(a, dirac(gen_open(rng, depth - 1)));
      return prefix(a, pchoice(Rat(1, 2), dirac(gen_open(rng, depth - 1)),
                               dirac(gen_open(rng, depth - 1))));
    }
    case 4:
      return choice(gen_open(rng, depth - 1), gen_open(rng, depth - 1));
    default:
      return rec(rng() % 2 ? "X" : "Y", gen_open(rng, depth - 1));
  }
}

// closes over X and Y with distinct visible probes
NExprP probe(const NExprP& e) {
  return substitute(e, {{"X", parse("px.0")}, {"Y", parse("py.0")}});
}

bool congruent_probed(const NExprP& a, const NExprP& b) {
  return weak_congruence(probe(a), probe(b), 4000).verdict;
}

}  // namespace

TEST_CASE("absorbing a bare variable") {
  ProofTrace t = absorb_unguarded_var(var("X"), "X");
  CHECK(verify_trace(t).ok);
  CHECK(alpha_eq(t.start, var("X")));
  CHECK(alpha_eq(t.end, parse("X + X")));
}

TEST_CASE("absorbing through a silent prefix") {
  NExprP e = parse("tau.X");
  ProofTrace t = absorb_unguarded_var(e, "X");
  CHECK(verify_trace(t).ok);
  CHECK(alpha_eq(t.start, e));
  CHECK(alpha_eq(t.end, choice(e, var("X"))));
}

TEST_CASE("absorption requires unguardedness") {
  CHECK_THROWS_AS(absorb_unguarded_var(parse("a.X"), "X"), StepError);
  CHECK_THROWS_AS(absorb_unguarded_var(nil(), "X"), StepError);
  // the mixed branch needs both variables at once, so neither is singly
  // unguarded
  NExprP mixed = parse("tau.(X +[1/3] (Y + a.0))");
  CHECK_THROWS_AS(absorb_unguarded_var(mixed, "X"), StepError);
  CHECK_THROWS_AS(absorb_unguarded_var(mixed, "Y"), StepError);
}

TEST_CASE("absorbing out of a recursion body") {
  NExprP e = parse("rec Y (X + a.Y)");
  ProofTrace t = absorb_unguarded_var(e, "X");
  CHECK(verify_trace(t).ok);
  CHECK(alpha_eq(t.start, e));
  CHECK(alpha_eq(t.end, choice(e, var("X"))));
  CHECK(congruent_probed(t.start, t.end));
}

TEST_CASE("absorbing through the binder of a recursion") {
  NExprP e = parse("rec Y (tau.(Y +[1/2] X) + b.0)");
  ProofTrace t = absorb_unguarded_var(e, "X");
  CHECK(verify_trace(t).ok);
  CHECK(alpha_eq(t.start, e));
  CHECK(alpha_eq(t.end, choice(e, var("X"))));
  CHECK(congruent_probed(t.start, t.end));
}

TEST_CASE("absorption on random expressions: verified trace, exact shape, congruence") {
  std::mt19937 rng(23);
  int absorbed = 0, checked = 0;
  for (int iter = 0; iter < 200; ++iter) {
    NExprP e = gen_open(rng, 3);
    for (const char* x : {"X", "Y"}) {
      if (!is_unguarded(e, x)) {
        CHECK_THROWS_AS(absorb_unguarded_var(e, x), StepError);
        continue;
      }
      ProofTrace t = absorb_unguarded_var(e, x);
      CAPTURE(pretty(e));
      CHECK(verify_trace(t).ok);
      CHECK(alpha_eq(t.start, e));
      CHECK(alpha_eq(t.end, choice(e, var(x))));
      ++absorbed;
      if (absorbed % 7 == 0) {  // congruence spot checks are the slow part
        try {
          CHECK(congruent_probed(t.start, t.end));
          ++checked;
        } catch (const BudgetError&) {
        }
      }
    }
  }
  CHECK(absorbed > 80);
  CHECK(checked > 8);
}

TEST_CASE("guarding the recursive running example") {
  NExprP e = parse(kRecursiveRunning);
  CHECK(!is_guarded_expr(e));
  GuardResult g = guard_transform(e);
  CHECK(is_guarded_expr(g.guarded));
  CHECK(alpha_eq(g.guarded, parse("rec X tau.(tau.a.0 + b.0)")));
  CHECK(verify_trace(g.trace).ok);
  CHECK(alpha_eq(g.trace.start, e));
  CHECK(alpha_eq(g.trace.end, g.guarded));
  CHECK(weak_congruence(e, g.guarded).verdict);
}

TEST_CASE("guarded inputs pass through untouched") {
  for (const char* s : {kGuardedRunning, "0", "a.0", "rec X a.X",
                        "rec X tau.((rec Y b.Y) +[1/2] tau.((rec Y a.Y) +[1/2] X))"}) {
    NExprP e = parse(s);
    GuardResult g = guard_transform(e);
    CHECK(alpha_eq(g.guarded, e));
    CHECK(g.trace.steps.empty());
  }
}

TEST_CASE("a bare self-reference is stripped") {
  GuardResult g = guard_transform(parse("rec X (X + a.0)"));
  CHECK(alpha_eq(g.guarded, parse("rec X a.0")));
  CHECK(verify_trace(g.trace).ok);
}

TEST_CASE("a pure silent self-loop guards to a silent loop") {
  GuardResult g = guard_transform(parse("rec X (tau.X + a.0)"));
  CHECK(is_guarded_expr(g.guarded));
  CHECK(verify_trace(g.trace).ok);
  CHECK(weak_congruence(g.trace.start, g.guarded).verdict);
}

TEST_CASE("unguarded recursion below a prefix") {
  NExprP e = parse("a.rec X (X + b.0)");
  GuardResult g = guard_transform(e);
  CHECK(is_guarded_expr(g.guarded));
  CHECK(verify_trace(g.trace).ok);
  CHECK(alpha_eq(g.guarded, parse("a.rec X b.0")));
  CHECK(weak_congruence(e, g.guarded).verdict);
}

TEST_CASE("nested unguarded recursions") {
  NExprP e = parse("rec X (tau.rec Y (Y + X + a.0) + b.0)");
  GuardResult g = guard_transform(e);
  CHECK(is_guarded_expr(g.guarded));
  CHECK(verify_trace(g.trace).ok);
  CHECK(weak_congruence(e, g.guarded).verdict);
}

TEST_CASE("guarding on random expressions: guarded result, verified trace, congruence") {
  std::mt19937 rng(31);
  int transformed = 0, checked = 0;
  for (int iter = 0; iter < 150; ++iter) {
    NExprP e = gen_open(rng, 3);
    GuardResult g;
    try {
      g = guard_transform(e);
    } catch (const BudgetError&) {
      continue;
    }
    CAPTURE(pretty(e));
    CHECK(is_guarded_expr(g.guarded));
    CHECK(verify_trace(g.trace).ok);
    CHECK(alpha_eq(g.trace.start, e));
    CHECK(alpha_eq(g.trace.end, g.guarded));
    ++transformed;
    if (!g.trace.steps.empty()) {
      try {
        CHECK(congruent_probed(e, g.guarded));
        ++checked;
      } catch (const BudgetError&) {
      }
    }
  }
  CHECK(transformed > 100);
  CHECK(checked > 5);
}
