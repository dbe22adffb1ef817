#include "doctest.h"

#include <algorithm>
#include <functional>
#include <numeric>
#include <random>

#include "paw/axioms.hh"
#include "paw/equiv.hh"

using namespace paw;

namespace {

NExprP a0() { return parse("a.0"); }
NExprP b0() { return parse("b.0"); }
NExprP c0() { return parse("c.0"); }

RewriteStep at(Path pos, Axiom ax, bool fwd = true) {
  return RewriteStep{std::move(pos), ax, fwd};
}

// closed expressions only, with enough shape to trigger most redexes
NExprP gen_closed(std::mt19937& rng, int depth) {
  int pick = static_cast<int>(rng() % (depth <= 0 ? 1 : 7));
  switch (pick) {
    case 0:
      return nil();
    case 1:
    case 2: {
      Action a = rng() % 2 ? Action::tau() : Action::visible("a");
      if (rng() % 2) return prefix(a, dirac(gen_closed(rng, depth - 1)));
      return prefix(a, pchoice(Rat(1, 1 + rng() % 3 + 1),
                               dirac(gen_closed(rng, depth - 1)),
                               dirac(gen_closed(rng, depth - 1))));
    }
    case 3:
    case 4: {
      NExprP l = gen_closed(rng, depth - 1);
      // duplicated summands now and then, so N3/P3/C redexes appear
      return choice(l, rng() % 3 ? gen_closed(rng, depth - 1) : l);
    }
    case 5:
      return choice(gen_closed(rng, depth - 1), nil());
    default: {
      NExprP body = gen_closed(rng, depth - 1);
      if (rng() % 2) body = choice(body, var("X"));
      return rec("X", prefix1(Action::tau(), body));
    }
  }
}

// one concrete instance per axiom: lhs, rhs, and the step taking lhs to rhs
struct Instance {
  NExprP lhs, rhs;
  RewriteStep step;
  std::vector<ProofTrace> premises;
};

std::vector<Instance> instances() {
  std::vector<Instance> out;
  auto add = [&](const char* l, NExprP r, RewriteStep s,
                 std::vector<ProofTrace> prem = {}) {
    out.push_back({parse(l), std::move(r), std::move(s), std::move(prem)});
  };
  add("a.0 + b.0", parse("b.0 + a.0"), at({}, Axiom::N1));
  add("a.0 + (b.0 + c.0)", parse("(a.0 + b.0) + c.0"), at({}, Axiom::N2));
  add("a.0 + a.0", a0(), at({}, Axiom::N3));
  add("a.0 + 0", a0(), at({}, Axiom::N4));
  add("tau.((a.0) +[1/3] (b.0))", parse("tau.((b.0) +[2/3] (a.0))"),
      at({0}, Axiom::P1));
  add("tau.((a.0) +[1/2] ((b.0) +[1/2] (c.0)))",
      parse("tau.(((a.0) +[2/3] (b.0)) +[3/4] (c.0))"), at({0}, Axiom::P2));
  add("tau.((a.0) +[1/3] (a.0))", parse("tau.a.0"), at({0}, Axiom::P3));
  add("tau.((tau.a.0) +[1/2] (b.0))", parse("tau.((a.0) +[1/2] (b.0))"),
      at({}, Axiom::T1));
  add("c.tau.a.0", parse("c.a.0"), at({}, Axiom::T1));

  NExprP t2l = prefix(Action::tau(),
                      pchoice(Rat(1, 2), dirac(choice(a0(), c0())),
                              dirac(choice(b0(), c0()))));
  out.push_back({choice(t2l, c0()), t2l, at({}, Axiom::T2)});

  NExprP t3l = prefix(Action::tau(),
                      pchoice(Rat(1, 2),
                              dirac(choice(c0(), prefix1(Action::visible("a"),
                                                         parse("d.0")))),
                              dirac(choice(parse("e.0"),
                                           prefix1(Action::visible("a"),
                                                   parse("f.0"))))));
  NExprP t3r = prefix(Action::visible("a"),
                      pchoice(Rat(1, 2), dirac(parse("d.0")),
                              dirac(parse("f.0"))));
  out.push_back({choice(t3l, t3r), t3l, at({}, Axiom::T3)});

  NExprP t4l = prefix(Action::visible("a"),
                      pchoice(Rat(1, 2),
                              dirac(choice(c0(), prefix1(Action::tau(),
                                                         parse("d.0")))),
                              dirac(choice(parse("e.0"),
                                           prefix1(Action::tau(),
                                                   parse("f.0"))))));
  NExprP t4r = prefix(Action::visible("a"),
                      pchoice(Rat(1, 2), dirac(parse("d.0")),
                              dirac(parse("f.0"))));
  out.push_back({choice(t4l, t4r), t4l, at({}, Axiom::T4)});

  RewriteStep cstep = at({}, Axiom::C);
  cstep.rargs["p"] = Rat(1, 2);
  NExprP cmid = prefix(Action::visible("a"),
                       pchoice(Rat(1, 2), dirac(b0()), dirac(c0())));
  add("a.b.0 + a.c.0",
      choice(choice(parse("a.b.0"), cmid), parse("a.c.0")), cstep);

  add("rec X tau.X", parse("tau.(rec X tau.X)"), at({}, Axiom::R1));

  RewriteStep r2 = at({}, Axiom::R2);
  r2.nargs["X"] = "X";
  r2.eargs["E"] = a0();
  r2.premise = 0;
  out.push_back({a0(), parse("rec X a.0"), r2, {trace_refl(a0())}});

  NExprP r3body = choice(
      prefix(Action::tau(),
             pchoice(Rat(1, 2), dirac(choice(var("X"), a0())), dirac(b0()))),
      c0());
  NExprP r3lhs = rec("X", r3body);
  NExprP r3rhs = rec("X", choice(choice(r3body->left,
                                        prefix1(Action::tau(), b0())),
                                 c0()));
  out.push_back({r3lhs, r3rhs, at({}, Axiom::R3)});

  add("rec X (X + a.0)", parse("rec X a.0"), at({}, Axiom::R4));
  add("rec X (tau.X + a.0)", parse("rec X tau.a.0"), at({}, Axiom::R5));

  NExprP r6lhs = rec("X", choice(prefix(Action::tau(),
                                        pchoice(Rat(1, 3),
                                                dirac(choice(var("X"), a0())),
                                                dirac(choice(var("X"), b0())))),
                                 c0()));
  NExprP r6rhs = rec("X", choice(choice(choice(prefix1(Action::tau(), var("X")),
                                               a0()),
                                        b0()),
                                 c0()));
  out.push_back({r6lhs, r6rhs, at({}, Axiom::R6)});
  return out;
}

}  // namespace

TEST_CASE("each axiom rewrites its concrete instance") {
  for (const Instance& in : instances()) {
    CAPTURE(axiom_name(in.step.ax));
    NExprP got = apply_step(in.lhs, in.step, in.premises);
    CHECK(alpha_eq(got, in.rhs));
  }
}

TEST_CASE("every axiom instance is a weak congruence") {
  for (const Instance& in : instances()) {
    CAPTURE(axiom_name(in.step.ax));
    CHECK(weak_congruence(in.lhs, in.rhs).verdict);
  }
}

TEST_CASE("inversion undoes each instance") {
  for (const Instance& in : instances()) {
    CAPTURE(axiom_name(in.step.ax));
    NExprP fwd = apply_step(in.lhs, in.step, in.premises);
    RewriteStep back = inverted(in.step, in.lhs);
    CHECK(alpha_eq(apply_step(fwd, back, in.premises), in.lhs));
  }
}

TEST_CASE("mismatched redexes are rejected") {
  CHECK_THROWS_AS(apply_step(a0(), at({}, Axiom::N4)), StepError);
  CHECK_THROWS_AS(apply_step(parse("a.0 + b.0"), at({}, Axiom::N3)), StepError);
  CHECK_THROWS_AS(apply_step(a0(), at({9}, Axiom::N1)), StepError);
  // convex interpolation requires an explicit probability in (0,1)
  RewriteStep c = at({}, Axiom::C);
  CHECK_THROWS_AS(apply_step(parse("a.b.0 + a.c.0"), c), StepError);
  c.rargs["p"] = Rat(1);
  CHECK_THROWS_AS(apply_step(parse("a.b.0 + a.c.0"), c), StepError);
  // unfolding recursion backward needs the binder and the body
  CHECK_THROWS_AS(apply_step(parse("tau.(rec X tau.X)"),
                             at({}, Axiom::R1, false)),
                  StepError);
}

TEST_CASE("redex enumeration finds canonical matches only") {
  auto fwd_count = [](const NExprP& e, Axiom a) {
    int n = 0;
    for (const RewriteStep& s : enumerate_redexes(e, a))
      if (s.forward) ++n;
    return n;
  };
  NExprP e = parse("a.0 + 0");
  auto n4 = enumerate_redexes(e, Axiom::N4);
  CHECK(fwd_count(e, Axiom::N4) == 1);
  bool found_root = false;
  for (const RewriteStep& s : n4)
    if (s.forward && s.pos.empty()) found_root = true;
  CHECK(found_root);

  CHECK(enumerate_redexes(nil(), Axiom::R1).empty());
  CHECK(fwd_count(parse("c.tau.a.0"), Axiom::T1) == 1);
  CHECK(fwd_count(parse("rec X tau.X"), Axiom::R1) == 1);
  // parameterized directions are never enumerated
  for (const RewriteStep& s : enumerate_redexes(parse("a.b.0 + a.c.0"),
                                                Axiom::C))
    CHECK(!s.forward);
  CHECK(enumerate_redexes(parse("rec X a.0"), Axiom::R2).empty());
}

TEST_CASE("enumerated redexes apply and invert on random expressions") {
  std::mt19937 rng(7);
  int applied = 0;
  for (int iter = 0; iter < 120; ++iter) {
    NExprP e = gen_closed(rng, 3);
    for (int ax = 0; ax < 18; ++ax) {
      Axiom a = static_cast<Axiom>(ax);
      for (const RewriteStep& s : enumerate_redexes(e, a)) {
        NExprP r = apply_step(e, s);
        RewriteStep back = inverted(s, e);
        CHECK(alpha_eq(apply_step(r, back), e));
        ++applied;
      }
    }
  }
  CHECK(applied > 500);
}

TEST_CASE("trace verification replays step by step") {
  ProofTrace refl = trace_refl(a0());
  CHECK(verify_trace(refl).ok);

  ProofTrace t = trace_step(parse("a.0 + 0"), at({}, Axiom::N4));
  CHECK(verify_trace(t).ok);
  CHECK(alpha_eq(t.end, a0()));

  ProofTrace wrong = t;
  wrong.end = b0();
  VerifyResult v = verify_trace(wrong);
  CHECK(!v.ok);
  CHECK(v.failed_step == -1);

  ProofTrace bad = t;
  bad.steps.push_back(at({}, Axiom::N4));
  v = verify_trace(bad);
  CHECK(!v.ok);
  CHECK(v.failed_step == 1);
}

TEST_CASE("a forged recursion-introduction step fails its side condition") {
  // premise a.0 = (X + a.0)[a.0/X] holds, but X is unguarded in the body
  ProofTrace prem = trace_step(a0(), at({}, Axiom::N3, false));
  RewriteStep s = at({}, Axiom::R2);
  s.nargs["X"] = "X";
  s.eargs["E"] = parse("X + a.0");
  s.premise = 0;
  ProofTrace forged;
  forged.start = a0();
  forged.end = parse("rec X (X + a.0)");
  forged.steps.push_back(s);
  forged.premises.push_back(prem);
  VerifyResult v = verify_trace(forged);
  CHECK(!v.ok);
  CHECK(v.failed_step == 0);
  CHECK(v.reason.find("unguarded") != std::string::npos);
}

TEST_CASE("trace combinators") {
  NExprP e = parse("(a.0 + 0) + 0");
  ProofTrace t1 = trace_step(e, at({0}, Axiom::N4));
  ProofTrace t2 = trace_step(t1.end, at({}, Axiom::N4));
  ProofTrace both = concat(t1, t2);
  CHECK(verify_trace(both).ok);
  CHECK(alpha_eq(both.end, a0()));
  CHECK_THROWS_AS(concat(t2, t1), StepError);

  ProofTrace back = reverse_trace(both);
  CHECK(verify_trace(back).ok);
  CHECK(alpha_eq(back.start, a0()));
  CHECK(alpha_eq(back.end, e));

  ProofTrace inside = embed(parse("c.(b.0 + X)"), {0, 0, 1},
                            trace_step(parse("a.0 + 0"), at({}, Axiom::N4)));
  CHECK(verify_trace(inside).ok);
  CHECK(alpha_eq(inside.start, substitute(parse("c.(b.0 + X)"),
                                          {{"X", parse("a.0 + 0")}})));
  CHECK(alpha_eq(inside.end, substitute(parse("c.(b.0 + X)"),
                                        {{"X", a0()}})));

  ProofTrace open_t = trace_step(parse("X + 0"), at({}, Axiom::N4));
  ProofTrace closed_t = subst_trace(open_t, {{"X", parse("b.c.0")}});
  CHECK(verify_trace(closed_t).ok);
  CHECK(alpha_eq(closed_t.start, parse("b.c.0 + 0")));
  CHECK(alpha_eq(closed_t.end, parse("b.c.0")));
}

TEST_CASE("json serialization round-trips and is stable") {
  ProofTrace t = trace_step(parse("a.0 + 0"), at({}, Axiom::N4));
  CHECK(t.to_json() ==
        "{\"end\":\"a.0\",\"start\":\"a.0 + 0\",\"steps\":"
        "[{\"axiom\":\"N4\",\"dir\":\"fwd\",\"pos\":[]}]}");

  std::vector<Instance> all = instances();
  for (const Instance& in : all) {
    ProofTrace tr;
    tr.start = in.lhs;
    tr.end = apply_step(in.lhs, in.step, in.premises);
    tr.steps.push_back(in.step);
    tr.premises = in.premises;
    ProofTrace rt = ProofTrace::from_json(tr.to_json(2));
    CAPTURE(axiom_name(in.step.ax));
    CHECK(verify_trace(rt).ok);
    CHECK(alpha_eq(rt.start, tr.start));
    CHECK(alpha_eq(rt.end, tr.end));
    CHECK(rt.to_json() == tr.to_json());
  }
}

TEST_CASE("summand and branch flattening") {
  auto ss = summands(parse("(a.0 + b.0) + (c.0 + 0)"));
  REQUIRE(ss.size() == 4);
  CHECK(pretty(ss[0]) == "a.0");
  CHECK(pretty(ss[3]) == "0");

  auto lv = pleaves(parse("tau.((a.0) +[1/2] ((b.0) +[1/3] (c.0)))")->parg);
  REQUIRE(lv.size() == 3);
  CHECK(lv[0].w == Rat(1, 2));
  CHECK(lv[1].w == Rat(1, 6));
  CHECK(lv[2].w == Rat(1, 3));
  CHECK(pretty(lv[1].e) == "b.0");
}

TEST_CASE("sum rearrangement emits a replayable step sequence") {
  std::mt19937 rng(11);
  std::vector<NExprP> atoms{parse("a.0"), parse("b.0"), parse("c.0"),
                            parse("d.0"), parse("e.0"), parse("f.0")};
  for (int iter = 0; iter < 60; ++iter) {
    int n = 2 + static_cast<int>(rng() % 5);
    std::vector<NExprP> part(atoms.begin(), atoms.begin() + n);
    // random association
    std::function<NExprP(int, int)> build = [&](int lo, int hi) -> NExprP {
      if (lo == hi) return part[lo];
      int mid = lo + static_cast<int>(rng() % (hi - lo));
      return choice(build(lo, mid), build(mid + 1, hi));
    };
    NExprP root = choice(parse("g.0"), build(0, n - 1));
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    bool right = rng() % 2;
    std::vector<RewriteStep> steps;
    NExprP out = permute_sum(root, {1}, order, steps, right);
    ProofTrace t{root, out, steps, {}};
    CHECK(verify_trace(t).ok);
    auto ss = summands(subterm_at(out, {1})->n);
    REQUIRE(static_cast<int>(ss.size()) == n);
    for (int i = 0; i < n; ++i) CHECK(alpha_eq(ss[i], part[order[i]]));
    // association is canonical on the requested side
    NExprP at1 = subterm_at(out, {1})->n;
    if (n > 1) {
      if (right)
        CHECK(at1->left->kind != NKind::Choice);
      else
        CHECK(at1->right->kind != NKind::Choice);
    }
  }
}

TEST_CASE("branch rearrangement preserves every leaf weight exactly") {
  std::mt19937 rng(13);
  std::vector<NExprP> atoms{parse("a.0"), parse("b.0"), parse("c.0"),
                            parse("d.0"), parse("e.0")};
  for (int iter = 0; iter < 60; ++iter) {
    int n = 2 + static_cast<int>(rng() % 4);
    std::vector<std::pair<Rat, NExprP>> parts;
    Rat total(0);
    std::vector<Rat> ws;
    for (int i = 0; i < n; ++i) {
      Rat w(1 + static_cast<int>(rng() % 5), 1);
      ws.push_back(w);
      total += w;
    }
    for (int i = 0; i < n; ++i) parts.push_back({ws[i] / total, atoms[i]});
    NExprP root = prefix(Action::tau(), psum(parts));
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<RewriteStep> steps;
    NExprP out = permute_psum(root, {0}, order, steps);
    ProofTrace t{root, out, steps, {}};
    CHECK(verify_trace(t).ok);
    auto lv = pleaves(subterm_at(out, {0})->p);
    REQUIRE(static_cast<int>(lv.size()) == n);
    for (int i = 0; i < n; ++i) {
      CHECK(lv[i].w == ws[order[i]] / total);
      CHECK(alpha_eq(lv[i].e, atoms[order[i]]));
    }
  }
}

TEST_CASE("axiom names round-trip") {
  for (int ax = 0; ax < 18; ++ax) {
    Axiom a = static_cast<Axiom>(ax);
    CHECK(axiom_from_name(axiom_name(a)) == a);
  }
  CHECK_THROWS_AS(axiom_from_name("Q7"), StepError);
}
