#include "doctest.h"

#include <random>

#include "paw/semantics.hh"

using namespace paw;

namespace {
Rat dist_mass(const ExprDist& d) {
  Rat m = 0;
  for (auto& [k, ew] : d.entries()) m += ew.second;
  return m;
}
}  // namespace

TEST_CASE("pexp_dist") {
  ExprDist d = pexp_dist(dirac(parse("a.0")));
  REQUIRE(d.entries().size() == 1);
  CHECK(dist_mass(d) == 1);

  // identical branches merge
  PExprP both = pchoice(Rat(1, 2), dirac(parse("a.0")), dirac(parse("a.0")));
  ExprDist m = pexp_dist(both);
  REQUIRE(m.entries().size() == 1);
  CHECK(m.entries().begin()->second.second == 1);

  PExprP mix = pchoice(Rat(1, 3), dirac(var("E")), dirac(var("F")));
  ExprDist t = pexp_dist(mix);
  REQUIRE(t.entries().size() == 2);
  std::vector<Rat> ws;
  for (auto& [k, ew] : t.entries()) ws.push_back(ew.second);
  CHECK(((ws[0] == Rat(1, 3) && ws[1] == Rat(2, 3)) ||
         (ws[0] == Rat(2, 3) && ws[1] == Rat(1, 3))));
}

TEST_CASE("strong_steps basics") {
  auto st = strong_steps(parse("a.0"));
  REQUIRE(st.size() == 1);
  CHECK(st[0].first == Action::visible("a"));
  CHECK(alpha_eq(st[0].second.entries().begin()->second.first, nil()));

  auto loop = strong_steps(parse("rec X tau.X"));
  REQUIRE(loop.size() == 1);
  CHECK(loop[0].first.is_tau());
  CHECK(alpha_eq(loop[0].second.entries().begin()->second.first, parse("rec X tau.X")));

  CHECK(strong_steps(var("X")).empty());
  CHECK(strong_steps(nil()).empty());
  CHECK(strong_steps(parse("rec X X")).empty());
}

TEST_CASE("unfolding soundness") {
  std::mt19937 rng(21);
  std::vector<std::string> pool{
      "rec X tau.X",
      "rec X tau.(X +[1/2] a.0)",
      "rec X (a.X + tau.(X +[1/3] b.0))",
      "rec X rec Y (a.Y + b.X)",
      "rec X tau.(X +[1/2] (tau.X + tau.a.0 + b.0))",
  };
  for (auto& s : pool) {
    NExprP e = parse(s);
    NExprP unrolled = substitute(e->left, {{e->name, e}});
    CHECK(strong_steps(e) == strong_steps(unrolled));
  }
}

TEST_CASE("build_pa on the half-loop process") {
  PA pa = build_pa(parse("rec X tau.(X +[1/2] a.0)"));
  CHECK(pa.size() == 3);
  REQUIRE(pa.transitions.size() == 2);
  bool found_loop = false, found_a = false;
  for (auto& t : pa.transitions) {
    if (t.act.is_tau() && t.from == pa.initial) {
      CHECK(t.to.at(pa.initial) == Rat(1, 2));
      found_loop = true;
    }
    if (t.act == Action::visible("a")) {
      CHECK(mass(t.to) == 1);
      found_a = true;
    }
  }
  CHECK(found_loop);
  CHECK(found_a);
}

TEST_CASE("build_pa trivia and budget") {
  PA z = build_pa(parse("0"));
  CHECK(z.size() == 1);
  CHECK(z.transitions.empty());

  CHECK_THROWS_AS(build_pa(parse("a.b.c.0"), 2), BudgetError);
  CHECK_THROWS(build_pa(var("X")));
}

TEST_CASE("build_pa reaches 4 states on the running recursive example") {
  PA pa = build_pa(parse("rec X tau.(X +[1/2] (tau.X + tau.a.0 + b.0))"));
  CHECK(pa.size() == 4);
}

TEST_CASE("every strong target has mass 1") {
  std::vector<std::string> pool{
      "a.(0 +[1/4] b.0) + tau.0",
      "rec X (tau.(X +[2/3] a.X) + b.0)",
      "rec X a.(X +[1/5] (0 +[1/2] b.X))",
  };
  for (auto& s : pool) {
    PA pa = build_pa(parse(s));
    for (auto& t : pa.transitions) CHECK(mass(t.to) == 1);
  }
}

TEST_CASE("joint automaton shares alpha-equal states") {
  JointPA j = build_joint_pa(parse("rec X tau.X"), parse("rec Y tau.Y"));
  CHECK(j.init_a == j.init_b);
  CHECK(j.pa.size() == 1);
}

TEST_CASE("json export mentions states and rational weights") {
  PA pa = build_pa(parse("rec X tau.(X +[1/2] a.0)"));
  std::string js = pa.to_json();
  CHECK(js.find("\"1/2\"") != std::string::npos);
  CHECK(js.find("tau") != std::string::npos);
  std::string dot = pa.to_dot();
  CHECK(dot.find("shape=point") != std::string::npos);
}
