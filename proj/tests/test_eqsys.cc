#include "doctest.h"

#include <random>

#include "paw/eqsys.hh"
#include "paw/equiv.hh"
#include "paw/errors.hh"
#include "paw/guard.hh"

using namespace paw;

namespace {

const char* kRecursiveRunning =
    "rec X tau.(X +[1/2] (tau.X + tau.a.0 + b.0))";
const char* kGuardedRunning = "rec X tau.(tau.a.0 + b.0)";
const char* kSecondRunning = "b.0 + tau.rec Y (tau.(Y +[2/3] (a.0)) + b.0)";

// closes the remaining free variables with distinct visible probes
NExprP close_probed(const NExprP& e) {
  Bindings b;
  for (const std::string& v : free_vars(e))
    b.push_back({v, prefix(Action::visible("p" + v), dirac(nil()))});
  return substitute(e, b);
}

bool congruent_probed(const NExprP& a, const NExprP& b) {
  return weak_congruence(close_probed(a), close_probed(b), 4000).verdict;
}

// every equation of the system holds semantically for the solution
void check_satisfies(const SES& ses, const Solution& sol) {
  REQUIRE(static_cast<int>(sol.exprs.size()) == ses.size());
  REQUIRE(static_cast<int>(sol.traces.size()) == ses.size());
  Bindings b;
  for (int i = 0; i < ses.size(); ++i)
    b.push_back({ses.formals[i], sol.exprs[i]});
  for (int i = 0; i < ses.size(); ++i) {
    const ProofTrace& t = sol.traces[i];
    CHECK(verify_trace(t).ok);
    CHECK(alpha_eq(t.start, sol.exprs[i]));
    CHECK(alpha_eq(t.end, substitute(ses.defs[i], b)));
    CHECK(congruent_probed(sol.exprs[i], substitute(ses.defs[i], b)));
  }
}

void check_defs(const SES& ses, const std::vector<const char*>& expect) {
  REQUIRE(ses.size() == static_cast<int>(expect.size()));
  for (int i = 0; i < ses.size(); ++i) {
    CAPTURE(i);
    CHECK(alpha_eq(ses.defs[i], parse(expect[i])));
  }
}

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

}  // namespace

TEST_CASE("strong steps read off a standard definition") {
  SES ses;
  ses.formals = {"X1", "X2"};
  ses.defs = {parse("tau.X2 + a.(X1 +[1/3] X2) + V"), parse("0")};
  auto steps = ses_steps(ses, 0);
  REQUIRE(steps.size() == 2);
  CHECK(steps[0].summand == 0);
  CHECK(steps[0].act.is_tau());
  CHECK(steps[0].target.at(1) == Rat(1));
  CHECK(steps[1].summand == 1);
  CHECK(steps[1].act == Action::visible("a"));
  CHECK(steps[1].target.at(0) == Rat(1, 3));
  CHECK(steps[1].target.at(1) == Rat(2, 3));
  CHECK(ses_steps(ses, 1).empty());

  PA pa = induced_pa(ses);
  CHECK(pa.states.size() == 2);
  CHECK(pa.transitions.size() == 2);

  SES bad;
  bad.formals = {"X1"};
  bad.defs = {parse("tau.tau.X1")};  // nested prefix is not standard
  CHECK_THROWS_AS(ses_steps(bad, 0), SesError);
}

TEST_CASE("system serialisation round trip") {
  SES ses;
  ses.formals = {"X1", "X2"};
  ses.defs = {parse("tau.(X1 +[1/3] X2) + V"), parse("a.X1")};
  SES back = SES::from_json(ses.to_json());
  REQUIRE(back.size() == 2);
  CHECK(back.formals == ses.formals);
  for (int i = 0; i < 2; ++i) CHECK(alpha_eq(back.defs[i], ses.defs[i]));
  CHECK(back.index_of("X2") == 1);
  CHECK(back.index_of("V") == -1);
}

TEST_CASE("characterising the guarded running example") {
  NExprP e = parse(kGuardedRunning);
  auto [ses, sol] = characterise(e);
  check_defs(ses, {"tau.X2", "tau.X4 + b.X3", "0", "a.X3"});
  CHECK(alpha_eq(sol.exprs[0], e));
  check_satisfies(ses, sol);
  SesFlags f = validate_ses(ses);
  CHECK(f.standard);
  CHECK(f.guarded);
  CHECK(!f.saturated);
}

TEST_CASE("characterising the second running example") {
  NExprP e = parse(kSecondRunning);
  auto [ses, sol] = characterise(e);
  check_defs(ses,
             {"b.X2 + tau.X3", "0", "tau.(X3 +[2/3] X4) + b.X2", "a.X2"});
  CHECK(alpha_eq(sol.exprs[0], e));
  check_satisfies(ses, sol);
  SesFlags f = validate_ses(ses);
  CHECK(f.standard);
  CHECK(f.guarded);
  CHECK(!f.saturated);
}

TEST_CASE("characterisation keeps shared subterms apart from vacuous recursions") {
  // both probabilistic branches behave like b.0, but only one of them is a
  // recursion; the equations must not leak one solution into the other
  auto [ses, sol] = characterise(parse("a.((b.0) +[1/2] (rec Y b.0))"));
  check_defs(ses, {"a.(X2 +[1/2] X3)", "b.X4", "b.X4", "0"});
  CHECK(alpha_eq(sol.exprs[1], parse("b.0")));
  CHECK(alpha_eq(sol.exprs[2], parse("rec Y b.0")));
  check_satisfies(ses, sol);

  auto [s2, q2] = characterise(parse("(rec Y 0) + tau.0"));
  check_defs(s2, {"tau.X2", "0"});
  check_satisfies(s2, q2);
}

TEST_CASE("characterisation of open expressions") {
  auto [ses, sol] = characterise(parse("tau.(V + a.0) + b.0"));
  check_defs(ses, {"tau.X3 + b.X2", "0", "V + a.X2"});
  check_satisfies(ses, sol);
}

TEST_CASE("characterise rejects unguarded input and tiny budgets") {
  CHECK_THROWS_AS(characterise(parse(kRecursiveRunning)), SesError);
  CHECK_THROWS_AS(characterise(parse(kGuardedRunning), 2), BudgetError);
}

TEST_CASE("transition tree of the all-silent stationary policy") {
  NExprP e = parse(
      "rec X (tau.((rec Y (tau.(X +[1/2] (c.X)) + b.X)) +[2/3] (c.X)) + a.X)");
  auto [ses, sol] = characterise(e);
  check_defs(ses,
             {"tau.(X3 +[2/3] X2) + a.X1", "c.X1", "tau.(X1 +[1/2] X2) + b.X1"});
  check_satisfies(ses, sol);

  PA pa = induced_pa(ses);
  StationaryPolicy theta;
  for (int q = 0; q < ses.size(); ++q) {
    std::map<State, Rat> acc;
    for (const SesStep& s : ses_steps(ses, q))
      if (s.act.is_tau())
        for (const auto& [k, w] : s.target.weights()) acc[k] += w;
    if (!acc.empty()) theta[q] = SubDist(acc);
  }
  Stt tt = tt_from_policy(ses, 0, theta);
  tt.check_valid(pa);
  REQUIRE(tt.node.size() == 2);
  CHECK(tt.node.at({0}).at(1) == Rat(1, 3));
  CHECK(tt.node.at({0}).at(2) == Rat(2, 3));
  CHECK(tt.node.at({0, 2}).at(0) == Rat(1, 3));
  CHECK(tt.node.at({0, 2}).at(1) == Rat(1, 3));
  CHECK(tt.tree_size() == 3);
  CHECK(tt.recursions() == 1);
  SubDist lead = tt.leads_to();
  CHECK(lead.at(1) == Rat(1));

  // a tampered tree no longer validates
  Stt broken = tt;
  broken.node[{1}] = SubDist::point(0, Rat(1, 2));
  CHECK_THROWS_AS(broken.check_valid(pa), SesError);
  Stt heavy = tt;
  heavy.node[{0, 2}] = SubDist(std::map<State, Rat>{{0, Rat(1, 2)},
                                                    {1, Rat(1, 2)}});
  CHECK_THROWS_AS(heavy.check_valid(pa), SesError);

  SUBCASE("shortcutting the two-step pioneer node") {
    SesUpdate up = shortcut(ses, tt, {0, 2}, sol);
    CHECK(alpha_eq(up.ses.defs[0],
                   parse("tau.(X3 +[2/3] X2) + a.X1 + tau.(X1 +[1/3] X2)")));
    CHECK(verify_trace(up.sol.traces[0]).ok);
    up.tt.check_valid(induced_pa(up.ses));
    CHECK(up.tt.tree_size() == 2);
    CHECK(up.tt.recursions() == 1);
    check_satisfies(up.ses, up.sol);

    SUBCASE("linearising the remaining self-recursion") {
      SesUpdate lu = linearise(up.ses, up.tt, {0}, up.sol);
      CHECK(alpha_eq(
          lu.ses.defs[0],
          parse("tau.(X3 +[2/3] X2) + a.X1 + tau.(X1 +[1/3] X2) + tau.X2")));
      CHECK(verify_trace(lu.sol.traces[0]).ok);
      lu.tt.check_valid(induced_pa(lu.ses));
      CHECK(lu.tt.tree_size() == 1);
      CHECK(lu.tt.recursions() == 0);
      CHECK(lu.tt.leads_to().at(1) == Rat(1));
      check_satisfies(lu.ses, lu.sol);
    }
  }
}

TEST_CASE("saturating the running examples") {
  auto [se, sole] = characterise(parse(kGuardedRunning));
  auto [sse, ssole] = saturate(se, sole);
  check_defs(sse, {"tau.X2 + tau.X4 + a.X3 + b.X3", "tau.X4 + b.X3 + a.X3",
                   "0", "a.X3"});
  SesFlags fe = validate_ses(sse);
  CHECK(fe.standard);
  CHECK(fe.guarded);
  CHECK(fe.saturated);
  CHECK(alpha_eq(ssole.exprs[0], parse(kGuardedRunning)));
  check_satisfies(sse, ssole);

  auto [sf, solf] = characterise(parse(kSecondRunning));
  auto [ssf, ssolf] = saturate(sf, solf);
  check_defs(ssf, {"b.X2 + tau.X3 + tau.X4 + a.X2", "0",
                   "tau.(X3 +[2/3] X4) + b.X2 + tau.X4 + a.X2", "a.X2"});
  SesFlags ff = validate_ses(ssf);
  CHECK(ff.saturated);
  check_satisfies(ssf, ssolf);

  // a saturated system is a fixed point of saturation
  auto [again, sagain] = saturate(sse, ssole);
  REQUIRE(again.size() == sse.size());
  for (int i = 0; i < sse.size(); ++i)
    CHECK(alpha_eq(again.defs[i], sse.defs[i]));
}

TEST_CASE("saturation closes over free variable summands") {
  auto [ses, sol] = characterise(parse("tau.(V + a.0) + b.0"));
  auto [ss, ssol] = saturate(ses, sol);
  check_defs(ss, {"tau.X3 + b.X2 + a.X2 + V", "0", "V + a.X2"});
  SesFlags f = validate_ses(ss);
  CHECK(f.standard);
  CHECK(f.guarded);
  CHECK(f.saturated);
  check_satisfies(ss, ssol);
}

TEST_CASE("joining the saturated running systems") {
  auto [se, sole] = characterise(parse(kGuardedRunning));
  auto [sse, ssole] = saturate(se, sole);
  auto [sf, solf] = characterise(parse(kSecondRunning));
  auto [ssf, ssolf] = saturate(sf, solf);

  JoinResult jr = join(sse, ssole, ssf, ssolf);
  REQUIRE(jr.pairs.size() == 4);
  CHECK(jr.pairs[0] == std::pair<int, int>{0, 0});
  CHECK(jr.pairs[1] == std::pair<int, int>{1, 2});
  CHECK(jr.pairs[2] == std::pair<int, int>{2, 1});
  CHECK(jr.pairs[3] == std::pair<int, int>{3, 3});
  check_defs(jr.ses,
             {"tau.Z2 + tau.Z4 + a.Z3 + b.Z3",
              "tau.Z4 + b.Z3 + a.Z3 + tau.(Z2 +[2/3] Z4)", "0", "a.Z3"});
  SesFlags f = validate_ses(jr.ses);
  CHECK(f.standard);
  CHECK(f.guarded);
  CHECK(f.saturated);

  // both distinguished solutions start at the joined expressions
  CHECK(alpha_eq(jr.left.exprs[0], parse(kGuardedRunning)));
  CHECK(alpha_eq(jr.right.exprs[0], parse(kSecondRunning)));
  check_satisfies(jr.ses, jr.left);
  check_satisfies(jr.ses, jr.right);

  SUBCASE("the joint system has a perfect recursive solution") {
    Solution w = solve_unique(jr.ses);
    CHECK(w.perfect);
    CHECK(alpha_eq(w.exprs[2], parse("rec Z 0")));
    CHECK(alpha_eq(w.exprs[3], parse("rec Z a.rec W 0")));
    check_satisfies(jr.ses, w);

    std::vector<ProofTrace> tl = equate_solutions(jr.ses, w, jr.left);
    std::vector<ProofTrace> tr = equate_solutions(jr.ses, w, jr.right);
    REQUIRE(tl.size() == 4);
    for (int u = 0; u < 4; ++u) {
      CHECK(verify_trace(tl[u]).ok);
      CHECK(alpha_eq(tl[u].start, jr.left.exprs[u]));
      CHECK(alpha_eq(tl[u].end, w.exprs[u]));
      CHECK(verify_trace(tr[u]).ok);
      CHECK(alpha_eq(tr[u].start, jr.right.exprs[u]));
      CHECK(alpha_eq(tr[u].end, w.exprs[u]));
    }
  }
}

TEST_CASE("joining rejects systems that are not saturated bisimilar") {
  auto [sa, qa] = characterise(parse("a.0"));
  auto [ssa, qsa] = saturate(sa, qa);
  auto [sb, qb] = characterise(parse("b.0"));
  auto [ssb, qsb] = saturate(sb, qb);
  CHECK_THROWS_AS(join(ssa, qsa, ssb, qsb), SesError);
}

TEST_CASE("unique solutions require a guarded system") {
  SES loop;
  loop.formals = {"X1"};
  loop.defs = {parse("tau.X1 + a.X1")};
  CHECK_THROWS_AS(solve_unique(loop), SesError);
}

TEST_CASE("a fully idling pair is handled by the prover") {
  // tau.tau.a.0 reaches a.0 silently while tau.a.0 must idle on one step
  ProofTrace t = prove_equal(parse("tau.tau.a.0"), parse("tau.a.0"));
  CHECK(verify_trace(t).ok);
  CHECK(alpha_eq(t.start, parse("tau.tau.a.0")));
  CHECK(alpha_eq(t.end, parse("tau.a.0")));
}

TEST_CASE("the end-to-end prover on the running pair") {
  NExprP e = parse(kRecursiveRunning);
  NExprP f = parse(kSecondRunning);
  ProofTrace t = prove_equal(e, f);
  CHECK(verify_trace(t).ok);
  CHECK(alpha_eq(t.start, e));
  CHECK(alpha_eq(t.end, f));
  CHECK(t.steps.size() > 0);
  CHECK(t.premises.size() > 0);
}

TEST_CASE("prover corner cases") {
  // reflexivity
  ProofTrace t1 = prove_equal(parse("a.0"), parse("a.0"));
  CHECK(verify_trace(t1).ok);
  CHECK(alpha_eq(t1.end, parse("a.0")));

  // weakly bisimilar but not congruent
  CHECK_THROWS_AS(prove_equal(parse("tau.0"), parse("0")), SesError);

  // shared free variables are fine, unshared ones break congruence
  ProofTrace t2 = prove_equal(parse("tau.(V + a.0) + b.0 + tau.(V + a.0)"),
                              parse("tau.(V + a.0) + b.0"));
  CHECK(verify_trace(t2).ok);
  CHECK_THROWS_AS(prove_equal(parse("tau.(V + a.0)"), parse("tau.a.0")),
                  SesError);

  // probabilistic branching against its collapsed form
  ProofTrace t3 =
      prove_equal(parse("a.((b.0) +[1/2] (tau.b.0))"), parse("a.b.0"));
  CHECK(verify_trace(t3).ok);

  // two presentations of the same silent/visible loop
  ProofTrace t4 =
      prove_equal(parse("rec X tau.a.X"), parse("tau.rec Y a.tau.Y"));
  CHECK(verify_trace(t4).ok);
  CHECK(alpha_eq(t4.end, parse("tau.rec Y a.tau.Y")));
}

TEST_CASE("prover on random congruent pairs") {
  std::mt19937 rng(57);
  int selfproofs = 0, pairproofs = 0;
  for (int iter = 0; iter < 40; ++iter) {
    NExprP e = gen_open(rng, 3);
    NExprP f = gen_open(rng, 3);
    try {
      ProofTrace t = prove_equal(e, e, 4000, 200);
      CAPTURE(pretty(e));
      CHECK(verify_trace(t).ok);
      CHECK(alpha_eq(t.start, e));
      CHECK(alpha_eq(t.end, e));
      ++selfproofs;
    } catch (const BudgetError&) {
    }
    bool cong = false;
    try {
      cong = congruent_probed(e, f);
    } catch (const BudgetError&) {
      continue;
    }
    if (!cong) continue;
    try {
      ProofTrace t = prove_equal(e, f, 4000, 200);
      CAPTURE(pretty(e));
      CAPTURE(pretty(f));
      CHECK(verify_trace(t).ok);
      CHECK(alpha_eq(t.start, e));
      CHECK(alpha_eq(t.end, f));
      ++pairproofs;
    } catch (const BudgetError&) {
    }
  }
  CHECK(selfproofs > 30);
  CHECK(pairproofs > 2);
}
