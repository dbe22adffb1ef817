#include "paw/axioms.hh"

#include <algorithm>
#include <functional>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "paw/guard.hh"

namespace paw {

namespace {

const char* kNames[] = {"N1", "N2", "N3", "N4", "P1", "P2", "P3", "T1",
                        "T2", "T3", "T4", "C",  "R1", "R2", "R3", "R4",
                        "R5", "R6"};

[[noreturn]] void fail(const std::string& msg) { throw StepError(msg); }

std::string ctx(const RewriteStep& s) {
  return axiom_name(s.ax) + (s.forward ? "" : " reverse") + " at " +
         path_str(s.pos) + ": ";
}

bool is_choice(const NExprP& e) { return e && e->kind == NKind::Choice; }
bool is_rec(const NExprP& e) { return e && e->kind == NKind::Rec; }
bool is_prefix(const NExprP& e) { return e && e->kind == NKind::Prefix; }
bool is_nil(const NExprP& e) { return e && e->kind == NKind::Nil; }
bool is_var(const NExprP& e, const std::string& x) {
  return e && e->kind == NKind::Var && e->name == x;
}
bool is_dirac(const PExprP& p) { return p && p->kind == PKind::Dirac; }
bool is_pchoice(const PExprP& p) { return p && p->kind == PKind::PChoice; }

// tau.<E>
bool is_tau_dirac(const NExprP& e) {
  return is_prefix(e) && e->act.is_tau() && is_dirac(e->parg);
}

// Right-nested pchoice comb: members m_0..m_{n-1} with the node
// probabilities probs_0..probs_{n-2} seen on the spine.
struct Comb {
  std::vector<PExprP> members;
  std::vector<Rat> probs;
};

Comb comb_of(const PExprP& p) {
  Comb c;
  PExprP cur = p;
  while (is_pchoice(cur)) {
    c.members.push_back(cur->left);
    c.probs.push_back(cur->p);
    cur = cur->right;
  }
  c.members.push_back(cur);
  return c;
}

PExprP comb_build(const Comb& c) {
  PExprP acc = c.members.back();
  for (int i = static_cast<int>(c.probs.size()) - 1; i >= 0; --i)
    acc = pchoice(c.probs[i], c.members[i], acc);
  return acc;
}

// The comb with every member a Dirac; nullopt otherwise.
std::optional<std::vector<NExprP>> dirac_members(const Comb& c) {
  std::vector<NExprP> out;
  for (auto& m : c.members) {
    if (!is_dirac(m)) return std::nullopt;
    out.push_back(m->inner);
  }
  return out;
}

NExprP left_sum(const std::vector<NExprP>& es) { return sum(es); }

// ---- per-axiom application on the redex ----------------------------------

NExprP ax_n1(const NExprP& t, const RewriteStep& s) {
  if (!is_choice(t)) fail(ctx(s) + "expected a sum");
  return choice(t->right, t->left);
}

NExprP ax_n2(const NExprP& t, const RewriteStep& s) {
  if (s.forward) {  // E + (F + G) -> (E + F) + G
    if (!is_choice(t) || !is_choice(t->right))
      fail(ctx(s) + "expected E + (F + G)");
    return choice(choice(t->left, t->right->left), t->right->right);
  }
  if (!is_choice(t) || !is_choice(t->left))
    fail(ctx(s) + "expected (E + F) + G");
  return choice(t->left->left, choice(t->left->right, t->right));
}

NExprP ax_n3(const NExprP& t, const RewriteStep& s) {
  if (s.forward) {
    if (!is_choice(t) || !alpha_eq(t->left, t->right))
      fail(ctx(s) + "expected E + E");
    return t->left;
  }
  return choice(t, t);
}

NExprP ax_n4(const NExprP& t, const RewriteStep& s) {
  if (s.forward) {
    if (!is_choice(t) || !is_nil(t->right)) fail(ctx(s) + "expected E + 0");
    return t->left;
  }
  return choice(t, nil());
}

PExprP ax_p1(const PExprP& t, const RewriteStep& s) {
  if (!is_pchoice(t)) fail(ctx(s) + "expected a probabilistic choice");
  return pchoice(Rat(1) - t->p, t->right, t->left);
}

PExprP ax_p2(const PExprP& t, const RewriteStep& s) {
  if (s.forward) {  // P (+p) (Q (+q/(1-p)) R) -> (P (+p/(p+q)) Q) (+p+q) R
    if (!is_pchoice(t) || !is_pchoice(t->right))
      fail(ctx(s) + "expected P (+p) (Q (+) R)");
    Rat p = t->p, q = t->right->p * (Rat(1) - p);
    return pchoice(p + q, pchoice(p / (p + q), t->left, t->right->left),
                   t->right->right);
  }
  if (!is_pchoice(t) || !is_pchoice(t->left))
    fail(ctx(s) + "expected (P (+) Q) (+) R");
  Rat p = t->left->p * t->p, q = t->p - p;
  return pchoice(p, t->left->left,
                 pchoice(q / (Rat(1) - p), t->left->right, t->right));
}

PExprP ax_p3(const PExprP& t, const RewriteStep& s) {
  if (s.forward) {
    if (!is_pchoice(t) || !alpha_eq(t->left, t->right))
      fail(ctx(s) + "expected P (+p) P");
    return t->left;
  }
  auto it = s.rargs.find("p");
  if (it == s.rargs.end()) fail(ctx(s) + "missing probability argument p");
  if (!(it->second > 0 && it->second < 1))
    fail(ctx(s) + "p must satisfy 0 < p < 1");
  return pchoice(it->second, t, t);
}

NExprP ax_t1(const NExprP& t, const RewriteStep& s) {
  if (!is_prefix(t)) fail(ctx(s) + "expected a prefix");
  const PExprP& body = t->parg;
  if (s.forward) {
    if (is_pchoice(body)) {  // alpha.(<tau.<E>> (+p) P) -> alpha.(<E> (+p) P)
      if (!is_dirac(body->left) || !is_tau_dirac(body->left->inner))
        fail(ctx(s) + "left branch is not <tau.<E>>");
      return prefix(t->act, pchoice(body->p, body->left->inner->parg,
                                    body->right));
    }
    if (!is_dirac(body) || !is_tau_dirac(body->inner))
      fail(ctx(s) + "body is not <tau.<E>>");
    return prefix(t->act, body->inner->parg);
  }
  if (is_pchoice(body)) {
    if (!is_dirac(body->left)) fail(ctx(s) + "left branch is not a <E>");
    return prefix(t->act,
                  pchoice(body->p, dirac(prefix1(Action::tau(),
                                                 body->left->inner)),
                          body->right));
  }
  return prefix(t->act, dirac(prefix1(Action::tau(), body->inner)));
}

// leaves (E_i + F) with a common right operand F
NExprP t2_common(const std::vector<NExprP>& leaves, const RewriteStep& s) {
  NExprP f;
  for (auto& l : leaves) {
    if (!is_choice(l)) fail(ctx(s) + "branch is not of shape E + F");
    if (!f)
      f = l->right;
    else if (!alpha_eq(f, l->right))
      fail(ctx(s) + "branches disagree on the common summand F");
  }
  return f;
}

NExprP ax_t2(const NExprP& t, const RewriteStep& s) {
  if (s.forward) {  // tau.(+) p_i (E_i + F) + F -> tau.(+) p_i (E_i + F)
    if (!is_choice(t)) fail(ctx(s) + "expected a sum");
    const NExprP& l = t->left;
    if (!is_prefix(l) || !l->act.is_tau()) fail(ctx(s) + "left summand is not a tau prefix");
    auto mem = dirac_members(comb_of(l->parg));
    if (!mem) fail(ctx(s) + "branches are not all point distributions");
    NExprP f = t2_common(*mem, s);
    if (!alpha_eq(f, t->right)) fail(ctx(s) + "outer summand differs from the common F");
    return l;
  }
  if (!is_prefix(t) || !t->act.is_tau()) fail(ctx(s) + "expected a tau prefix");
  auto mem = dirac_members(comb_of(t->parg));
  if (!mem) fail(ctx(s) + "branches are not all point distributions");
  return choice(t, t2_common(*mem, s));
}

// Shared for T3 (outer tau, inner alpha) and T4 (outer alpha, inner tau).
NExprP ax_t34(const NExprP& t, const RewriteStep& s, bool t3) {
  auto split = [&](const NExprP& l)
      -> std::pair<Action, std::vector<std::pair<NExprP, PExprP>>> {
    // l = outer.(+) p_i (E_i + inner.P_i); returns inner action and pairs
    if (!is_prefix(l)) fail(ctx(s) + "expected a prefix");
    if (t3 && !l->act.is_tau()) fail(ctx(s) + "outer prefix must be tau");
    auto mem = dirac_members(comb_of(l->parg));
    if (!mem) fail(ctx(s) + "branches are not all point distributions");
    std::optional<Action> inner;
    std::vector<std::pair<NExprP, PExprP>> parts;
    for (auto& e : *mem) {
      if (!is_choice(e) || !is_prefix(e->right))
        fail(ctx(s) + "branch is not of shape E + beta.P");
      if (!t3 && !e->right->act.is_tau())
        fail(ctx(s) + "inner prefixes must be tau");
      if (!inner)
        inner = e->right->act;
      else if (!(*inner == e->right->act))
        fail(ctx(s) + "inner prefixes disagree on the action");
      parts.push_back({e->left, e->right->parg});
    }
    return {t3 ? *inner : l->act, parts};
  };
  auto companion = [&](const NExprP& l, const Action& act) {
    // the summand alpha.(+) p_i P_i with the same spine probabilities
    auto [a, parts] = split(l);
    Comb c = comb_of(l->parg);
    Comb out;
    out.probs = c.probs;
    for (auto& [e, p] : parts) out.members.push_back(p);
    return prefix(act, comb_build(out));
  };
  if (s.forward) {
    if (!is_choice(t)) fail(ctx(s) + "expected a sum");
    auto [act, parts] = split(t->left);
    NExprP expect = companion(t->left, t3 ? act : t->left->act);
    if (!alpha_eq(expect, t->right))
      fail(ctx(s) + "right summand does not project the left one");
    return t->left;
  }
  auto [act, parts] = split(t);
  return choice(t, companion(t, t3 ? act : t->act));
}

NExprP ax_c(const NExprP& t, const RewriteStep& s) {
  if (s.forward) {  // a.P + a.Q -> a.P + a.(P (+p) Q) + a.Q
    if (!is_choice(t) || !is_prefix(t->left) || !is_prefix(t->right))
      fail(ctx(s) + "expected a.P + a.Q");
    if (!(t->left->act == t->right->act))
      fail(ctx(s) + "prefix actions differ");
    auto it = s.rargs.find("p");
    if (it == s.rargs.end()) fail(ctx(s) + "missing probability argument p");
    if (!(it->second > 0 && it->second < 1))
      fail(ctx(s) + "p must satisfy 0 < p < 1");
    NExprP mid = prefix(t->left->act,
                        pchoice(it->second, t->left->parg, t->right->parg));
    return choice(choice(t->left, mid), t->right);
  }
  if (!is_choice(t) || !is_choice(t->left))
    fail(ctx(s) + "expected a.P + a.(P (+p) Q) + a.Q");
  NExprP a = t->left->left, m = t->left->right, b = t->right;
  if (!is_prefix(a) || !is_prefix(m) || !is_prefix(b) ||
      !(a->act == m->act) || !(m->act == b->act))
    fail(ctx(s) + "summands are not equal-action prefixes");
  if (!is_pchoice(m->parg) || !alpha_eq(m->parg->left, a->parg) ||
      !alpha_eq(m->parg->right, b->parg))
    fail(ctx(s) + "middle summand does not interpolate the outer ones");
  return choice(a, b);
}

NExprP ax_r1(const NExprP& t, const RewriteStep& s) {
  if (s.forward) {  // rec X E -> E[rec X E / X]
    if (!is_rec(t)) fail(ctx(s) + "expected a recursion");
    return substitute(t->left, {{t->name, t}});
  }
  auto xe = s.nargs.find("X");
  auto ee = s.eargs.find("E");
  if (xe == s.nargs.end() || ee == s.eargs.end())
    fail(ctx(s) + "missing arguments X and E");
  NExprP r = rec(xe->second, ee->second);
  if (!alpha_eq(t, substitute(ee->second, {{xe->second, r}})))
    fail(ctx(s) + "term is not E[rec X E / X] for the given E");
  return r;
}

NExprP ax_r2(const NExprP& t, const RewriteStep& s,
             const std::vector<ProofTrace>& premises) {
  if (s.premise < 0 || s.premise >= static_cast<int>(premises.size()))
    fail(ctx(s) + "premise index out of range");
  const ProofTrace& pr = premises[s.premise];
  if (s.forward) {  // F -> rec X E given F = E[F/X], E not|> X
    auto xe = s.nargs.find("X");
    auto ee = s.eargs.find("E");
    if (xe == s.nargs.end() || ee == s.eargs.end())
      fail(ctx(s) + "missing arguments X and E");
    if (is_unguarded(ee->second, xe->second))
      fail(ctx(s) + "side condition violated: X is unguarded in E");
    if (!alpha_eq(pr.start, t))
      fail(ctx(s) + "premise does not start at F");
    if (!alpha_eq(pr.end, substitute(ee->second, {{xe->second, t}})))
      fail(ctx(s) + "premise does not end at E[F/X]");
    return rec(xe->second, ee->second);
  }
  if (!is_rec(t)) fail(ctx(s) + "expected a recursion");
  auto fe = s.eargs.find("F");
  if (fe == s.eargs.end()) fail(ctx(s) + "missing argument F");
  if (is_unguarded(t->left, t->name))
    fail(ctx(s) + "side condition violated: X is unguarded in E");
  if (!alpha_eq(pr.start, fe->second))
    fail(ctx(s) + "premise does not start at F");
  if (!alpha_eq(pr.end, substitute(t->left, {{t->name, fe->second}})))
    fail(ctx(s) + "premise does not end at E[F/X]");
  return fe->second;
}

// rec X (tau.(<X+E> (+p) P) + F): the pattern components, or failure.
struct R3Parts {
  NExprP l;       // the whole left summand tau.(<X+E> (+p) P)
  PExprP p_expr;  // P
  NExprP f;       // F
};
R3Parts r3_left(const NExprP& t, const NExprP& body_left,
                const RewriteStep& s) {
  const NExprP& l = body_left;
  if (!is_prefix(l) || !l->act.is_tau() || !is_pchoice(l->parg) ||
      !is_dirac(l->parg->left))
    fail(ctx(s) + "left summand is not tau.(<X+E> (+p) P)");
  const NExprP& xe = l->parg->left->inner;
  if (!is_choice(xe) || !is_var(xe->left, t->name))
    fail(ctx(s) + "left branch is not <X + E> for the bound X");
  return {l, l->parg->right, nullptr};
}

NExprP ax_r3(const NExprP& t, const RewriteStep& s) {
  if (!is_rec(t) || !is_choice(t->left)) fail(ctx(s) + "expected rec X (... + F)");
  const NExprP& body = t->left;
  if (s.forward) {
    R3Parts parts = r3_left(t, body->left, s);
    NExprP tp = prefix(Action::tau(), parts.p_expr);
    return rec(t->name, choice(choice(parts.l, tp), body->right));
  }
  if (!is_choice(body->left)) fail(ctx(s) + "expected rec X ((... + tau.P) + F)");
  R3Parts parts = r3_left(t, body->left->left, s);
  const NExprP& tp = body->left->right;
  if (!is_prefix(tp) || !tp->act.is_tau() || !alpha_eq(tp->parg, parts.p_expr))
    fail(ctx(s) + "second summand is not tau.P for the P of the first");
  return rec(t->name, choice(parts.l, body->right));
}

NExprP ax_r4(const NExprP& t, const RewriteStep& s) {
  if (!is_rec(t)) fail(ctx(s) + "expected a recursion");
  if (s.forward) {  // rec X (X + E) -> rec X E
    if (!is_choice(t->left) || !is_var(t->left->left, t->name))
      fail(ctx(s) + "body is not X + E");
    return rec(t->name, t->left->right);
  }
  return rec(t->name, choice(var(t->name), t->left));
}

NExprP ax_r5(const NExprP& t, const RewriteStep& s) {
  if (!is_rec(t)) fail(ctx(s) + "expected a recursion");
  if (s.forward) {  // rec X (tau.<X> + E) -> rec X tau.<E>
    if (!is_choice(t->left) || !is_tau_dirac(t->left->left) ||
        !is_var(t->left->left->parg->inner, t->name))
      fail(ctx(s) + "body is not tau.<X> + E");
    return rec(t->name, prefix1(Action::tau(), t->left->right));
  }
  if (!is_tau_dirac(t->left)) fail(ctx(s) + "body is not tau.<E>");
  return rec(t->name,
             choice(prefix1(Action::tau(), var(t->name)), t->left->parg->inner));
}

NExprP ax_r6(const NExprP& t, const RewriteStep& s) {
  if (!is_rec(t) || !is_choice(t->left)) fail(ctx(s) + "expected rec X (... + F)");
  const NExprP& body = t->left;
  if (s.forward) {  // rec X (tau.(+) p_i (X + E_i) + F) -> rec X (tau.<X> + Sum E_i + F)
    const NExprP& l = body->left;
    if (!is_prefix(l) || !l->act.is_tau())
      fail(ctx(s) + "left summand is not a tau prefix");
    auto mem = dirac_members(comb_of(l->parg));
    if (!mem) fail(ctx(s) + "branches are not all point distributions");
    std::vector<NExprP> parts{prefix1(Action::tau(), var(t->name))};
    for (auto& e : *mem) {
      if (!is_choice(e) || !is_var(e->left, t->name))
        fail(ctx(s) + "branch is not of shape X + E for the bound X");
      parts.push_back(e->right);
    }
    return rec(t->name, choice(left_sum(parts), body->right));
  }
  // reverse needs the branch probabilities of the target pchoice spine;
  // an empty list states that the prefix argument is a single point
  int n = static_cast<int>(s.plist.size()) + 1;
  std::vector<NExprP> es(n);
  NExprP cur = body->left;
  for (int i = n - 1; i >= 1; --i) {
    if (!is_choice(cur)) fail(ctx(s) + "left part is not a sum of the stated width");
    es[i] = cur->right;
    cur = cur->left;
  }
  if (!is_choice(cur) || !is_tau_dirac(cur->left) ||
      !is_var(cur->left->parg->inner, t->name))
    fail(ctx(s) + "left part does not begin with tau.<X>");
  es[0] = cur->right;
  Comb c;
  c.probs = s.plist;
  for (auto& e : es) c.members.push_back(dirac(choice(var(t->name), e)));
  return rec(t->name,
             choice(prefix(Action::tau(), comb_build(c)), body->right));
}

Subterm apply_at(const Subterm& st, const RewriteStep& s,
                 const std::vector<ProofTrace>& premises) {
  bool p_sort = s.ax == Axiom::P1 || s.ax == Axiom::P2 || s.ax == Axiom::P3;
  if (p_sort) {
    if (!st.p) fail(ctx(s) + "position does not address a probabilistic expression");
    switch (s.ax) {
      case Axiom::P1: return {nullptr, ax_p1(st.p, s)};
      case Axiom::P2: return {nullptr, ax_p2(st.p, s)};
      default: return {nullptr, ax_p3(st.p, s)};
    }
  }
  if (!st.n) fail(ctx(s) + "position does not address an expression");
  const NExprP& t = st.n;
  switch (s.ax) {
    case Axiom::N1: return {ax_n1(t, s), nullptr};
    case Axiom::N2: return {ax_n2(t, s), nullptr};
    case Axiom::N3: return {ax_n3(t, s), nullptr};
    case Axiom::N4: return {ax_n4(t, s), nullptr};
    case Axiom::T1: return {ax_t1(t, s), nullptr};
    case Axiom::T2: return {ax_t2(t, s), nullptr};
    case Axiom::T3: return {ax_t34(t, s, true), nullptr};
    case Axiom::T4: return {ax_t34(t, s, false), nullptr};
    case Axiom::C: return {ax_c(t, s), nullptr};
    case Axiom::R1: return {ax_r1(t, s), nullptr};
    case Axiom::R2: return {ax_r2(t, s, premises), nullptr};
    case Axiom::R3: return {ax_r3(t, s), nullptr};
    case Axiom::R4: return {ax_r4(t, s), nullptr};
    case Axiom::R5: return {ax_r5(t, s), nullptr};
    case Axiom::R6: return {ax_r6(t, s), nullptr};
    default: fail(ctx(s) + "unhandled axiom");
  }
}

}  // namespace

std::string axiom_name(Axiom a) { return kNames[static_cast<int>(a)]; }

Axiom axiom_from_name(const std::string& name) {
  for (int i = 0; i < 18; ++i)
    if (name == kNames[i]) return static_cast<Axiom>(i);
  throw StepError("unknown axiom name '" + name + "'");
}

NExprP apply_step(const NExprP& e, const RewriteStep& s,
                  const std::vector<ProofTrace>& premises) {
  auto st = subterm_at(e, s.pos);
  if (!st) fail(ctx(s) + "invalid position");
  return replace_at(e, s.pos, apply_at(*st, s, premises));
}

RewriteStep inverted(const RewriteStep& s, const NExprP& before) {
  RewriteStep r = s;
  r.forward = !s.forward;
  auto st = subterm_at(before, s.pos);
  if (!st) fail(ctx(s) + "invalid position for inversion");
  if (s.forward) {
    switch (s.ax) {
      case Axiom::P3:
        if (!st->p || !is_pchoice(st->p)) fail(ctx(s) + "cannot invert");
        r.rargs["p"] = st->p->p;
        break;
      case Axiom::R1:
        if (!st->n || !is_rec(st->n)) fail(ctx(s) + "cannot invert");
        r.nargs["X"] = st->n->name;
        r.eargs["E"] = st->n->left;
        break;
      case Axiom::R2:
        if (!st->n) fail(ctx(s) + "cannot invert");
        r.eargs["F"] = st->n;
        break;
      case Axiom::R6: {
        if (!st->n || !is_rec(st->n) || !is_choice(st->n->left) ||
            !is_prefix(st->n->left->left))
          fail(ctx(s) + "cannot invert");
        r.plist = comb_of(st->n->left->left->parg).probs;
        break;
      }
      default:
        break;
    }
  } else {
    switch (s.ax) {
      case Axiom::C: {
        if (!st->n || !is_choice(st->n) || !is_choice(st->n->left) ||
            !is_prefix(st->n->left->right) ||
            !is_pchoice(st->n->left->right->parg))
          fail(ctx(s) + "cannot invert");
        r.rargs["p"] = st->n->left->right->parg->p;
        break;
      }
      case Axiom::R2:
        if (!st->n || !is_rec(st->n)) fail(ctx(s) + "cannot invert");
        r.nargs["X"] = st->n->name;
        r.eargs["E"] = st->n->left;
        break;
      default:
        break;
    }
  }
  return r;
}

std::vector<RewriteStep> enumerate_redexes(const NExprP& e, Axiom a) {
  // directions with parameter-free canonical instantiations
  bool try_fwd = !(a == Axiom::C || a == Axiom::R2);
  bool try_bwd = !(a == Axiom::P3 || a == Axiom::R1 || a == Axiom::R2 ||
                   a == Axiom::R6);
  std::vector<RewriteStep> out;
  std::function<void(const Subterm&, Path&)> walk = [&](const Subterm& st,
                                                        Path& path) {
    for (bool fwd : {true, false}) {
      if (fwd ? !try_fwd : !try_bwd) continue;
      RewriteStep s{path, a, fwd};
      try {
        apply_at(st, s, {});
        out.push_back(s);
      } catch (const StepError&) {
      }
    }
    auto desc = [&](int i, const Subterm& child) {
      path.push_back(i);
      walk(child, path);
      path.pop_back();
    };
    if (st.n) {
      switch (st.n->kind) {
        case NKind::Prefix: desc(0, {nullptr, st.n->parg}); break;
        case NKind::Rec: desc(0, {st.n->left, nullptr}); break;
        case NKind::Choice:
          desc(0, {st.n->left, nullptr});
          desc(1, {st.n->right, nullptr});
          break;
        default: break;
      }
    } else if (st.p) {
      if (st.p->kind == PKind::Dirac) {
        desc(0, {st.p->inner, nullptr});
      } else {
        desc(0, {nullptr, st.p->left});
        desc(1, {nullptr, st.p->right});
      }
    }
  };
  Path path;
  walk({e, nullptr}, path);
  return out;
}

VerifyResult verify_trace(const ProofTrace& t) {
  for (size_t i = 0; i < t.premises.size(); ++i) {
    VerifyResult pr = verify_trace(t.premises[i]);
    if (!pr.ok)
      return {false, -1,
              "premise " + std::to_string(i) + ": " + pr.reason};
  }
  if (!t.start) return {false, -1, "missing start expression"};
  NExprP cur = t.start;
  for (size_t i = 0; i < t.steps.size(); ++i) {
    try {
      cur = apply_step(cur, t.steps[i], t.premises);
    } catch (const StepError& ex) {
      return {false, static_cast<int>(i), ex.what()};
    }
  }
  if (!t.end || !alpha_eq(cur, t.end))
    return {false, -1, "replay does not reach the stated end expression"};
  return {};
}

ProofTrace trace_refl(const NExprP& e) { return {e, e, {}, {}}; }

ProofTrace trace_step(const NExprP& start, RewriteStep s,
                      std::vector<ProofTrace> premises) {
  ProofTrace t;
  t.start = start;
  t.premises = std::move(premises);
  t.end = apply_step(start, s, t.premises);
  t.steps.push_back(std::move(s));
  return t;
}

ProofTrace concat(ProofTrace a, const ProofTrace& b) {
  if (!alpha_eq(a.end, b.start))
    fail("concat: end of the first trace differs from start of the second");
  int shift = static_cast<int>(a.premises.size());
  for (RewriteStep s : b.steps) {
    if (s.premise >= 0) s.premise += shift;
    a.steps.push_back(std::move(s));
  }
  for (const ProofTrace& p : b.premises) a.premises.push_back(p);
  a.end = b.end;
  return a;
}

ProofTrace reverse_trace(const ProofTrace& t) {
  std::vector<NExprP> inter{t.start};
  for (const RewriteStep& s : t.steps)
    inter.push_back(apply_step(inter.back(), s, t.premises));
  ProofTrace r;
  r.start = t.end;
  r.end = t.start;
  r.premises = t.premises;
  for (int i = static_cast<int>(t.steps.size()) - 1; i >= 0; --i)
    r.steps.push_back(inverted(t.steps[i], inter[i]));
  return r;
}

ProofTrace embed(const NExprP& root, const Path& pos, const ProofTrace& t) {
  ProofTrace r;
  r.start = replace_at(root, pos, {t.start, nullptr});
  r.end = replace_at(root, pos, {t.end, nullptr});
  r.premises = t.premises;
  for (RewriteStep s : t.steps) {
    Path p = pos;
    p.insert(p.end(), s.pos.begin(), s.pos.end());
    s.pos = std::move(p);
    r.steps.push_back(std::move(s));
  }
  return r;
}

ProofTrace subst_trace(const ProofTrace& t, const Bindings& bs) {
  ProofTrace r;
  r.start = substitute(t.start, bs);
  r.end = substitute(t.end, bs);
  for (RewriteStep s : t.steps) {
    for (auto& [k, v] : s.eargs) v = substitute(v, bs);
    r.steps.push_back(std::move(s));
  }
  for (const ProofTrace& p : t.premises) r.premises.push_back(subst_trace(p, bs));
  VerifyResult v = verify_trace(r);
  if (!v.ok) fail(std::string("substituted trace no longer replays: ") + v.reason);
  return r;
}

std::vector<NExprP> summands(const NExprP& e) {
  std::vector<NExprP> out;
  std::function<void(const NExprP&)> go = [&](const NExprP& t) {
    if (is_choice(t)) {
      go(t->left);
      go(t->right);
    } else {
      out.push_back(t);
    }
  };
  go(e);
  return out;
}

std::vector<PLeaf> pleaves(const PExprP& p) {
  std::vector<PLeaf> out;
  std::function<void(const PExprP&, Rat)> go = [&](const PExprP& t, Rat w) {
    if (is_pchoice(t)) {
      go(t->left, w * t->p);
      go(t->right, w * (Rat(1) - t->p));
    } else {
      out.push_back({w, t->inner});
    }
  };
  go(p, Rat(1));
  return out;
}

namespace {

void check_order(const std::vector<int>& order, size_t n) {
  std::vector<bool> seen(n, false);
  if (order.size() != n) fail("rearrangement order has the wrong length");
  for (int i : order) {
    if (i < 0 || i >= static_cast<int>(n) || seen[i])
      fail("rearrangement order is not a permutation");
    seen[i] = true;
  }
}

struct Rearranger {
  NExprP root;
  std::vector<RewriteStep>& steps;
  void step(const Path& pos, Axiom ax, bool fwd) {
    RewriteStep s{pos, ax, fwd};
    root = apply_step(root, s);
    steps.push_back(std::move(s));
  }
  NExprP n_at(const Path& pos) { return subterm_at(root, pos)->n; }
  PExprP p_at(const Path& pos) { return subterm_at(root, pos)->p; }
};

Path child(Path p, int steps1) {
  for (int i = 0; i < steps1; ++i) p.push_back(1);
  return p;
}

}  // namespace

NExprP permute_sum(const NExprP& root, const Path& pos,
                   const std::vector<int>& order,
                   std::vector<RewriteStep>& steps, bool right_nested) {
  auto st = subterm_at(root, pos);
  if (!st || !st->n) fail("permute_sum: invalid position");
  size_t n = summands(st->n).size();
  check_order(order, n);
  if (n == 1) return root;
  Rearranger r{root, steps};
  // right comb
  std::function<void(Path)> combify = [&](Path q) {
    while (true) {
      NExprP t = r.n_at(q);
      if (!is_choice(t)) return;
      if (is_choice(t->left)) {
        r.step(q, Axiom::N2, false);
        continue;
      }
      q.push_back(1);
    }
  };
  combify(pos);
  // selection sort with adjacent swaps
  std::vector<int> cur(n);
  std::iota(cur.begin(), cur.end(), 0);
  for (size_t k = 0; k + 1 < n; ++k) {
    size_t j = std::find(cur.begin(), cur.end(), order[k]) - cur.begin();
    for (size_t m = j; m > k; --m) {
      Path q = child(pos, static_cast<int>(m) - 1);
      if (m == n - 1) {
        r.step(q, Axiom::N1, true);
      } else {
        r.step(q, Axiom::N2, true);
        Path ql = q;
        ql.push_back(0);
        r.step(ql, Axiom::N1, true);
        r.step(q, Axiom::N2, false);
      }
      std::swap(cur[m - 1], cur[m]);
    }
  }
  if (!right_nested) {
    while (is_choice(r.n_at(pos)->right)) r.step(pos, Axiom::N2, true);
  }
  return r.root;
}

NExprP permute_psum(const NExprP& root, const Path& pos,
                    const std::vector<int>& order,
                    std::vector<RewriteStep>& steps) {
  auto st = subterm_at(root, pos);
  if (!st || !st->p) fail("permute_psum: invalid position");
  size_t n = pleaves(st->p).size();
  check_order(order, n);
  if (n == 1) return root;
  Rearranger r{root, steps};
  std::function<void(Path)> combify = [&](Path q) {
    while (true) {
      PExprP t = r.p_at(q);
      if (!is_pchoice(t)) return;
      if (is_pchoice(t->left)) {
        r.step(q, Axiom::P2, false);
        continue;
      }
      q.push_back(1);
    }
  };
  combify(pos);
  std::vector<int> cur(n);
  std::iota(cur.begin(), cur.end(), 0);
  for (size_t k = 0; k + 1 < n; ++k) {
    size_t j = std::find(cur.begin(), cur.end(), order[k]) - cur.begin();
    for (size_t m = j; m > k; --m) {
      Path q = child(pos, static_cast<int>(m) - 1);
      if (m == n - 1) {
        r.step(q, Axiom::P1, true);
      } else {
        r.step(q, Axiom::P2, true);
        Path ql = q;
        ql.push_back(0);
        r.step(ql, Axiom::P1, true);
        r.step(q, Axiom::P2, false);
      }
      std::swap(cur[m - 1], cur[m]);
    }
  }
  return r.root;
}

// ---- JSON ----------------------------------------------------------------

namespace {

using nlohmann::json;

json step_to_json(const RewriteStep& s) {
  json j;
  j["pos"] = s.pos;
  j["axiom"] = axiom_name(s.ax);
  j["dir"] = s.forward ? "fwd" : "bwd";
  if (!s.eargs.empty()) {
    json m;
    for (auto& [k, v] : s.eargs) m[k] = pretty(v);
    j["eargs"] = m;
  }
  if (!s.nargs.empty()) j["nargs"] = s.nargs;
  if (!s.rargs.empty()) {
    json m;
    for (auto& [k, v] : s.rargs) m[k] = rat_str(v);
    j["rargs"] = m;
  }
  if (!s.plist.empty()) {
    json a = json::array();
    for (auto& p : s.plist) a.push_back(rat_str(p));
    j["plist"] = a;
  }
  if (s.premise >= 0) j["premise"] = s.premise;
  return j;
}

RewriteStep step_from_json(const json& j) {
  RewriteStep s;
  s.pos = j.at("pos").get<std::vector<int>>();
  s.ax = axiom_from_name(j.at("axiom").get<std::string>());
  s.forward = j.at("dir").get<std::string>() == "fwd";
  if (j.contains("eargs"))
    for (auto& [k, v] : j.at("eargs").items())
      s.eargs[k] = parse(v.get<std::string>());
  if (j.contains("nargs"))
    for (auto& [k, v] : j.at("nargs").items())
      s.nargs[k] = v.get<std::string>();
  if (j.contains("rargs"))
    for (auto& [k, v] : j.at("rargs").items())
      s.rargs[k] = rat_parse(v.get<std::string>());
  if (j.contains("plist"))
    for (auto& v : j.at("plist")) s.plist.push_back(rat_parse(v.get<std::string>()));
  if (j.contains("premise")) s.premise = j.at("premise").get<int>();
  return s;
}

json trace_to_json(const ProofTrace& t) {
  json j;
  j["start"] = pretty(t.start);
  j["end"] = pretty(t.end);
  j["steps"] = json::array();
  for (auto& s : t.steps) j["steps"].push_back(step_to_json(s));
  if (!t.premises.empty()) {
    j["premises"] = json::array();
    for (auto& p : t.premises) j["premises"].push_back(trace_to_json(p));
  }
  return j;
}

ProofTrace trace_from_json(const json& j) {
  ProofTrace t;
  t.start = parse(j.at("start").get<std::string>());
  t.end = parse(j.at("end").get<std::string>());
  for (auto& s : j.at("steps")) t.steps.push_back(step_from_json(s));
  if (j.contains("premises"))
    for (auto& p : j.at("premises")) t.premises.push_back(trace_from_json(p));
  return t;
}

}  // namespace

std::string ProofTrace::to_json(int indent) const {
  return trace_to_json(*this).dump(indent);
}

ProofTrace ProofTrace::from_json(const std::string& text) {
  return trace_from_json(json::parse(text));
}

}  // namespace paw
