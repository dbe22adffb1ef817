// Derived equational procedures built from the primitive rewrite steps:
// absorption of an unguarded variable (E = E + X) and the transformation of
// arbitrary expressions into guarded ones.
#include <algorithm>
#include <functional>
#include <numeric>
#include <optional>

#include "paw/axioms.hh"
#include "paw/errors.hh"
#include "paw/guard.hh"

namespace paw {

namespace {

bool is_choice(const NExprP& e) { return e && e->kind == NKind::Choice; }
bool is_nil(const NExprP& e) { return e && e->kind == NKind::Nil; }
bool is_var(const NExprP& e, const std::string& x) {
  return e && e->kind == NKind::Var && e->name == x;
}
bool is_tau_dirac(const NExprP& e) {
  return e && e->kind == NKind::Prefix && e->act.is_tau() &&
         e->parg->kind == PKind::Dirac;
}
// tau.<X>, the summand R5 ultimately strips
bool is_canonical_loop(const NExprP& e, const std::string& x) {
  return is_tau_dirac(e) && is_var(e->parg->inner, x);
}

void push_step(ProofTrace& t, Path pos, Axiom ax, bool fwd) {
  RewriteStep s{std::move(pos), ax, fwd};
  t.end = apply_step(t.end, s, t.premises);
  t.steps.push_back(std::move(s));
}

void apply_perm_sum(ProofTrace& t, const Path& pos,
                    const std::vector<int>& order, bool right_nested) {
  std::vector<RewriteStep> ss;
  NExprP out = permute_sum(t.end, pos, order, ss, right_nested);
  for (auto& s : ss) t.steps.push_back(std::move(s));
  t.end = out;
}

void apply_perm_psum(ProofTrace& t, const Path& pos,
                     const std::vector<int>& order) {
  std::vector<RewriteStep> ss;
  NExprP out = permute_psum(t.end, pos, order, ss);
  for (auto& s : ss) t.steps.push_back(std::move(s));
  t.end = out;
}

NExprP n_at(const ProofTrace& t, const Path& pos) {
  return subterm_at(t.end, pos)->n;
}
PExprP p_at(const ProofTrace& t, const Path& pos) {
  return subterm_at(t.end, pos)->p;
}

// path of the Dirac-inner of comb member k among m, below the comb at bp
Path member_inner(Path bp, int k, int m) {
  for (int i = 0; i < std::min(k, m - 1); ++i) bp.push_back(1);
  if (k < m - 1) bp.push_back(0);
  bp.push_back(0);
  return bp;
}

std::vector<int> rotate_front(int k, int m) {
  std::vector<int> o{k};
  for (int i = 0; i < m; ++i)
    if (i != k) o.push_back(i);
  return o;
}
std::vector<int> rotate_back(int k, int m) {
  std::vector<int> o;
  for (int i = 1; i <= k; ++i) o.push_back(i);
  o.push_back(0);
  for (int i = k + 1; i < m; ++i) o.push_back(i);
  return o;
}

// exp: e = e2; add: e2 = C[e2]; the middle expansion undone inside the hole
// at `hole` of the final term, giving e = C[e].
ProofTrace sandwich(const ProofTrace& exp, const ProofTrace& add,
                    const Path& hole) {
  ProofTrace t = concat(exp, add);
  return concat(std::move(t), embed(add.end, hole, reverse_trace(exp)));
}

// paths of free occurrences of y (both sorts traversed, N paths returned)
void var_paths_go(const NExprP& e, const std::string& y, Path& cur,
                  std::vector<Path>& out);
void var_paths_gop(const PExprP& p, const std::string& y, Path& cur,
                   std::vector<Path>& out) {
  if (p->kind == PKind::Dirac) {
    cur.push_back(0);
    var_paths_go(p->inner, y, cur, out);
    cur.pop_back();
  } else {
    cur.push_back(0);
    var_paths_gop(p->left, y, cur, out);
    cur.back() = 1;
    var_paths_gop(p->right, y, cur, out);
    cur.pop_back();
  }
}
void var_paths_go(const NExprP& e, const std::string& y, Path& cur,
                  std::vector<Path>& out) {
  switch (e->kind) {
    case NKind::Var:
      if (e->name == y) out.push_back(cur);
      break;
    case NKind::Prefix:
      cur.push_back(0);
      var_paths_gop(e->parg, y, cur, out);
      cur.pop_back();
      break;
    case NKind::Rec:
      if (e->name != y) {
        cur.push_back(0);
        var_paths_go(e->left, y, cur, out);
        cur.pop_back();
      }
      break;
    case NKind::Choice:
      cur.push_back(0);
      var_paths_go(e->left, y, cur, out);
      cur.back() = 1;
      var_paths_go(e->right, y, cur, out);
      cur.pop_back();
      break;
    default:
      break;
  }
}
std::vector<Path> var_paths(const NExprP& e, const std::string& y) {
  std::vector<Path> out;
  Path cur;
  var_paths_go(e, y, cur, out);
  return out;
}

struct Absorb {
  ProofTrace tr;  // e = e + added
  NExprP added;   // Var X, or tau.(comb of <F + X_i> leaves sorted by X_i)
};

Absorb absorb_set(const NExprP& e, const VarSet& v);

std::string leaf_var(const NExprP& leaf) {
  if (!is_choice(leaf) || leaf->right->kind != NKind::Var)
    throw StepError("absorb: malformed absorption branch");
  return leaf->right->name;
}

// one unguarded set per branch, each inside v, with union v
bool select_sets(const std::vector<std::vector<VarSet>>& cand, size_t i,
                 const VarSet& v, VarSet got, std::vector<VarSet>& chosen) {
  if (i == cand.size()) return got == v;
  for (const VarSet& w : cand[i]) {
    chosen[i] = w;
    VarSet next = got;
    next.insert(w.begin(), w.end());
    if (select_sets(cand, i + 1, v, std::move(next), chosen)) return true;
  }
  return false;
}

Absorb absorb_prefix(const NExprP& e, const VarSet& v) {
  if (!e->act.is_tau())
    throw StepError("absorb: visible prefix guards every variable");
  ProofTrace texp = trace_refl(e);
  int m = static_cast<int>(pleaves(e->parg).size());
  std::vector<int> ident(m);
  std::iota(ident.begin(), ident.end(), 0);
  apply_perm_psum(texp, {0}, ident);  // right comb below the prefix

  if (v.size() == 1) {
    const std::string& x = *v.begin();
    for (int k = 0; k < m; ++k) {
      Path ip = member_inner({0}, k, m);
      Absorb sub = absorb_set(n_at(texp, ip), v);
      texp = concat(std::move(texp), embed(texp.end, ip, sub.tr));
    }
    ProofTrace tadd = trace_refl(texp.end);
    push_step(tadd, {}, Axiom::T2, false);
    return {sandwich(texp, tadd, {0}), var(x)};
  }

  // pick a derivation: one unguarded set per branch, union v
  std::vector<std::vector<VarSet>> cand(m);
  for (int k = 0; k < m; ++k) {
    Path ip = member_inner({0}, k, m);
    for (const VarSet& w : unguarded_sets(n_at(texp, ip)))
      if (std::includes(v.begin(), v.end(), w.begin(), w.end()))
        cand[k].push_back(w);
    if (cand[k].empty()) throw StepError("absorb: no derivation for a branch");
  }
  std::vector<VarSet> chosen(m);
  if (!select_sets(cand, 0, v, {}, chosen))
    throw StepError("absorb: branch sets do not cover the requested set");

  for (int k = 0; k < m; ++k) {
    if (chosen[k].size() > 1) {
      Path ip = member_inner({0}, k, m);
      Absorb sub = absorb_set(n_at(texp, ip), chosen[k]);
      texp = concat(std::move(texp), embed(texp.end, ip, sub.tr));
      continue;
    }
    // single variable: expose it under a fresh inner tau step
    if (m > 1) apply_perm_psum(texp, {0}, rotate_front(k, m));
    Path ip = member_inner({0}, 0, m);
    Absorb sub = absorb_set(n_at(texp, ip), chosen[k]);
    texp = concat(std::move(texp), embed(texp.end, ip, sub.tr));
    push_step(texp, {}, Axiom::T1, false);  // member becomes <tau.<F + X>>
    Path wp = ip;                           // the fresh inner tau prefix
    Path leaf0 = wp;
    leaf0.insert(leaf0.end(), {0, 0});
    push_step(texp, leaf0, Axiom::N1, true);  // its branch <X + F>
    push_step(texp, wp, Axiom::T2, false);    // tau.<X+F> + F
    push_step(texp, wp, Axiom::N1, true);     // F + tau.<X+F>
    Path lp = wp;
    lp.insert(lp.end(), {1, 0, 0});
    push_step(texp, lp, Axiom::N1, true);     // back to <F + X>
    if (m > 1) apply_perm_psum(texp, {0}, rotate_back(k, m));
  }

  ProofTrace tadd = trace_refl(texp.end);
  push_step(tadd, {}, Axiom::T3, false);  // + tau.(+) p_k Psi_k
  // group the fresh summand's branches by variable
  std::vector<PLeaf> lv = pleaves(p_at(tadd, {1, 0}));
  std::vector<int> order(lv.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return leaf_var(lv[a].e) < leaf_var(lv[b].e);
  });
  apply_perm_psum(tadd, {1, 0}, order);
  NExprP added = n_at(tadd, {1});
  return {sandwich(texp, tadd, {0}), added};
}

// t.end = rec Y (T + F) with T = tau.(comb: h leaves <Y+G>, then the rest);
// appends steps so t.end = rec Y ((T + tau.P) + F) where P is the rest.
void drop_lemma(ProofTrace& t, int h) {
  push_step(t, {}, Axiom::R3, true);
  if (h == 1) return;
  // ((T + tau.rest) + F): recurse on tau.rest, then remove it again
  push_step(t, {0, 0}, Axiom::N1, true);
  push_step(t, {0}, Axiom::N2, false);  // (tau.rest + (T + F))
  drop_lemma(t, h - 1);
  // ((tau.rest + tau.P) + (T + F)) -> ((T + tau.rest) + (tau.P + F))
  push_step(t, {0}, Axiom::N1, true);
  push_step(t, {0}, Axiom::N2, false);
  push_step(t, {0, 1}, Axiom::N1, true);
  push_step(t, {0, 1}, Axiom::N2, false);
  push_step(t, {0}, Axiom::N2, true);
  push_step(t, {}, Axiom::R3, false);  // remove tau.rest
  push_step(t, {0}, Axiom::N2, true);  // ((T + tau.P) + F)
}

Absorb absorb_rec(const NExprP& e, const VarSet& v) {
  const std::string& y = e->name;
  if (v.count(y)) throw StepError("absorb: requested set contains the binder");
  auto fsets = unguarded_sets(e->left);
  VarSet w = v;
  bool through_binder = false;
  if (!fsets.count(w)) {
    w.insert(y);
    through_binder = true;
    if (!fsets.count(w))
      throw StepError("absorb: body has no matching unguarded set");
  }

  ProofTrace t = trace_refl(e);
  if (!through_binder) {
    Absorb sub = absorb_set(e->left, w);
    t = concat(std::move(t), embed(t.end, {0}, sub.tr));
  } else {
    // body = F + tau.Psi with Psi covering v and the binder; drop the
    // binder's branches inside the recursion
    Absorb sub = absorb_set(e->left, w);
    ProofTrace u = sub.tr;  // on the body: F = F + tau.Psi
    push_step(u, {}, Axiom::N1, true);
    std::vector<PLeaf> lv = pleaves(p_at(u, {0, 0}));
    int m = static_cast<int>(lv.size());
    std::vector<int> order;
    int h = 0;
    for (int i = 0; i < m; ++i)
      if (leaf_var(lv[i].e) == y) {
        order.push_back(i);
        ++h;
      }
    for (int i = 0; i < m; ++i)
      if (leaf_var(lv[i].e) != y) order.push_back(i);
    apply_perm_psum(u, {0, 0}, order);
    for (int i = 0; i < h; ++i) {
      Path lp = member_inner({0, 0}, i, m);
      push_step(u, lp, Axiom::N1, true);  // <Y + G>
    }
    t = concat(std::move(t), embed(t.end, {0}, u));
    drop_lemma(t, h);
    // ((T + tau.P) + F) -> ((T + F) + tau.P), then undo the expansion
    push_step(t, {0}, Axiom::N2, false);
    push_step(t, {0, 1}, Axiom::N1, true);
    push_step(t, {0}, Axiom::N2, true);
    t = concat(std::move(t), embed(t.end, {0, 0}, reverse_trace(u)));
  }

  // t: e = rec Y (F + A'); pull the fresh summand out of the recursion
  NExprP f = e->left;
  NExprP added_inner = n_at(t, {0, 1});
  ProofTrace t_pre = t;
  push_step(t, {}, Axiom::R1, true);
  ProofTrace trev = reverse_trace(t_pre);  // rec Y (F + A') = e
  for (const Path& q : var_paths(f, y)) {
    Path full{0};
    full.insert(full.end(), q.begin(), q.end());
    t = concat(std::move(t), embed(t.end, full, trev));
  }
  RewriteStep back{{0}, Axiom::R1, false};
  back.nargs["X"] = y;
  back.eargs["E"] = f;
  t.end = apply_step(t.end, back, t.premises);
  t.steps.push_back(std::move(back));

  NExprP added = n_at(t, {1});
  if (v.size() == 1 && added->kind != NKind::Var) {
    // convert the tau summand into the bare variable
    const std::string& x = *v.begin();
    ProofTrace t_net = t;  // e = e + tau.(...)
    push_step(t, {1}, Axiom::T2, false);
    push_step(t, {}, Axiom::N2, true);
    t = concat(std::move(t), embed(t.end, {0}, reverse_trace(t_net)));
    added = var(x);
  }
  return {t, added};
}

Absorb absorb_set(const NExprP& e, const VarSet& v) {
  switch (e->kind) {
    case NKind::Var: {
      if (v != VarSet{e->name})
        throw StepError("absorb: variable mismatch");
      ProofTrace t = trace_refl(e);
      push_step(t, {}, Axiom::N3, false);
      return {t, e};
    }
    case NKind::Choice: {
      bool left = unguarded_sets(e->left).count(v) != 0;
      if (!left && !unguarded_sets(e->right).count(v))
        throw StepError("absorb: neither summand derives the set");
      Absorb sub = absorb_set(left ? e->left : e->right, v);
      ProofTrace t = embed(e, {left ? 0 : 1}, sub.tr);
      if (left) {  // (F + A) + G = (F + G) + A
        push_step(t, {}, Axiom::N2, false);
        push_step(t, {1}, Axiom::N1, true);
      }
      push_step(t, {}, Axiom::N2, true);
      return {t, sub.added};
    }
    case NKind::Prefix:
      return absorb_prefix(e, v);
    case NKind::Rec:
      return absorb_rec(e, v);
    default:
      throw StepError("absorb: expression has no unguarded variables");
  }
}

}  // namespace

ProofTrace absorb_unguarded_var(const NExprP& e, const std::string& x) {
  if (!is_unguarded(e, x))
    throw StepError("absorb: '" + x + "' is not unguarded");
  return absorb_set(e, VarSet{x}).tr;
}

namespace {

// recursions not nested inside another recursion of e (e itself counts)
void toplevel_recs_n(const NExprP& e, Path& cur, std::vector<Path>& out);
void toplevel_recs_p(const PExprP& p, Path& cur, std::vector<Path>& out) {
  if (p->kind == PKind::Dirac) {
    cur.push_back(0);
    toplevel_recs_n(p->inner, cur, out);
    cur.pop_back();
  } else {
    cur.push_back(0);
    toplevel_recs_p(p->left, cur, out);
    cur.back() = 1;
    toplevel_recs_p(p->right, cur, out);
    cur.pop_back();
  }
}
void toplevel_recs_n(const NExprP& e, Path& cur, std::vector<Path>& out) {
  switch (e->kind) {
    case NKind::Rec:
      out.push_back(cur);
      break;
    case NKind::Prefix:
      cur.push_back(0);
      toplevel_recs_p(e->parg, cur, out);
      cur.pop_back();
      break;
    case NKind::Choice:
      cur.push_back(0);
      toplevel_recs_n(e->left, cur, out);
      cur.back() = 1;
      toplevel_recs_n(e->right, cur, out);
      cur.pop_back();
      break;
    default:
      break;
  }
}
std::vector<Path> toplevel_rec_paths(const NExprP& e) {
  std::vector<Path> out;
  Path cur;
  toplevel_recs_n(e, cur, out);
  return out;
}

// a sum with a nil operand somewhere in the term; bool: nil on the left
std::optional<std::pair<Path, bool>> find_zero_choice(const NExprP& root) {
  std::optional<std::pair<Path, bool>> found;
  std::function<void(const Subterm&, Path&)> go = [&](const Subterm& st,
                                                      Path& cur) {
    if (found) return;
    if (st.n) {
      const NExprP& e = st.n;
      if (is_choice(e) && is_nil(e->right)) {
        found = {{cur, false}};
        return;
      }
      if (is_choice(e) && is_nil(e->left)) {
        found = {{cur, true}};
        return;
      }
      switch (e->kind) {
        case NKind::Prefix:
          cur.push_back(0);
          go({nullptr, e->parg}, cur);
          cur.pop_back();
          break;
        case NKind::Rec:
          cur.push_back(0);
          go({e->left, nullptr}, cur);
          cur.pop_back();
          break;
        case NKind::Choice:
          cur.push_back(0);
          go({e->left, nullptr}, cur);
          cur.back() = 1;
          go({e->right, nullptr}, cur);
          cur.pop_back();
          break;
        default:
          break;
      }
    } else {
      if (st.p->kind == PKind::Dirac) {
        cur.push_back(0);
        go({st.p->inner, nullptr}, cur);
        cur.pop_back();
      } else {
        cur.push_back(0);
        go({nullptr, st.p->left}, cur);
        cur.back() = 1;
        go({nullptr, st.p->right}, cur);
        cur.pop_back();
      }
    }
  };
  Path cur;
  go({root, nullptr}, cur);
  return found;
}

void cleanup_zeros(ProofTrace& t) {
  while (!is_nil(t.end)) {
    auto z = find_zero_choice(t.end);
    if (!z) return;
    if (z->second) push_step(t, z->first, Axiom::N1, true);
    push_step(t, z->first, Axiom::N4, true);
  }
}

// index of a summand satisfying pred, or -1
int find_summand(const std::vector<NExprP>& sums,
                 const std::function<bool(const NExprP&)>& pred) {
  for (size_t i = 0; i < sums.size(); ++i)
    if (pred(sums[i])) return static_cast<int>(i);
  return -1;
}

// brings summand j of the body (path {0}) to the front, right-nested; pads
// with a nil summand when it is the only one
void isolate_summand(ProofTrace& t, int j, int n) {
  if (n == 1) {
    push_step(t, {0}, Axiom::N4, false);
    return;
  }
  std::vector<int> order = rotate_front(j, n);
  apply_perm_sum(t, {0}, order, true);
}

void merge_canonical_loops(ProofTrace& t, const std::string& x) {
  while (true) {
    std::vector<NExprP> sums = summands(t.end->left);
    int n = static_cast<int>(sums.size());
    std::vector<int> idx;
    for (int i = 0; i < n; ++i)
      if (is_canonical_loop(sums[i], x)) idx.push_back(i);
    if (idx.size() < 2) return;
    std::vector<int> order{idx[0], idx[1]};
    for (int i = 0; i < n; ++i)
      if (i != idx[0] && i != idx[1]) order.push_back(i);
    apply_perm_sum(t, {0}, order, true);
    if (n == 2) {
      push_step(t, {0}, Axiom::N3, true);
    } else {
      push_step(t, {0}, Axiom::N2, true);
      push_step(t, {0, 0}, Axiom::N3, true);
    }
  }
}

// rec X F: trace to a guarded recursion with no unguarded variable
// occurrence inside any inner recursion
ProofTrace rec_guard(const NExprP& r) {
  const std::string x = r->name;
  ProofTrace t = trace_refl(r);
  // inner recursions first, then unfolded so their unguarded variables
  // surface at the top level of the body
  for (const Path& p : toplevel_rec_paths(r->left)) {
    Path full{0};
    full.insert(full.end(), p.begin(), p.end());
    ProofTrace g = rec_guard(n_at(t, full));
    ProofTrace unfold = trace_refl(g.end);
    push_step(unfold, {}, Axiom::R1, true);
    g = concat(std::move(g), unfold);
    t = concat(std::move(t), embed(t.end, full, g));
  }

  int guardrail = 0;
  while (is_unguarded(t.end->left, x)) {
    if (++guardrail > 500)
      throw BudgetError("guarding transformation did not converge");
    std::vector<NExprP> sums = summands(t.end->left);
    int n = static_cast<int>(sums.size());
    int j = find_summand(sums, [&](const NExprP& s) { return is_var(s, x); });
    if (j >= 0) {  // bare X summand: R4
      isolate_summand(t, j, n);
      push_step(t, {}, Axiom::R4, true);
      continue;
    }
    j = find_summand(sums, [&](const NExprP& s) {
      return s->kind == NKind::Prefix && s->act.is_tau() &&
             !is_canonical_loop(s, x) && is_unguarded(s, x);
    });
    if (j < 0) break;  // only the canonical tau.<X> loop remains
    isolate_summand(t, j, n);
    // comb-normalize the branches and absorb X into each of them
    int m = static_cast<int>(pleaves(p_at(t, {0, 0, 0})).size());
    std::vector<int> ident(m);
    std::iota(ident.begin(), ident.end(), 0);
    apply_perm_psum(t, {0, 0, 0}, ident);
    for (int k = 0; k < m; ++k) {
      Path ip = member_inner({0, 0, 0}, k, m);
      NExprP fk = n_at(t, ip);
      if (is_var(fk, x)) {
        push_step(t, ip, Axiom::N4, false);  // X + 0
      } else {
        t = concat(std::move(t), embed(t.end, ip,
                                       absorb_unguarded_var(fk, x)));
        push_step(t, ip, Axiom::N1, true);  // X + F
      }
    }
    push_step(t, {}, Axiom::R6, true);
    merge_canonical_loops(t, x);
  }

  merge_canonical_loops(t, x);
  std::vector<NExprP> sums = summands(t.end->left);
  int j = find_summand(sums, [&](const NExprP& s) {
    return is_canonical_loop(s, x);
  });
  if (j >= 0) {
    isolate_summand(t, j, static_cast<int>(sums.size()));
    push_step(t, {}, Axiom::R5, true);
  }
  if (is_unguarded(t.end->left, x))
    throw StepError("guarding transformation left the binder unguarded");
  return t;
}

}  // namespace

GuardResult guard_transform(const NExprP& e) {
  if (is_guarded_expr(e)) return {e, trace_refl(e)};
  ProofTrace t = trace_refl(e);
  for (const Path& p : toplevel_rec_paths(e))
    t = concat(std::move(t), embed(t.end, p, rec_guard(n_at(t, p))));
  cleanup_zeros(t);
  if (!is_guarded_expr(t.end))
    throw StepError("guarding transformation failed to converge");
  return {t.end, t};
}

}  // namespace paw
