// Equation systems and the completeness pipeline. The file is organised
// bottom-up: SES basics and the induced automaton; stationary policy
// enumeration with exact outcome computation; the finite transition-tree
// representation and its algebra (shortcut / linearise); the proof-trace
// toolkit for sum surgery (combined-summand derivation via C, psum
// normalisation); then the pipeline stages: characterise, saturate, join,
// solve_unique and prove_equal.
#include "paw/eqsys.hh"

#include <algorithm>
#include <array>
#include <functional>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "paw/equiv.hh"
#include "paw/errors.hh"
#include "paw/guard.hh"
#include "paw/lp.hh"

namespace paw {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw SesError(msg); }

// ---- small exact linear algebra -------------------------------------------

// Solves A x = b by Gaussian elimination; A is square and must be regular.
std::vector<Rat> solve_linear(std::vector<std::vector<Rat>> a,
                              std::vector<Rat> b) {
  size_t n = a.size();
  for (size_t col = 0; col < n; ++col) {
    size_t piv = col;
    while (piv < n && a[piv][col] == Rat(0)) ++piv;
    if (piv == n) fail("singular linear system in tree evaluation");
    std::swap(a[piv], a[col]);
    std::swap(b[piv], b[col]);
    Rat inv = Rat(1) / a[col][col];
    for (size_t j = col; j < n; ++j) a[col][j] *= inv;
    b[col] *= inv;
    for (size_t r = 0; r < n; ++r) {
      if (r == col || a[r][col] == Rat(0)) continue;
      Rat f = a[r][col];
      for (size_t j = col; j < n; ++j) a[r][j] -= f * a[col][j];
      b[r] -= f * b[col];
    }
  }
  return b;
}

// ---- def shape helpers ----------------------------------------------------

bool is_nil(const NExprP& e) { return e->kind == NKind::Nil; }
bool is_var(const NExprP& e) { return e->kind == NKind::Var; }
bool is_prefix(const NExprP& e) { return e->kind == NKind::Prefix; }
bool is_choice(const NExprP& e) { return e->kind == NKind::Choice; }
bool is_pchoice(const PExprP& p) { return p->kind == PKind::PChoice; }

// Path of summand i in a left-associated sum of n summands below pos.
Path summand_path(const Path& pos, int i, int n) {
  Path p = pos;
  for (int k = 0; k < n - 1 - i; ++k) p.push_back(0);
  if (i > 0 && n > 1) p.push_back(1);
  return p;
}

// Left-associated rebuild check: the defs invariant used throughout.
bool left_assoc(const NExprP& e) {
  return !is_choice(e) || (left_assoc(e->left) && !is_choice(e->right));
}

}  // namespace

// ---- SES basics -----------------------------------------------------------

int SES::index_of(const std::string& x) const {
  for (size_t i = 0; i < formals.size(); ++i)
    if (formals[i] == x) return static_cast<int>(i);
  return -1;
}

namespace {

// Classifies one summand of a standard def: a prefix over formals or a free
// variable. Throws on anything else when strict.
struct Summand {
  bool is_var = false;
  std::string var;          // free-variable summand
  Action act;               // prefix summand
  SubDist target;           // over formal indices
  NExprP expr;
};

std::optional<Summand> classify_summand(const SES& ses, const NExprP& s) {
  Summand out;
  out.expr = s;
  if (is_var(s)) {
    if (ses.index_of(s->name) >= 0) return std::nullopt;  // formal summand
    out.is_var = true;
    out.var = s->name;
    return out;
  }
  if (!is_prefix(s)) return std::nullopt;
  out.act = s->act;
  std::map<State, Rat> w;
  for (const PLeaf& l : pleaves(s->parg)) {
    if (!is_var(l.e)) return std::nullopt;
    int k = ses.index_of(l.e->name);
    if (k < 0) return std::nullopt;
    w[k] += l.w;
  }
  out.target = SubDist(w);
  return out;
}

std::vector<NExprP> def_summands(const SES& ses, int i) {
  if (i < 0 || i >= ses.size()) fail("equation index out of range");
  return summands(ses.defs[i]);
}

}  // namespace

std::vector<SesStep> ses_steps(const SES& ses, int i) {
  std::vector<SesStep> out;
  std::vector<NExprP> ss = def_summands(ses, i);
  if (ss.size() == 1 && is_nil(ss[0])) return out;
  for (size_t m = 0; m < ss.size(); ++m) {
    auto c = classify_summand(ses, ss[m]);
    if (!c) fail("equation " + ses.formals[i] + " is not standard");
    if (c->is_var) continue;
    out.push_back({static_cast<int>(m), c->act, c->target});
  }
  return out;
}

PA induced_pa(const SES& ses) {
  PA pa;
  for (int i = 0; i < ses.size(); ++i) pa.states.push_back(var(ses.formals[i]));
  for (int i = 0; i < ses.size(); ++i)
    for (const SesStep& st : ses_steps(ses, i))
      pa.transitions.push_back({i, st.act, st.target});
  pa.index();
  return pa;
}

namespace {

bool is_standard(const SES& ses) {
  if (ses.formals.size() != ses.defs.size() || ses.defs.empty()) return false;
  std::set<std::string> names(ses.formals.begin(), ses.formals.end());
  if (names.size() != ses.formals.size()) return false;
  for (int i = 0; i < ses.size(); ++i) {
    std::vector<NExprP> ss = summands(ses.defs[i]);
    if (ss.size() == 1 && is_nil(ss[0])) continue;
    for (const NExprP& s : ss)
      if (!classify_summand(ses, s)) return false;
  }
  return true;
}

bool is_guarded_ses(const SES& ses, const PA& pa) {
  for (int i = 0; i < ses.size(); ++i)
    if (weak_label_member(SubDist::point(i), Action::tau(), SubDist::point(i),
                          pa, false))
      return false;
  return true;
}

// ---- deterministic stationary policies ------------------------------------

struct Budget {
  long left;
  void spend(long n = 1) {
    left -= n;
    if (left < 0)
      throw BudgetError("policy enumeration budget exceeded");
  }
};

// choice[s]: -1 stop, otherwise an index into pa.steps_from(s, tau).
using DetPolicy = std::vector<int>;

// Outcome of running the policy from start: stopped mass per state. Mass
// trapped in states that cannot reach a stopping state is dropped.
SubDist det_outcome(const DetPolicy& c, const SubDist& start, const PA& pa) {
  int n = static_cast<int>(pa.size());
  std::vector<std::vector<int>> rev(n);
  std::vector<int> tidx(n, -1);
  for (int s = 0; s < n; ++s) {
    if (c[s] < 0) continue;
    tidx[s] = pa.steps_from(s, Action::tau())[c[s]];
    for (auto& [t, w] : pa.transitions[tidx[s]].to.weights()) rev[t].push_back(s);
  }
  // states that reach a stop under the policy
  std::vector<bool> ok(n, false);
  std::vector<int> queue;
  for (int s = 0; s < n; ++s)
    if (c[s] < 0) {
      ok[s] = true;
      queue.push_back(s);
    }
  while (!queue.empty()) {
    int t = queue.back();
    queue.pop_back();
    for (int s : rev[t])
      if (!ok[s]) {
        ok[s] = true;
        queue.push_back(s);
      }
  }
  std::vector<int> live;
  std::vector<int> pos(n, -1);
  for (int s = 0; s < n; ++s)
    if (ok[s]) {
      pos[s] = static_cast<int>(live.size());
      live.push_back(s);
    }
  size_t m = live.size();
  // y = start + Q^T y on the live part: y[s] = total mass arriving at s
  std::vector<std::vector<Rat>> a(m, std::vector<Rat>(m, Rat(0)));
  std::vector<Rat> b(m, Rat(0));
  for (size_t r = 0; r < m; ++r) {
    a[r][r] = Rat(1);
    b[r] = start.at(live[r]);
  }
  for (int s = 0; s < n; ++s) {
    if (!ok[s] || c[s] < 0) continue;
    for (auto& [t, w] : pa.transitions[tidx[s]].to.weights())
      if (ok[t]) a[pos[t]][pos[s]] -= w;
  }
  std::vector<Rat> y = solve_linear(a, b);
  std::map<State, Rat> out;
  for (size_t r = 0; r < m; ++r)
    if (c[live[r]] < 0 && y[r] != Rat(0)) out[live[r]] = y[r];
  return SubDist(out);
}

StationaryPolicy det_to_policy(const DetPolicy& c, const PA& pa) {
  StationaryPolicy theta;
  for (size_t s = 0; s < c.size(); ++s)
    if (c[s] >= 0)
      theta[static_cast<State>(s)] =
          pa.transitions[pa.steps_from(static_cast<State>(s), Action::tau())[c[s]]].to;
  return theta;
}

void for_each_det_policy(const PA& pa, Budget& budget,
                         const std::function<void(const DetPolicy&)>& fn) {
  int n = static_cast<int>(pa.size());
  DetPolicy c(n, -1);
  std::function<void(int)> go = [&](int s) {
    if (s == n) {
      budget.spend();
      fn(c);
      return;
    }
    int k = static_cast<int>(pa.steps_from(s, Action::tau()).size());
    for (int pick = -1; pick < k; ++pick) {
      c[s] = pick;
      go(s + 1);
    }
  };
  go(0);
}

// Vertex targets of the reflexive silent relation from each start state,
// with a witnessing policy kept for tree construction.
struct SilentVertex {
  DetPolicy policy;
  SubDist target;
};

std::vector<SilentVertex> silent_vertices(State s, const PA& pa,
                                          Budget& budget) {
  std::vector<SilentVertex> out;
  std::set<SubDist> seen;
  for_each_det_policy(pa, budget, [&](const DetPolicy& c) {
    SubDist t = det_outcome(c, SubDist::point(s), pa);
    if (seen.insert(t).second) out.push_back({c, t});
  });
  return out;
}

// One vertex of the non-idling weak transition =>alpha from delta_s:
// a silent pre-phase, one alpha transition per intermediate state, and a
// silent post-phase.
struct LabelVertex {
  DetPolicy pre;
  std::map<State, int> move;  // state -> transition index (global)
  DetPolicy post;
  SubDist mid;                // after the pre-phase
  SubDist hit;                // after the alpha step
  SubDist target;
};

void for_each_label_vertex(State s, const Action& alpha, const PA& pa,
                           Budget& budget,
                           const std::function<void(const LabelVertex&)>& fn) {
  // Pre-phase vertices. For tau the whole relation is => -->tau => (no
  // idling); visible actions coincide with their hat variant.
  std::vector<SilentVertex> pre = silent_vertices(s, pa, budget);
  for (const SilentVertex& pv : pre) {
    std::vector<State> supp;
    for (auto& [t, w] : pv.target.weights()) supp.push_back(t);
    std::vector<std::vector<int>> options;
    bool possible = true;
    for (State t : supp) {
      std::vector<int> steps = pa.steps_from(t, alpha);
      if (steps.empty()) {
        possible = false;
        break;
      }
      options.push_back(steps);
    }
    if (!possible || supp.empty()) continue;
    std::vector<size_t> pick(supp.size(), 0);
    while (true) {
      budget.spend();
      LabelVertex v;
      v.pre = pv.policy;
      v.mid = pv.target;
      std::map<State, Rat> hit;
      for (size_t i = 0; i < supp.size(); ++i) {
        int tr = options[i][pick[i]];
        v.move[supp[i]] = tr;
        for (auto& [u, w] : pa.transitions[tr].to.weights())
          hit[u] += pv.target.at(supp[i]) * w;
      }
      v.hit = SubDist(hit);
      // post-phase: independent silent vertices mixed per state are all
      // reachable by one stationary policy since states are disjoint
      for_each_det_policy(pa, budget, [&](const DetPolicy& c) {
        LabelVertex w = v;
        w.post = c;
        w.target = det_outcome(c, v.hit, pa);
        fn(w);
      });
      size_t i = 0;
      while (i < pick.size() && ++pick[i] == options[i].size()) pick[i++] = 0;
      if (i == pick.size()) break;
    }
  }
}

bool saturated_clause_one(const SES& ses, const PA& pa, Budget& budget) {
  std::set<Action> actions{Action::tau()};
  for (const Transition& t : pa.transitions) actions.insert(t.act);
  for (int i = 0; i < ses.size(); ++i) {
    for (const Action& a : actions) {
      bool ok = true;
      for_each_label_vertex(i, a, pa, budget, [&](const LabelVertex& v) {
        if (ok && !combined_step(SubDist::point(i), a, v.target, pa)) ok = false;
      });
      if (!ok) return false;
    }
  }
  return true;
}

std::set<std::string> system_vars(const SES& ses) {
  std::set<std::string> vs;
  for (const NExprP& d : ses.defs)
    for (const std::string& v : free_vars(d))
      if (ses.index_of(v) < 0) vs.insert(v);
  return vs;
}

std::set<int> var_summand_states(const SES& ses, const std::string& v) {
  std::set<int> out;
  for (int i = 0; i < ses.size(); ++i)
    for (const NExprP& s : summands(ses.defs[i]))
      if (is_var(s) && s->name == v) out.insert(i);
  return out;
}

bool saturated_clause_two(const SES& ses, const PA& pa, Budget& budget) {
  std::set<std::string> vs = system_vars(ses);
  if (vs.empty()) return true;
  for (int i = 0; i < ses.size(); ++i) {
    std::vector<SilentVertex> verts = silent_vertices(i, pa, budget);
    for (const std::string& v : vs) {
      std::set<int> occ = var_summand_states(ses, v);
      if (occ.count(i)) continue;
      for (const SilentVertex& sv : verts) {
        if (sv.target.empty()) continue;
        bool inside = true;
        for (auto& [t, w] : sv.target.weights())
          if (!occ.count(t)) {
            inside = false;
            break;
          }
        if (inside) return false;
      }
    }
  }
  return true;
}

}  // namespace

SesFlags validate_ses(const SES& ses, int max_policies) {
  SesFlags f;
  f.standard = is_standard(ses);
  if (!f.standard) return f;
  PA pa = induced_pa(ses);
  f.guarded = is_guarded_ses(ses, pa);
  Budget budget{max_policies};
  f.saturated = saturated_clause_one(ses, pa, budget) &&
                saturated_clause_two(ses, pa, budget);
  return f;
}

// ---- SES JSON -------------------------------------------------------------

std::string SES::to_json() const {
  nlohmann::json j;
  j["formals"] = formals;
  nlohmann::json defs_j = nlohmann::json::array();
  for (const NExprP& d : defs) defs_j.push_back(pretty(d));
  j["defs"] = defs_j;
  SesFlags f = validate_ses(*this);
  j["flags"] = {{"standard", f.standard},
                {"guarded", f.guarded},
                {"saturated", f.saturated}};
  return j.dump();
}

SES SES::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  SES s;
  s.formals = j.at("formals").get<std::vector<std::string>>();
  for (const auto& d : j.at("defs")) s.defs.push_back(parse(d.get<std::string>()));
  if (s.formals.size() != s.defs.size())
    fail("formals and defs have different lengths");
  return s;
}

// ---- transition trees -----------------------------------------------------

Rat Stt::incoming(const std::vector<State>& q) const {
  if (q.empty()) fail("empty tree node");
  if (q.size() == 1) return start.at(q[0]);
  std::vector<State> parent(q.begin(), q.end() - 1);
  auto it = node.find(parent);
  if (it == node.end()) return Rat(0);
  return it->second.at(q.back());
}

int Stt::recursions() const {
  int count = 0;
  for (const auto& [q, dist] : node) {
    std::set<State> on_path(q.begin(), q.end());
    for (auto& [t, w] : dist.weights())
      if (on_path.count(t)) ++count;
  }
  return count;
}

int Stt::tree_size() const { return static_cast<int>(node.size()) + recursions(); }

SubDist Stt::leads_to() const {
  // L(q): mass the subtree at stored node q finally stops at, absolute.
  // L(q) = (inc(q) - |node(q)|) delta_last
  //      + sum of stored-children L
  //      + sum over recursion edges of (w / inc(anc)) L(anc)
  // plus, for stopping children, their incoming mass as a Dirac. The
  // recursion edges couple the equations, so solve the linear system.
  std::vector<std::vector<State>> keys;
  std::map<std::vector<State>, int> idx;
  for (const auto& [q, d] : node) {
    idx[q] = static_cast<int>(keys.size());
    keys.push_back(q);
  }
  size_t m = keys.size();
  std::vector<std::vector<Rat>> a(m, std::vector<Rat>(m, Rat(0)));
  std::vector<std::map<State, Rat>> b(m);
  for (size_t r = 0; r < m; ++r) {
    a[r][r] = Rat(1);
    const std::vector<State>& q = keys[r];
    const SubDist& d = node.at(q);
    b[r][q.back()] += incoming(q) - mass(d);
    for (auto& [t, w] : d.weights()) {
      auto pos = std::find(q.begin(), q.end(), t);
      if (pos != q.end()) {
        std::vector<State> anc(q.begin(), pos + 1);
        a[r][idx.at(anc)] -= w / incoming(anc);
      } else {
        std::vector<State> child = q;
        child.push_back(t);
        if (idx.count(child))
          a[r][idx.at(child)] -= Rat(1);
        else
          b[r][t] += w;
      }
    }
  }
  // solve componentwise over the union of states appearing in b
  std::set<State> states;
  for (auto& row : b)
    for (auto& [t, w] : row) states.insert(t);
  std::map<State, Rat> total;
  for (State t : states) {
    std::vector<Rat> rhs(m);
    for (size_t r = 0; r < m; ++r) {
      auto it = b[r].find(t);
      rhs[r] = it == b[r].end() ? Rat(0) : it->second;
    }
    std::vector<Rat> l = solve_linear(a, rhs);
    for (auto& [s0, w0] : start.weights()) {
      std::vector<State> root{s0};
      if (idx.count(root)) {
        if (l[idx.at(root)] != Rat(0)) total[t] += l[idx.at(root)];
      }
    }
  }
  for (auto& [s0, w0] : start.weights())
    if (!node.count({s0})) total[s0] += w0;
  std::map<State, Rat> clean;
  for (auto& [t, w] : total)
    if (w != Rat(0)) clean[t] = w;
  return SubDist(clean);
}

void Stt::check_valid(const PA& pa) const {
  for (const auto& [q, d] : node) {
    std::set<State> seen(q.begin(), q.end());
    if (seen.size() != q.size()) fail("stored tree node is not pioneer");
    if (d.empty()) fail("stored tree node is stopping");
    Rat inc = incoming(q);
    if (inc == Rat(0)) fail("stored tree node is unreachable");
    if (q.size() > 1) {
      std::vector<State> parent(q.begin(), q.end() - 1);
      if (!node.count(parent)) fail("stored tree node has no stored parent");
    }
    if (mass(d) > inc) fail("scheduled mass exceeds incoming mass");
    if (!combined_step(SubDist::point(q.back(), mass(d)), Action::tau(), d, pa))
      fail("scheduled distribution is not a combined silent step");
  }
}

Stt tt_from_policy(const SES& ses, State start, const StationaryPolicy& theta) {
  PA pa = induced_pa(ses);
  if (start < 0 || start >= ses.size()) fail("start state out of range");
  for (const auto& [s, d] : theta) {
    if (d.empty()) continue;
    if (!combined_step(SubDist::point(s, mass(d)), Action::tau(), d, pa))
      fail("policy entry is not a scaled combined silent step");
  }
  Stt tt;
  tt.start = SubDist::point(start);
  std::function<void(const std::vector<State>&, const Rat&)> grow =
      [&](const std::vector<State>& q, const Rat& inc) {
        auto it = theta.find(q.back());
        if (it == theta.end() || it->second.empty()) return;
        SubDist sched = scale(inc, it->second);
        tt.node[q] = sched;
        std::set<State> on_path(q.begin(), q.end());
        for (auto& [t, w] : sched.weights()) {
          if (on_path.count(t)) continue;
          std::vector<State> child = q;
          child.push_back(t);
          grow(child, w);
        }
      };
  grow({start}, Rat(1));
  return tt;
}

// ---- proof-trace toolkit --------------------------------------------------

namespace {

// Accumulates rewrite steps against a running root expression.
struct Builder {
  NExprP root;
  std::vector<RewriteStep> steps;
  std::vector<ProofTrace> premises;

  void step(RewriteStep s) {
    root = apply_step(root, s, premises);
    steps.push_back(std::move(s));
  }
  void append(const ProofTrace& t) {
    if (!alpha_eq(root, t.start)) fail("trace does not continue from here");
    int shift = static_cast<int>(premises.size());
    for (const ProofTrace& p : t.premises) premises.push_back(p);
    for (RewriteStep s : t.steps) {
      if (s.premise >= 0) s.premise += shift;
      root = apply_step(root, s, premises);
      steps.push_back(std::move(s));
    }
    root = t.end;
  }
  void embed_at(const Path& pos, const ProofTrace& t) {
    append(embed(root, pos, t));
  }
  ProofTrace done(const NExprP& start) const {
    return {start, root, steps, premises};
  }
};

// View of the summand list of a left-associated sum at pos, with the
// rearrangement, duplication and C-interpolation primitives used by the
// derivations below. Every primitive restores a left-associated spine and
// keeps untouched summands in their relative order.
struct SumCtx {
  Builder& b;
  Path pos;

  std::vector<NExprP> list() const {
    return summands(subterm_at(b.root, pos)->n);
  }
  int size() const { return static_cast<int>(list().size()); }
  Path path_of(int i) const { return summand_path(pos, i, size()); }
  // the node spanning the first k summands of the n-element spine
  Path head_node(int k) const {
    int n = size();
    Path p = pos;
    for (int i = 0; i < n - k; ++i) p.push_back(0);
    return p;
  }

  // order[k] = current index of the element to be placed k-th
  void permute(const std::vector<int>& order) {
    std::vector<RewriteStep> steps;
    permute_sum(b.root, pos, order, steps);
    for (RewriteStep& s : steps) b.step(std::move(s));
  }
  // restores ascending order of `now` (now[k] = conceptual id at slot k)
  void restore(const std::vector<int>& now) {
    std::vector<int> ids = now;
    std::sort(ids.begin(), ids.end());
    std::vector<int> target;
    for (int v : ids)
      target.push_back(static_cast<int>(
          std::find(now.begin(), now.end(), v) - now.begin()));
    permute(target);
  }
  // duplicates summand i; the copy becomes the last summand
  void dup(int i) {
    int n = size();
    b.step({path_of(i), Axiom::N3, false});
    std::vector<int> order;
    for (int k = 0; k <= n; ++k)
      if (k != i + 1) order.push_back(k);
    order.push_back(i + 1);
    permute(order);
  }
  // merges identical summand j into summand i (j disappears)
  void merge(int i, int j) {
    int n = size();
    std::vector<int> order{i, j};
    for (int k = 0; k < n; ++k)
      if (k != i && k != j) order.push_back(k);
    permute(order);
    b.step({head_node(2), Axiom::N3, true});
    std::vector<int> now{i};
    for (int k = 0; k < n; ++k)
      if (k != i && k != j) now.push_back(k);
    restore(now);
  }
  // C forward between prefix summands i and j: appends a.(P_i (+p) P_j)
  void interpolate(int i, int j, const Rat& p) {
    int n = size();
    std::vector<int> order{i, j};
    for (int k = 0; k < n; ++k)
      if (k != i && k != j) order.push_back(k);
    permute(order);
    RewriteStep c{head_node(2), Axiom::C, true};
    c.rargs["p"] = p;
    b.step(std::move(c));
    std::vector<int> now{i, n, j};  // id n = the fresh interpolant
    for (int k = 0; k < n; ++k)
      if (k != i && k != j) now.push_back(k);
    restore(now);  // interpolant has the largest id: ends up last
  }
  // C backward: removes interpolant imid, with icopy/iright its endpoints
  void uninterpolate(int icopy, int imid, int iright) {
    int n = size();
    std::vector<int> order{icopy, imid, iright};
    for (int k = 0; k < n; ++k)
      if (k != icopy && k != imid && k != iright) order.push_back(k);
    permute(order);
    b.step({head_node(3), Axiom::C, false});
    std::vector<int> now{icopy, iright};
    for (int k = 0; k < n; ++k)
      if (k != icopy && k != imid && k != iright) now.push_back(k);
    restore(now);
  }
};

// Flattens the psum at pos into a right comb sorted by the members' alpha
// keys, merging alpha-equal members. The result is the canonical form used
// to compare and to reshape probabilistic arguments.
void pnorm(Builder& b, const Path& pos) {
  auto st = subterm_at(b.root, pos);
  if (!st || !st->p) fail("pnorm: not a probabilistic position");
  std::vector<PLeaf> ls = pleaves(st->p);
  size_t n = ls.size();
  if (n <= 1) return;
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::string> key(n);
  for (size_t i = 0; i < n; ++i) key[i] = alpha_key(ls[i].e);
  std::stable_sort(order.begin(), order.end(),
                   [&](int x, int y) { return key[x] < key[y]; });
  std::vector<RewriteStep> steps;
  permute_psum(b.root, pos, order, steps);
  for (RewriteStep& s : steps) b.step(std::move(s));
  Path q = pos;
  while (true) {
    PExprP t = subterm_at(b.root, q)->p;
    if (!is_pchoice(t)) break;
    if (!is_pchoice(t->right)) {
      if (alpha_eq(t->left, t->right)) b.step({q, Axiom::P3, true});
      break;
    }
    if (alpha_eq(t->left, t->right->left)) {
      b.step({q, Axiom::P2, true});
      Path ql = q;
      ql.push_back(0);
      b.step({ql, Axiom::P3, true});
    } else {
      q.push_back(1);
    }
  }
}

// Rewrites the psum at pos into the exact shape `target`; both sides must
// denote the same distribution up to alpha.
void reshape_psum(Builder& b, const Path& pos, const PExprP& target) {
  pnorm(b, pos);
  NExprP troot = replace_at(b.root, pos, {nullptr, target});
  Builder tb{troot, {}, {}};
  pnorm(tb, pos);
  if (!alpha_eq(subterm_at(b.root, pos)->p, subterm_at(tb.root, pos)->p))
    fail("psum reshape: different distributions");
  b.append(reverse_trace(ProofTrace{troot, tb.root, tb.steps, {}}));
}

// Canonical probabilistic expression for a distribution: right comb in
// ascending state order (Dirac when the support is a single state).
PExprP psum_of(const SubDist& d, const std::function<NExprP(State)>& leaf) {
  if (d.empty()) fail("empty distribution has no expression");
  std::vector<std::pair<Rat, NExprP>> parts;
  Rat total = mass(d);
  for (auto& [s, w] : d.weights()) parts.push_back({w / total, leaf(s)});
  if (parts.size() == 1) return dirac(parts[0].second);
  return psum(parts);
}

// Appends the combined summand a.(mix of the bodies of the chosen prefix
// summands) to the left-associated sum at pos. The mix runs over distinct
// summand indices with positive weights summing to one. Built by a chain of
// C interpolations over the suffix mixes B_m = P_{i_m} (+) B_{m+1}; the
// intermediates are removed again with C backward. When body_target is set,
// the new summand's body is reshaped into exactly that expression.
void add_combined(Builder& b, const Path& pos, const Action& a,
                  const std::vector<std::pair<Rat, int>>& mix,
                  const PExprP* body_target = nullptr) {
  SumCtx ctx{b, pos};
  std::vector<NExprP> ls = ctx.list();
  int n = static_cast<int>(ls.size());
  int k = static_cast<int>(mix.size());
  if (k == 0) fail("empty combination");
  {
    std::set<int> seen;
    Rat total(0);
    for (auto& [w, i] : mix) {
      if (i < 0 || i >= n || !is_prefix(ls[i]) || !(ls[i]->act == a))
        fail("combined summand over a non-matching summand");
      if (!(w > Rat(0)) || !seen.insert(i).second)
        fail("combined summand weights must be positive over distinct summands");
      total += w;
    }
    if (total != Rat(1)) fail("combined summand weights must sum to one");
  }
  std::vector<Rat> wcond(k);  // conditional weight of member m in B_m
  {
    Rat suffix(0);
    for (int m = k - 1; m >= 0; --m) {
      suffix += mix[m].first;
      wcond[m] = mix[m].first / suffix;
    }
  }
  ctx.dup(mix[k - 1].second);  // B_{k-1}: a pure copy, at index n
  for (int m = k - 2; m >= 0; --m) {
    int copy = n + (k - 1 - m);
    ctx.dup(mix[m].second);                   // copy of P_{i_m} at `copy`
    ctx.interpolate(copy, copy - 1, wcond[m]);  // B_m appended last
    ctx.merge(mix[m].second, copy);           // drop the copy again
  }
  // extras now: [B_{k-1}, ..., B_1, B_0]; drop B_1 .. B_{k-1}
  for (int m = 1; m <= k - 2; ++m) {
    int im = n + (k - 1 - m);
    ctx.dup(mix[m].second);
    ctx.uninterpolate(ctx.size() - 1, im, im - 1);
    ctx.merge(mix[m].second, ctx.size() - 1);
  }
  if (k >= 2) ctx.merge(mix[k - 1].second, n);
  if (body_target) {
    Path body = ctx.path_of(ctx.size() - 1);
    body.push_back(0);
    reshape_psum(b, body, *body_target);
  }
}

}  // namespace

// ---- characterisation -----------------------------------------------------

namespace {

// Flattens the sum at pos to a left-associated spine (identity permutation).
void flatten_sum(Builder& b, const Path& pos) {
  auto st = subterm_at(b.root, pos);
  int n = static_cast<int>(summands(st->n).size());
  if (n <= 1) return;
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<RewriteStep> steps;
  permute_sum(b.root, pos, order, steps);
  for (RewriteStep& s : steps) b.step(std::move(s));
}

// Merge plan for duplicate variable summands, computed on the definition
// side and replayed identically on the instantiated side.
std::vector<std::pair<int, int>> var_dedupe_plan(std::vector<NExprP> ls) {
  std::vector<std::pair<int, int>> plan;
  for (size_t i = 0; i < ls.size(); ++i) {
    if (!is_var(ls[i])) continue;
    for (size_t j = i + 1; j < ls.size();) {
      if (is_var(ls[j]) && ls[j]->name == ls[i]->name) {
        plan.push_back({static_cast<int>(i), static_cast<int>(j)});
        ls.erase(ls.begin() + static_cast<long>(j));
      } else {
        ++j;
      }
    }
  }
  return plan;
}

// Indices of nil summands, removed back to front.
std::vector<int> nil_removal_plan(std::vector<NExprP> ls) {
  std::vector<int> plan;
  for (size_t j = 0; j < ls.size();) {
    if (ls.size() > 1 && is_nil(ls[j])) {
      plan.push_back(static_cast<int>(j));
      ls.erase(ls.begin() + static_cast<long>(j));
    } else {
      ++j;
    }
  }
  return plan;
}

NExprP apply_cleanup_def(const NExprP& def,
                         std::vector<std::pair<int, int>>* vplan_out,
                         std::vector<int>* nplan_out) {
  std::vector<NExprP> ls = summands(def);
  std::vector<int> nplan = nil_removal_plan(ls);
  for (int j : nplan) ls.erase(ls.begin() + j);
  std::vector<std::pair<int, int>> vplan = var_dedupe_plan(ls);
  for (auto& [i, j] : vplan) ls.erase(ls.begin() + j);
  if (vplan_out) *vplan_out = vplan;
  if (nplan_out) *nplan_out = nplan;
  return sum(ls);
}

// Removes summand j (a nil) from the sum at pos.
void remove_nil(Builder& b, const Path& pos, int j) {
  SumCtx ctx{b, pos};
  int n = ctx.size();
  std::vector<int> order;
  for (int k = 0; k < n; ++k)
    if (k != j) order.push_back(k);
  order.push_back(j);
  ctx.permute(order);
  b.step({pos, Axiom::N4, true});
  std::vector<int> now;
  for (int k = 0; k < n; ++k)
    if (k != j) now.push_back(k);
  ctx.restore(now);
}

// Flatten + drop nil summands + merge duplicate variable summands, applied
// to the instantiated expression; returns the cleaned definition.
NExprP cleanup_def(Builder& b, const Path& pos, const NExprP& def) {
  flatten_sum(b, pos);
  std::vector<std::pair<int, int>> vplan;
  std::vector<int> nplan;
  NExprP out = apply_cleanup_def(def, &vplan, &nplan);
  for (int j : nplan) remove_nil(b, pos, j);
  SumCtx ctx{b, pos};
  for (auto& [i, j] : vplan) ctx.merge(i, j);
  return out;
}

struct CharCtx {
  std::vector<std::string> formals;
  std::vector<NExprP> defs;
  std::vector<NExprP> exprs;
  std::vector<ProofTrace> traces;
  std::map<std::string, int> memo;  // closed subexpressions, by alpha key
  std::set<std::string> avoid;      // names never used for formals
  int counter = 0;
  long max_states = kDefaultMaxStates;

  Bindings bindings(const std::vector<int>& eqs) const {
    Bindings bs;
    for (int j : eqs) bs.push_back({formals[j], exprs[j]});
    return bs;
  }
  Bindings bindings_all() const {
    Bindings bs;
    for (size_t j = 0; j < formals.size(); ++j)
      bs.push_back({formals[j], exprs[j]});
    return bs;
  }
  int new_eq(const NExprP& def, const NExprP& expr, ProofTrace trace) {
    if (static_cast<long>(defs.size()) >= max_states)
      throw BudgetError("characterisation exceeds the state budget");
    std::string name;
    do {
      name = "X" + std::to_string(++counter);
    } while (avoid.count(name));
    formals.push_back(name);
    defs.push_back(def);
    exprs.push_back(expr);
    traces.push_back(std::move(trace));
    return static_cast<int>(defs.size()) - 1;
  }
};

int char_rec(CharCtx& c, const NExprP& e) {
  bool closed = free_vars(e).empty();
  std::string key = closed ? alpha_key(e) : "";
  if (closed) {
    auto it = c.memo.find(key);
    if (it != c.memo.end()) return it->second;
  }
  int result = -1;
  switch (e->kind) {
    case NKind::Nil:
      result = c.new_eq(nil(), e, trace_refl(e));
      break;
    case NKind::Var:
      result = c.new_eq(var(e->name), e, trace_refl(e));
      break;
    case NKind::Prefix: {
      std::map<State, Rat> dist;
      for (const PLeaf& l : pleaves(e->parg)) dist[char_rec(c, l.e)] += l.w;
      SubDist d{dist};
      NExprP def = prefix(
          e->act, psum_of(d, [&](State k) { return var(c.formals[k]); }));
      Builder b{e, {}, {}};
      reshape_psum(b, {0}, psum_of(d, [&](State k) { return c.exprs[k]; }));
      result = c.new_eq(def, e, b.done(e));
      break;
    }
    case NKind::Choice: {
      int il = char_rec(c, e->left);
      int ir = char_rec(c, e->right);
      Builder b{e, {}, {}};
      b.embed_at({0}, c.traces[il]);
      b.embed_at({1}, c.traces[ir]);
      NExprP def = cleanup_def(b, {}, choice(c.defs[il], c.defs[ir]));
      result = c.new_eq(def, e, b.done(e));
      break;
    }
    case NKind::Rec: {
      int base = static_cast<int>(c.defs.size());
      int ib = char_rec(c, e->left);
      if (ib < base) {
        // the body landed on an equation shared with other subterms, so it
        // is closed and the binder vacuous: unfold onto the body and keep a
        // separate equation for this expression
        Builder cb{e, {}, {}};
        cb.step({{}, Axiom::R1, true});
        cb.append(c.traces[ib]);
        result = c.new_eq(c.defs[ib], e, cb.done(e));
        break;
      }
      const std::string& x = e->name;
      if (free_vars(c.defs[ib]).count(x))
        fail("characterisation: binder reaches its own equation unguarded");
      // the distinguished body definition, instantiated with the updated
      // solution expressions, is provably equal to the rec expression
      Bindings to_e{{x, e}};
      NExprP body_def = c.defs[ib];
      for (int j = base; j < static_cast<int>(c.defs.size()); ++j)
        c.exprs[j] = substitute(c.exprs[j], to_e);
      Builder cb{e, {}, {}};
      RewriteStep unfold{{}, Axiom::R1, true};
      cb.step(std::move(unfold));
      cb.append(subst_trace(c.traces[ib], to_e));
      ProofTrace ct = cb.done(e);
      for (int j = base; j < static_cast<int>(c.defs.size()); ++j) {
        if (j == ib) continue;
        ProofTrace t = subst_trace(c.traces[j], to_e);
        if (free_vars(c.defs[j]).count(x)) {
          // substitute the distinguished definition for the binder's
          // variable summands, proving each replacement with ct
          Builder b{t.end, {}, {}};
          std::function<void(const NExprP&, Path&)> walk =
              [&](const NExprP& d, Path& p) {
                if (is_var(d) && d->name == x) {
                  b.embed_at(p, ct);
                } else if (is_choice(d)) {
                  p.push_back(0);
                  walk(d->left, p);
                  p.back() = 1;
                  walk(d->right, p);
                  p.pop_back();
                }
              };
          Path p;
          walk(c.defs[j], p);
          NExprP def = substitute(c.defs[j], {{x, body_def}});
          def = cleanup_def(b, {}, def);
          c.defs[j] = def;
          Builder whole{t.start, {}, {}};
          whole.append(t);
          whole.append(b.done(t.end));
          c.traces[j] = whole.done(t.start);
        } else {
          c.traces[j] = t;
        }
      }
      c.exprs[ib] = e;
      c.traces[ib] = ct;
      // the equation no longer answers for the bare body expression
      std::erase_if(c.memo, [&](const auto& kv) { return kv.second == ib; });
      result = ib;
      break;
    }
  }
  if (closed) c.memo[key] = result;
  return result;
}

}  // namespace

std::pair<SES, Solution> characterise(const NExprP& e, long max_states) {
  if (!is_guarded_expr(e)) fail("characterise: expression is not guarded");
  CharCtx c;
  c.avoid = free_vars(e);
  c.max_states = max_states;
  int top = char_rec(c, e);

  // keep the equations reachable from the distinguished one
  std::set<int> alive;
  std::vector<int> queue{top};
  alive.insert(top);
  auto refs = [&](int i) {
    std::vector<int> out;
    for (const std::string& v : free_vars(c.defs[i])) {
      auto it = std::find(c.formals.begin(), c.formals.end(), v);
      if (it != c.formals.end())
        out.push_back(static_cast<int>(it - c.formals.begin()));
    }
    return out;
  };
  while (!queue.empty()) {
    int i = queue.back();
    queue.pop_back();
    for (int j : refs(i))
      if (alive.insert(j).second) queue.push_back(j);
  }

  // merge equations with identical definitions and alpha-equal solutions
  bool changed = true;
  while (changed) {
    changed = false;
    std::vector<int> live(alive.begin(), alive.end());
    for (size_t a = 0; a < live.size() && !changed; ++a) {
      for (size_t bx = a + 1; bx < live.size() && !changed; ++bx) {
        int i = live[a], j = live[bx];
        if (j == top) std::swap(i, j);
        if (!alpha_eq(c.defs[i], c.defs[j]) || !alpha_eq(c.exprs[i], c.exprs[j]))
          continue;
        Bindings ren{{c.formals[j], var(c.formals[i])}};
        for (int k : live)
          c.defs[k] = substitute(c.defs[k], ren);
        alive.erase(j);
        changed = true;
      }
    }
  }

  // breadth-first renumbering from the distinguished equation
  std::vector<int> order;
  std::set<int> seen{top};
  order.push_back(top);
  for (size_t h = 0; h < order.size(); ++h)
    for (int j : refs(order[h]))
      if (alive.count(j) && seen.insert(j).second) order.push_back(j);

  SES ses;
  Solution sol;
  std::set<std::string> avoid = c.avoid;
  Bindings ren;
  for (size_t k = 0; k < order.size(); ++k) {
    // sequential names X1..Xn unless they clash with free variables
    std::string name = "X" + std::to_string(k + 1);
    while (avoid.count(name)) name += "'";
    ses.formals.push_back(name);
    ren.push_back({c.formals[order[k]], var(name)});
  }
  for (int i : order) {
    ses.defs.push_back(substitute(c.defs[i], ren));
    sol.exprs.push_back(c.exprs[i]);
  }
  Bindings bs;
  for (size_t m = 0; m < order.size(); ++m)
    bs.push_back({ses.formals[m], sol.exprs[m]});
  for (size_t k = 0; k < order.size(); ++k) {
    ProofTrace t = c.traces[order[k]];
    t.end = substitute(ses.defs[k], bs);
    sol.traces.push_back(std::move(t));
  }
  return {ses, sol};
}

// ---- shortcut and linearise ----------------------------------------------

namespace {

Bindings bindings_of(const SES& ses, const Solution& sol) {
  Bindings bs;
  for (int i = 0; i < ses.size(); ++i)
    bs.push_back({ses.formals[i], sol.exprs[i]});
  return bs;
}

// Convex decomposition of mu over the a-summand targets of equation i.
std::vector<std::pair<Rat, int>> mix_for(const SES& ses, int i,
                                         const Action& a, const SubDist& mu) {
  std::vector<SesStep> steps;
  for (SesStep& st : ses_steps(ses, i))
    if (st.act == a) steps.push_back(std::move(st));
  if (steps.empty()) fail("no summand to combine over");
  LP lp;
  std::vector<int> lam;
  for (size_t j = 0; j < steps.size(); ++j) lam.push_back(lp.add_var());
  std::set<State> states;
  for (auto& [s, w] : mu.weights()) states.insert(s);
  for (auto& st : steps)
    for (auto& [s, w] : st.target.weights()) states.insert(s);
  Rat total = mass(mu);
  for (State s : states) {
    LinRow row;
    for (size_t j = 0; j < steps.size(); ++j) {
      Rat c = steps[j].target.at(s);
      if (c != Rat(0)) row.push_back({lam[j], c});
    }
    lp.add_eq(row, mu.at(s) / total);
  }
  LinRow one;
  for (int v : lam) one.push_back({v, Rat(1)});
  lp.add_eq(one, Rat(1));
  auto res = lp.solve();
  if (!res) fail("scheduled step is not a combination of the summands");
  std::vector<std::pair<Rat, int>> mix;
  for (size_t j = 0; j < steps.size(); ++j)
    if ((*res)[lam[j]] != Rat(0))
      mix.push_back({(*res)[lam[j]], steps[j].summand});
  return mix;
}

NExprP def_with(const NExprP& def, const NExprP& extra) {
  std::vector<NExprP> ls = summands(def);
  ls.push_back(extra);
  return sum(ls);
}

bool has_summand(const NExprP& def, const NExprP& s) {
  for (const NExprP& t : summands(def))
    if (alpha_eq(t, s)) return true;
  return false;
}


// Paths to the expressions inside the dirac leaves of the psum at pos, in
// left-to-right order.
std::vector<Path> leaf_paths(const NExprP& root, const Path& pos) {
  std::vector<Path> out;
  std::function<void(const PExprP&, Path)> walk = [&](const PExprP& t,
                                                      Path p) {
    if (is_pchoice(t)) {
      Path l = p, r = p;
      l.push_back(0);
      r.push_back(1);
      walk(t->left, l);
      walk(t->right, r);
    } else {
      p.push_back(0);
      out.push_back(std::move(p));
    }
  };
  walk(subterm_at(root, pos)->p, pos);
  return out;
}

// Rewrites leaf m of the n-leaf body of the prefix at pos from <E> into
// <0 + tau.<E>>, leaving the leaf order unchanged.
void wrap_idle(Builder& b, const Path& pos, int m, int n) {
  Path body = pos;
  body.push_back(0);
  std::vector<RewriteStep> steps;
  if (n > 1) {
    std::vector<int> to_front{m};
    for (int k = 0; k < n; ++k)
      if (k != m) to_front.push_back(k);
    permute_psum(b.root, body, to_front, steps);
    for (RewriteStep& s : steps) b.step(std::move(s));
  }
  b.step({pos, Axiom::T1, false});
  Path inner = pos;
  inner.push_back(0);
  if (n > 1) inner.push_back(0);
  inner.push_back(0);
  b.step({inner, Axiom::N4, false});
  b.step({inner, Axiom::N1, true});
  if (n > 1) {
    std::vector<int> back;
    for (int k = 1; k <= m; ++k) back.push_back(k);
    back.push_back(0);
    for (int k = m + 1; k < n; ++k) back.push_back(k);
    steps.clear();
    permute_psum(b.root, body, back, steps);
    for (RewriteStep& s : steps) b.step(std::move(s));
  }
}

// Satisfaction trace for equation i of the augmented system, deriving the
// extra summand tau.(+) sigma by jumping over the intermediate state t: the
// continuing part cont of the step into t is replayed after entering t.
ProofTrace augment_via_jump(const SES& ses, const Solution& sol, int i,
                            const SubDist& sched, State t, const SubDist& cont,
                            const SubDist& sigma) {
  auto leaf = [&](State s) { return sol.exprs[s]; };
  NExprP send = sol.traces[i].end;
  Rat wp = mass(sched), wq = mass(cont);
  Rat c = wq / wp;
  SubDist rest = sub(sched, SubDist::point(t, wq));
  PExprP scaffold_body =
      rest.empty() ? dirac(sol.exprs[t])
                   : pchoice(c, dirac(sol.exprs[t]), psum_of(rest, leaf));
  Builder db{send, {}, {}};
  add_combined(db, {}, Action::tau(), mix_for(ses, i, Action::tau(), sched),
               &scaffold_body);
  ProofTrace t_dct = db.done(send);

  // scaffold mutations, built on the new summand alone
  NExprP scaf = prefix(Action::tau(), scaffold_body);
  Builder sb{scaf, {}, {}};
  int nrest = static_cast<int>(rest.support().size());
  for (int m = 1; m <= nrest; ++m) wrap_idle(sb, {}, m, nrest + 1);
  Path leafp = nrest ? Path{0, 0, 0} : Path{0, 0};
  sb.embed_at(leafp, sol.traces[t]);
  PExprP phi = psum_of(cont, leaf);
  add_combined(sb, leafp, Action::tau(), mix_for(ses, t, Action::tau(), cont),
               &phi);
  ProofTrace t_sc = sb.done(scaf);

  Builder b{sol.exprs[i], {}, {}};
  b.append(sol.traces[i]);
  b.append(t_dct);
  b.embed_at({1}, t_sc);
  b.step({{1}, Axiom::T3, false});
  b.step({{}, Axiom::N2, true});
  reshape_psum(b, {1, 0}, psum_of(sigma, leaf));
  b.embed_at({0, 1}, reverse_trace(t_sc));
  b.embed_at({0}, reverse_trace(t_dct));
  return b.done(sol.exprs[i]);
}

// Satisfaction trace deriving the loop-free summand tau.(+) rho for
// equation i whose scheduled silent step sched loops back into i itself.
ProofTrace augment_via_loop(const SES& ses, const Solution& sol, int i,
                            const SubDist& sched, const SubDist& rho) {
  auto leaf = [&](State s) { return sol.exprs[s]; };
  NExprP send = sol.traces[i].end;
  Rat self = sched.at(i);
  Rat pp = self / mass(sched);
  PExprP pb_rho = psum_of(rho, leaf);
  PExprP body_t = pchoice(pp, dirac(sol.exprs[i]), pb_rho);
  Builder db{send, {}, {}};
  add_combined(db, {}, Action::tau(), mix_for(ses, i, Action::tau(), sched),
               &body_t);
  ProofTrace t0 = db.done(send);

  Builder pb{sol.exprs[i], {}, {}};
  pb.append(sol.traces[i]);
  pb.append(t0);
  NExprP f = pb.root;
  std::string x = fresh_var("Z", {f}, {});
  NExprP bexpr = replace_at(f, {1, 0, 0, 0}, {var(x), nullptr});
  ProofTrace to_f = pb.done(sol.exprs[i]);
  Builder prb{f, {}, {}};
  prb.embed_at({1, 0, 0, 0}, to_f);
  ProofTrace prem = prb.done(f);
  RewriteStep r2{{}, Axiom::R2, true};
  r2.nargs["X"] = x;
  r2.eargs["E"] = bexpr;
  r2.premise = static_cast<int>(pb.premises.size());
  pb.premises.push_back(prem);
  pb.step(std::move(r2));
  pb.step({{0}, Axiom::N1, true});
  pb.step({{0, 0, 0, 0, 0}, Axiom::N4, false});
  pb.step({{}, Axiom::R3, true});
  ProofTrace t_pre = pb.done(sol.exprs[i]);

  Builder b{sol.exprs[i], {}, {}};
  b.append(t_pre);
  b.step({{}, Axiom::R1, true});
  b.step({{0, 0, 0, 0, 0}, Axiom::N4, true});
  b.embed_at({0, 0, 0, 0, 0}, reverse_trace(t_pre));
  SumCtx ctx{b, {}};
  int n = ctx.size();
  std::vector<int> order;
  for (int k = 2; k < n; ++k) order.push_back(k);
  order.push_back(0);
  order.push_back(1);
  ctx.permute(order);
  b.embed_at({0}, reverse_trace(t0));
  return b.done(sol.exprs[i]);
}

void require_node(const Stt& tt, const std::vector<State>& q) {
  if (!tt.node.count(q)) fail("tree surgery: node is not stored");
}

}  // namespace

SesUpdate shortcut(const SES& ses, const Stt& tt,
                   const std::vector<State>& q, const Solution& sol) {
  require_node(tt, q);
  if (q.size() < 2) fail("shortcut: node must lie below the root");
  State t = q.back();
  std::vector<State> p(q.begin(), q.end() - 1);
  State i = p.back();
  for (auto& [r, d] : tt.node) {
    if (r.size() < q.size()) continue;
    if (!std::equal(q.begin(), q.end(), r.begin())) continue;
    if (d.at(t) != Rat(0)) fail("shortcut: a recursion edge targets the node");
  }
  const SubDist& thp = tt.node.at(p);
  const SubDist& thq = tt.node.at(q);
  Rat wq = mass(thq);
  SubDist sigma = add(sub(thp, SubDist::point(t, wq)), thq);

  SesUpdate up;
  up.ses = ses;
  up.sol = sol;
  NExprP extra = prefix(Action::tau(),
                        psum_of(sigma, [&](State s) { return var(ses.formals[s]); }));
  if (!has_summand(ses.defs[i], extra)) {
    up.ses.defs[i] = def_with(ses.defs[i], extra);
    ProofTrace tr = augment_via_jump(ses, sol, i, thp, t, thq, sigma);
    tr.end = substitute(up.ses.defs[i], bindings_of(up.ses, sol));
    up.sol.traces[i] = std::move(tr);
  }

  up.tt.start = tt.start;
  for (auto& [r, d] : tt.node) {
    if (r.size() >= q.size() && std::equal(q.begin(), q.end(), r.begin())) {
      if (r == q) continue;
      std::vector<State> nr = p;
      nr.insert(nr.end(), r.begin() + static_cast<long>(q.size()), r.end());
      auto [it, fresh] = up.tt.node.insert({nr, d});
      if (!fresh) it->second = add(it->second, d);
    } else if (r != p) {
      auto [it, fresh] = up.tt.node.insert({r, d});
      if (!fresh) it->second = add(it->second, d);
    }
  }
  auto [it, fresh] = up.tt.node.insert({p, sigma});
  if (!fresh) it->second = add(it->second, sigma);
  return up;
}

SesUpdate linearise(const SES& ses, const Stt& tt,
                    const std::vector<State>& q, const Solution& sol) {
  require_node(tt, q);
  State i = q.back();
  const SubDist& thq = tt.node.at(q);
  Rat self = thq.at(i);
  if (self == Rat(0)) fail("linearise: the node has no self edge");
  SubDist rho = sub(thq, SubDist::point(i, self));

  SesUpdate up;
  up.ses = ses;
  up.sol = sol;
  up.tt.start = tt.start;
  if (rho.empty()) {
    // the silent step was a pure self loop: the node simply stops
    for (auto& [r, d] : tt.node)
      if (r != q) up.tt.node.insert({r, d});
    return up;
  }
  NExprP extra = prefix(Action::tau(),
                        psum_of(rho, [&](State s) { return var(ses.formals[s]); }));
  if (!has_summand(ses.defs[i], extra)) {
    up.ses.defs[i] = def_with(ses.defs[i], extra);
    ProofTrace tr = augment_via_loop(ses, sol, i, thq, rho);
    tr.end = substitute(up.ses.defs[i], bindings_of(up.ses, sol));
    up.sol.traces[i] = std::move(tr);
  }

  Rat inc = tt.incoming(q);
  Rat lambda = inc / (inc - self);
  for (auto& [r, d] : tt.node) {
    if (r == q) {
      up.tt.node.insert({r, scale(lambda, rho)});
    } else if (r.size() > q.size() &&
               std::equal(q.begin(), q.end(), r.begin())) {
      up.tt.node.insert({r, scale(lambda, d)});
    } else {
      up.tt.node.insert({r, d});
    }
  }
  return up;
}

// ---- saturation -----------------------------------------------------------

namespace {

// Any summand of equation i with the given action and target.
int summand_for(const SES& ses, int i, const Action& a, const SubDist& d) {
  for (const SesStep& st : ses_steps(ses, i))
    if (st.act == a && st.target == d) return st.summand;
  fail("no summand with the required action and target");
}

int var_summand_index(const SES& ses, int i, const std::string& v) {
  std::vector<NExprP> ls = summands(ses.defs[i]);
  for (size_t k = 0; k < ls.size(); ++k)
    if (is_var(ls[k]) && ls[k]->name == v) return static_cast<int>(k);
  fail("no variable summand " + v);
}

// Standalone trace S_i[E] -> S_i[E] + scaffold, where the scaffold is the
// combined summand tau.(+) d over the equations of supp d, with each member
// branch rewritten by `mutate` (branch k at the given leaf path).
ProofTrace scaffold_trace(const SES& ses, const Solution& sol, int i,
                          const SubDist& d,
                          const std::function<void(Builder&, const Path&,
                                                   State)>& mutate,
                          ProofTrace* t_dct_out) {
  auto leaf = [&](State s) { return sol.exprs[s]; };
  NExprP send = sol.traces[i].end;
  PExprP psi = psum_of(d, leaf);
  Builder db{send, {}, {}};
  add_combined(db, {}, Action::tau(), mix_for(ses, i, Action::tau(), d), &psi);
  *t_dct_out = db.done(send);

  NExprP scaf = prefix(Action::tau(), psi);
  Builder sb{scaf, {}, {}};
  std::vector<Path> lps = leaf_paths(scaf, {0});
  std::set<State> supp = d.support();
  std::vector<State> states(supp.begin(), supp.end());
  for (size_t m = 0; m < states.size(); ++m)
    mutate(sb, lps[m], states[m]);
  return sb.done(scaf);
}

// Arranges the branch at pos (currently the expression of state k) into the
// shape choice(rest, chosen summand): embeds the satisfaction trace and
// moves summand `last` to the end, padding single-summand equations with 0.
void branch_arrange(Builder& b, const Path& pos, const ProofTrace& w,
                    int last, int nsum) {
  b.embed_at(pos, w);
  if (nsum == 1) {
    b.step({pos, Axiom::N4, false});
    b.step({pos, Axiom::N1, true});
  } else if (last != nsum - 1) {
    SumCtx bc{b, pos};
    std::vector<int> order;
    for (int k = 0; k < nsum; ++k)
      if (k != last) order.push_back(k);
    order.push_back(last);
    bc.permute(order);
  }
}

// Satisfaction trace adding the summand alpha.(+) nu to equation i, fusing a
// silent pre-phase d1, one alpha summand per intermediate state, and silent
// post-phases d3 into a single strong step. ses and sol are the system after
// all tree reductions; the new summand is not part of ses yet.
ProofTrace fuse_step(const SES& ses, const Solution& sol, int i,
                     const Action& alpha, const SubDist& d1,
                     const std::map<State, int>& chosen,
                     const std::map<State, SubDist>& d3, const SubDist& nu) {
  auto leaf = [&](State s) { return sol.exprs[s]; };
  NExprP send = sol.traces[i].end;
  int n0 = static_cast<int>(summands(ses.defs[i]).size());
  Rat idle = Rat(1) - mass(d1);

  // after the pre-phase and the alpha step
  std::map<State, Rat> mu2w;
  auto shoot = [&](State k, const Rat& w) {
    for (const SesStep& st : ses_steps(ses, k))
      if (st.summand == chosen.at(k))
        for (auto& [u, gw] : st.target.weights()) mu2w[u] += w * gw;
  };
  for (auto& [k, w] : d1.weights()) shoot(k, w);
  if (idle != Rat(0)) shoot(i, idle);
  SubDist mu2{mu2w};

  Builder b{send, {}, {}};
  ProofTrace t_sc, t_dct;
  if (d1.empty()) {
    SumCtx ctx{b, {}};
    ctx.dup(chosen.at(i));
  } else {
    t_sc = scaffold_trace(
        ses, sol, i, d1,
        [&](Builder& sb, const Path& lp, State k) {
          branch_arrange(sb, lp, sol.traces[k], chosen.at(k),
                         static_cast<int>(summands(ses.defs[k]).size()));
        },
        &t_dct);
    b.append(t_dct);
    b.embed_at({1}, t_sc);
    b.step({{1}, Axiom::T3, false});
    b.step({{}, Axiom::N2, true});
    SumCtx ctx{b, {}};
    if (idle != Rat(0)) {
      ctx.dup(chosen.at(i));
      ctx.interpolate(n0 + 2, n0 + 1, idle);
      ctx.merge(chosen.at(i), n0 + 2);
      std::vector<int> order{n0, n0 + 1};
      for (int k = 0; k < n0; ++k) order.push_back(k);
      order.push_back(n0 + 2);
      ctx.permute(order);
      b.step({ctx.head_node(2), Axiom::T3, true});
      std::vector<int> back;
      for (int k = 1; k <= n0; ++k) back.push_back(k);
      back.push_back(0);
      back.push_back(n0 + 1);
      ctx.permute(back);
    }
    b.embed_at(ctx.path_of(n0), reverse_trace(t_sc));
    b.embed_at({0}, reverse_trace(t_dct));
  }
  ProofTrace t_step1 = b.done(send);

  // split the working summand per state into moving and idling parts and
  // push the post-phases inside
  NExprP wexpr = subterm_at(b.root, {1})->n;
  Builder wb{wexpr, {}, {}};
  struct Part {
    State t;
    bool moving;
    Rat w;
  };
  std::vector<Part> parts;
  for (auto& [t, w] : mu2.weights()) {
    Rat cont = d3.count(t) ? mass(d3.at(t)) : Rat(0);
    if (cont != Rat(0)) parts.push_back({t, true, w * cont});
    if (cont != Rat(1)) parts.push_back({t, false, w * (Rat(1) - cont)});
  }
  {
    std::vector<std::pair<Rat, NExprP>> shape;
    for (const Part& pt : parts) shape.push_back({pt.w, leaf(pt.t)});
    PExprP target0 =
        shape.size() == 1 ? dirac(shape[0].second) : psum(shape);
    reshape_psum(wb, {0}, target0);
  }
  int np = static_cast<int>(parts.size());
  for (int m = 0; m < np; ++m)
    if (!parts[m].moving) wrap_idle(wb, {}, m, np);
  {
    std::vector<Path> lps = leaf_paths(wb.root, {0});
    for (int m = 0; m < np; ++m) {
      if (!parts[m].moving) continue;
      State t = parts[m].t;
      wb.embed_at(lps[m], sol.traces[t]);
      PExprP phi = psum_of(d3.at(t), leaf);
      add_combined(wb, lps[m], Action::tau(),
                   mix_for(ses, t, Action::tau(), d3.at(t)), &phi);
    }
  }
  ProofTrace t_w = wb.done(wexpr);

  b.embed_at({1}, t_w);
  b.step({{1}, Axiom::T4, false});
  b.step({{}, Axiom::N2, true});
  reshape_psum(b, {1, 0}, psum_of(nu, leaf));
  b.embed_at({0, 1}, reverse_trace(t_w));
  b.embed_at({0}, reverse_trace(t_step1));
  return b.done(send);
}

// Satisfaction trace adding the free-variable summand v to equation i,
// justified by the silent step nu into equations that all carry v.
ProofTrace absorb_var_step(const SES& ses, const Solution& sol, int i,
                           const std::string& v, const SubDist& nu) {
  NExprP send = sol.traces[i].end;
  ProofTrace t_dct;
  ProofTrace t_sc = scaffold_trace(
      ses, sol, i, nu,
      [&](Builder& sb, const Path& lp, State k) {
        branch_arrange(sb, lp, sol.traces[k], var_summand_index(ses, k, v),
                       static_cast<int>(summands(ses.defs[k]).size()));
      },
      &t_dct);
  Builder b{send, {}, {}};
  b.append(t_dct);
  b.embed_at({1}, t_sc);
  b.step({{1}, Axiom::T2, false});
  b.step({{}, Axiom::N2, true});
  b.embed_at({0, 1}, reverse_trace(t_sc));
  b.embed_at({0}, reverse_trace(t_dct));
  return b.done(send);
}

// Fully reduces the stationary tree, augmenting the system along the way;
// returns the final root distribution (empty when the tree is empty).
SubDist reduce_tree(SES& ses, Solution& sol, Stt tt) {
  while (!tt.node.empty()) {
    std::vector<State> q;
    for (auto& [r, d] : tt.node)
      if (r.size() >= q.size()) q = r;
    bool self = tt.node.at(q).at(q.back()) != Rat(0);
    if (q.size() == 1 && !self) return tt.node.at(q);
    SesUpdate up = self ? linearise(ses, tt, q, sol)
                        : shortcut(ses, tt, q, sol);
    ses = std::move(up.ses);
    sol = std::move(up.sol);
    tt = std::move(up.tt);
  }
  return {};
}

void append_summand(SES& ses, Solution& sol, int i, const NExprP& extra,
                    ProofTrace tr) {
  ses.defs[i] = def_with(ses.defs[i], extra);
  tr.end = substitute(ses.defs[i], bindings_of(ses, sol));
  sol.traces[i] = std::move(tr);
}

}  // namespace

std::pair<SES, Solution> saturate(const SES& ses0, const Solution& sol0,
                                  int max_policies) {
  if (!is_standard(ses0)) fail("saturate: the system is not standard");
  {
    PA pa = induced_pa(ses0);
    if (!is_guarded_ses(ses0, pa)) fail("saturate: the system is not guarded");
  }
  Budget budget{max_policies};
  SES ses = ses0;
  Solution sol = sol0;
  auto formal = [&](State s) { return var(ses.formals[s]); };

  // every weak transition vertex becomes a strong combined transition
  bool more = true;
  while (more) {
    more = false;
    PA pa = induced_pa(ses);
    std::set<Action> actions{Action::tau()};
    for (const Transition& t : pa.transitions) actions.insert(t.act);
    std::optional<LabelVertex> bad;
    Action bact;
    State bs = 0;
    for (int i = 0; i < ses.size() && !bad; ++i) {
      for (const Action& a : actions) {
        for_each_label_vertex(i, a, pa, budget, [&](const LabelVertex& v) {
          if (!bad && !combined_step(SubDist::point(i), a, v.target, pa)) {
            bad = v;
            bact = a;
            bs = i;
          }
        });
        if (bad) break;
      }
    }
    if (!bad) break;
    more = true;

    // replay and reduce the pre-phase tree
    StationaryPolicy th1 = det_to_policy(bad->pre, pa);
    SubDist d1 = reduce_tree(ses, sol, tt_from_policy(ses, bs, th1));
    // the chosen alpha summand per intermediate state
    std::map<State, int> chosen;
    for (auto& [k, tr] : bad->move)
      chosen[k] = summand_for(ses, k, bact, pa.transitions[tr].to);
    // replay and reduce the post-phase trees
    StationaryPolicy th2 = det_to_policy(bad->post, pa);
    std::map<State, SubDist> d3;
    for (auto& [t, w] : bad->hit.weights())
      d3[t] = reduce_tree(ses, sol, tt_from_policy(ses, t, th2));

    NExprP extra = prefix(bact, psum_of(bad->target, formal));
    if (!has_summand(ses.defs[bs], extra)) {
      ProofTrace tr = fuse_step(ses, sol, bs, bact, d1, chosen, d3,
                                bad->target);
      Builder out{sol.exprs[bs], {}, {}};
      out.append(sol.traces[bs]);
      out.append(tr);
      append_summand(ses, sol, bs, extra, out.done(sol.exprs[bs]));
    }
  }

  // free variables spread backwards along silent steps into their carriers
  more = true;
  while (more) {
    more = false;
    PA pa = induced_pa(ses);
    for (const std::string& v : system_vars(ses)) {
      std::set<int> occ = var_summand_states(ses, v);
      for (int i = 0; i < ses.size(); ++i) {
        if (occ.count(i)) continue;
        for (const SilentVertex& sv : silent_vertices(i, pa, budget)) {
          if (sv.target.empty()) continue;
          bool inside = true;
          for (auto& [t, w] : sv.target.weights())
            if (!occ.count(t)) inside = false;
          if (!inside) continue;
          ProofTrace tr = absorb_var_step(ses, sol, i, v, sv.target);
          Builder out{sol.exprs[i], {}, {}};
          out.append(sol.traces[i]);
          out.append(tr);
          append_summand(ses, sol, i, var(v), out.done(sol.exprs[i]));
          more = true;
          break;
        }
        if (more) break;
      }
      if (more) break;
    }
  }
  return {ses, sol};
}

// ---- joining --------------------------------------------------------------

namespace {

struct SideSys {
  const SES* ses;
  const Solution* sol;
  std::vector<int> block;                  // state -> bisimulation block
  std::vector<std::vector<Summand>> sums;  // per state; empty for a nil def
};

// Reachable automaton over several root expressions at once.
struct MultiPA {
  PA pa;
  std::vector<State> roots;
};

MultiPA multi_pa(const std::vector<NExprP>& roots, long max_states) {
  MultiPA out;
  std::map<std::string, State> idx;
  auto intern = [&](const NExprP& e) -> State {
    std::string k = alpha_key(e);
    auto it = idx.find(k);
    if (it != idx.end()) return it->second;
    if (static_cast<long>(out.pa.states.size()) >= max_states)
      throw BudgetError("state budget exceeded while joining");
    State s = static_cast<State>(out.pa.states.size());
    idx.insert({k, s});
    out.pa.states.push_back(e);
    return s;
  };
  for (const NExprP& r : roots) out.roots.push_back(intern(r));
  for (State s = 0; s < static_cast<State>(out.pa.states.size()); ++s) {
    for (auto& [a, ed] : strong_steps(out.pa.states[s])) {
      std::map<State, Rat> w;
      for (auto& [key, ent] : ed.entries()) w[intern(ent.first)] += ent.second;
      out.pa.transitions.push_back({s, a, SubDist(w)});
    }
  }
  out.pa.index();
  return out;
}

struct RowSide {
  std::vector<int> owners;               // summand indices of the own def
  std::vector<std::pair<Rat, int>> mix;  // combination of the own summands
  Rat idle = Rat(0);                     // probability of standing still
};

// One summand of a joint definition: a matched pair of steps (or a shared
// free variable), with its derivation on both sides.
struct JRow {
  bool isvar = false;
  std::string v;
  Action act = Action::tau();
  std::map<std::pair<int, int>, Rat> w;  // target over pairs of states
  RowSide side[2];
};

struct MarginalMatch {
  std::vector<std::pair<Rat, int>> mix;
  Rat idle = Rat(0);
  SubDist marg;  // over the matching side's states, mass one
};

// Decomposes a step target mu of one side into a convex combination of the
// act-summands of the other side's state oj, optionally with an idling
// part, equal to mu blockwise.
std::optional<MarginalMatch> match_marginal(const SideSys& me,
                                            const SubDist& mu,
                                            const SideSys& other, int oj,
                                            const Action& act,
                                            bool allow_idle) {
  std::vector<int> cand;
  const std::vector<Summand>& os = other.sums[oj];
  for (size_t m = 0; m < os.size(); ++m)
    if (!os[m].is_var && os[m].act == act) cand.push_back(static_cast<int>(m));
  LP lp;
  std::vector<int> lam;
  for (size_t c = 0; c < cand.size(); ++c) lam.push_back(lp.add_var());
  int pid = allow_idle ? lp.add_var() : -1;
  std::set<int> bs;
  for (auto& [k, wk] : mu.weights()) bs.insert(me.block[k]);
  for (int c : cand)
    for (auto& [l, wl] : os[c].target.weights()) bs.insert(other.block[l]);
  if (allow_idle) bs.insert(other.block[oj]);
  for (int bl : bs) {
    LinRow row;
    for (size_t c = 0; c < cand.size(); ++c) {
      Rat coef(0);
      for (auto& [l, wl] : os[cand[c]].target.weights())
        if (other.block[l] == bl) coef += wl;
      if (coef != Rat(0)) row.push_back({lam[c], coef});
    }
    if (allow_idle && other.block[oj] == bl) row.push_back({pid, Rat(1)});
    Rat rhs(0);
    for (auto& [k, wk] : mu.weights())
      if (me.block[k] == bl) rhs += wk;
    lp.add_eq(row, rhs);
  }
  LinRow one;
  for (int v : lam) one.push_back({v, Rat(1)});
  if (allow_idle) one.push_back({pid, Rat(1)});
  lp.add_eq(one, Rat(1));
  auto res = lp.solve();
  if (!res) return std::nullopt;
  MarginalMatch outm;
  std::map<State, Rat> mg;
  for (size_t c = 0; c < cand.size(); ++c) {
    Rat l = (*res)[lam[c]];
    if (l == Rat(0)) continue;
    outm.mix.push_back({l, cand[c]});
    for (auto& [u, wu] : os[cand[c]].target.weights()) mg[u] += l * wu;
  }
  if (allow_idle) {
    outm.idle = (*res)[pid];
    if (outm.idle != Rat(0)) mg[oj] += outm.idle;
  }
  outm.marg = SubDist(mg);
  return outm;
}

// Blockwise product pairing of two lifted-equal distributions.
std::map<std::pair<int, int>, Rat> pair_product(const SubDist& mu,
                                                const std::vector<int>& bl,
                                                const SubDist& nu,
                                                const std::vector<int>& br) {
  std::map<int, Rat> mb;
  for (auto& [k, wk] : mu.weights()) mb[bl[k]] += wk;
  std::map<std::pair<int, int>, Rat> w;
  for (auto& [k, wk] : mu.weights())
    for (auto& [l, wl] : nu.weights())
      if (bl[k] == br[l]) w[{k, l}] += wk * wl / mb[bl[k]];
  return w;
}

// All rows of the joint definition for the pair (i, j): one per matched
// step plus the shared free-variable summands, synchronising both sides
// whenever possible and idling one side only when it has to.
std::vector<JRow> classify_pair(const SideSys sides[2], int i, int j) {
  std::vector<JRow> rows;
  int ij[2] = {i, j};
  for (int a : {0, 1}) {
    int o = 1 - a;
    const std::vector<Summand>& ss = sides[a].sums[ij[a]];
    for (size_t c = 0; c < ss.size(); ++c) {
      if (ss[c].is_var) {
        bool found = false;
        for (JRow& r : rows)
          if (r.isvar && r.v == ss[c].var) {
            r.side[a].owners.push_back(static_cast<int>(c));
            found = true;
          }
        if (!found) {
          JRow r;
          r.isvar = true;
          r.v = ss[c].var;
          r.side[a].owners.push_back(static_cast<int>(c));
          rows.push_back(std::move(r));
        }
        continue;
      }
      auto m = match_marginal(sides[a], ss[c].target, sides[o], ij[o],
                              ss[c].act, false);
      if (!m && ss[c].act.is_tau())
        m = match_marginal(sides[a], ss[c].target, sides[o], ij[o], ss[c].act,
                           true);
      if (!m)
        fail("join: a step of " + sides[a].ses->formals[ij[a]] +
             " has no counterpart; the systems are not saturated bisimilar");
      std::map<std::pair<int, int>, Rat> w =
          a == 0 ? pair_product(ss[c].target, sides[0].block, m->marg,
                                sides[1].block)
                 : pair_product(m->marg, sides[0].block, ss[c].target,
                                sides[1].block);
      bool found = false;
      for (JRow& r : rows)
        if (!r.isvar && r.act == ss[c].act && r.w == w) {
          r.side[a].owners.push_back(static_cast<int>(c));
          found = true;
          break;
        }
      if (found) continue;
      JRow r;
      r.act = ss[c].act;
      r.w = std::move(w);
      r.side[a].owners.push_back(static_cast<int>(c));
      r.side[o].mix = m->mix;
      r.side[o].idle = m->idle;
      rows.push_back(std::move(r));
    }
  }
  for (const JRow& r : rows)
    if (r.isvar && (r.side[0].owners.empty() || r.side[1].owners.empty()))
      fail("join: free variable " + r.v + " is not shared between " +
           sides[0].ses->formals[i] + " and " + sides[1].ses->formals[j]);
  return rows;
}

// Rewrites leaf m of the n-leaf body of the prefix at pos between <E> and
// <G>, where tmid proves tau.<G> = tau.<E>, by a T1 sandwich around the
// front slot.
void convert_leaf(Builder& b, const Path& pos, int m, int n,
                  const ProofTrace& tmid, bool to_g) {
  Path body = pos;
  body.push_back(0);
  std::vector<RewriteStep> steps;
  if (n > 1 && m != 0) {
    std::vector<int> fr{m};
    for (int k = 0; k < n; ++k)
      if (k != m) fr.push_back(k);
    permute_psum(b.root, body, fr, steps);
    for (RewriteStep& s : steps) b.step(std::move(s));
  }
  b.step({pos, Axiom::T1, false});
  Path inner = pos;
  inner.push_back(0);
  if (n > 1) inner.push_back(0);
  inner.push_back(0);
  b.embed_at(inner, to_g ? reverse_trace(tmid) : tmid);
  b.step({pos, Axiom::T1, true});
  if (n > 1 && m != 0) {
    std::vector<int> back;
    for (int k = 1; k <= m; ++k) back.push_back(k);
    back.push_back(0);
    for (int k = m + 1; k < n; ++k) back.push_back(k);
    steps.clear();
    permute_psum(b.root, body, back, steps);
    for (RewriteStep& s : steps) b.step(std::move(s));
  }
}

}  // namespace

JoinResult join(const SES& s, const Solution& sol_s, const SES& t,
                const Solution& sol_t, long max_states) {
  if (!is_standard(s) || !is_standard(t))
    fail("join: the systems must be standard");
  SideSys sides[2];
  sides[0] = {&s, &sol_s, {}, {}};
  sides[1] = {&t, &sol_t, {}, {}};
  for (int a : {0, 1}) {
    const SES& se = *sides[a].ses;
    PA pa = induced_pa(se);
    if (!is_guarded_ses(se, pa)) fail("join: the systems must be guarded");
    sides[a].sums.resize(se.size());
    for (int i = 0; i < se.size(); ++i) {
      std::vector<NExprP> ls = summands(se.defs[i]);
      if (ls.size() == 1 && is_nil(ls[0])) continue;
      for (const NExprP& sm : ls) {
        auto c = classify_summand(se, sm);
        if (!c) fail("join: non-standard definition");
        sides[a].sums[i].push_back(std::move(*c));
      }
    }
  }

  // the joint bisimulation over both solutions, free variables made
  // observable through fresh visible probes
  std::set<std::string> fv;
  for (int a : {0, 1})
    for (const NExprP& e : sides[a].sol->exprs)
      for (const std::string& v : free_vars(e)) fv.insert(v);
  Bindings probes;
  for (const std::string& v : fv)
    probes.push_back({v, prefix(Action::visible("?" + v), dirac(nil()))});
  std::vector<NExprP> roots;
  for (int a : {0, 1})
    for (const NExprP& e : sides[a].sol->exprs)
      roots.push_back(substitute(e, probes));
  MultiPA mp = multi_pa(roots, max_states);
  EquivPartition part = coarsest_partition(mp.pa);
  for (int a : {0, 1})
    for (int i = 0; i < sides[a].ses->size(); ++i)
      sides[a].block.push_back(
          part.block_of(mp.roots[a == 0 ? i : s.size() + i]));
  {
    State ra = mp.roots[0], rb = mp.roots[s.size()];
    if (part.block_of(ra) != part.block_of(rb) ||
        !simulates_strong_steps(ra, rb, mp.pa, part, false) ||
        !simulates_strong_steps(rb, ra, mp.pa, part, false))
      fail("join: the distinguished solutions are not weakly congruent");
  }

  // reachable pairs and their rows
  std::map<std::pair<int, int>, std::vector<JRow>> rowmap;
  std::vector<std::pair<int, int>> queue{{0, 0}};
  while (!queue.empty()) {
    std::pair<int, int> z = queue.back();
    queue.pop_back();
    if (rowmap.count(z)) continue;
    if (static_cast<long>(rowmap.size()) >= max_states)
      throw BudgetError("pair budget exceeded while joining");
    rowmap[z] = classify_pair(sides, z.first, z.second);
    for (const JRow& r : rowmap[z])
      for (auto& [zz, w] : r.w) queue.push_back(zz);
  }

  JoinResult out;
  for (auto& [z, rows] : rowmap) out.pairs.push_back(z);
  const std::vector<std::pair<int, int>>& pairs = out.pairs;
  int npairs = static_cast<int>(pairs.size());
  std::map<std::pair<int, int>, int> zu;
  for (int u = 0; u < npairs; ++u) zu[pairs[u]] = u;
  for (int u = 0; u < npairs; ++u) {
    std::string name = "Z" + std::to_string(u + 1);
    while (fv.count(name)) name += "'";
    out.ses.formals.push_back(name);
  }

  // joint definitions; remember each prefix row's target over pair indices
  std::map<std::pair<int, int>, std::vector<SubDist>> rowtarget;
  for (int u = 0; u < npairs; ++u) {
    const std::vector<JRow>& rows = rowmap[pairs[u]];
    std::vector<SubDist>& tg = rowtarget[pairs[u]];
    std::vector<NExprP> ls;
    for (const JRow& r : rows) {
      if (r.isvar) {
        tg.push_back({});
        ls.push_back(var(r.v));
        continue;
      }
      std::map<State, Rat> w;
      for (auto& [zz, wz] : r.w) w[zu.at(zz)] += wz;
      tg.push_back(SubDist(w));
      ls.push_back(prefix(r.act, psum_of(tg.back(), [&](State q) {
                            return var(out.ses.formals[q]);
                          })));
    }
    out.ses.defs.push_back(sum(ls));
  }

  // pair solutions: the own solution expression, wrapped into a recursion
  // with one silent self-referencing summand per row on which this side
  // can only idle
  struct PSide {
    bool isrec = false;
    std::string x;
    std::vector<int> hrows;
    std::vector<SubDist> hrest;  // non-idling own part; empty for pure idling
    NExprP g;
    ProofTrace tmid;  // tau.<g> = tau.<own expression>, when isrec
  };
  std::vector<std::array<PSide, 2>> psol(npairs);
  for (int u = 0; u < npairs; ++u) {
    const std::vector<JRow>& rows = rowmap[pairs[u]];
    int ij[2] = {pairs[u].first, pairs[u].second};
    for (int a : {0, 1}) {
      PSide& ps = psol[u][a];
      for (size_t r = 0; r < rows.size(); ++r) {
        const RowSide& rs = rows[r].side[a];
        if (!rows[r].isvar && rs.owners.empty() && rs.idle != Rat(0)) {
          ps.hrows.push_back(static_cast<int>(r));
          std::map<State, Rat> hw;
          for (auto& [wgt, c] : rs.mix)
            for (auto& [k, wk] : sides[a].sums[ij[a]][c].target.weights())
              hw[k] += wgt * wk;
          ps.hrest.push_back(SubDist(hw));
        }
      }
      NExprP base = sides[a].sol->exprs[ij[a]];
      if (ps.hrows.empty()) {
        ps.g = base;
        continue;
      }
      ps.isrec = true;
      NExprP body0 = sides[a].sol->traces[ij[a]].end;
      std::vector<NExprP> ctxe{body0};
      for (const NExprP& e : sides[a].sol->exprs) ctxe.push_back(e);
      ps.x = fresh_var("W", ctxe, fv);
      auto oleaf = [&](State k) { return sides[a].sol->exprs[k]; };
      std::vector<NExprP> ls = summands(body0);
      for (size_t hn = 0; hn < ps.hrows.size(); ++hn) {
        Rat p = rows[ps.hrows[hn]].side[a].idle;
        if (ps.hrest[hn].empty())
          ls.push_back(prefix(Action::tau(), dirac(var(ps.x))));
        else
          ls.push_back(prefix(Action::tau(),
                              pchoice(p, dirac(var(ps.x)),
                                      psum_of(ps.hrest[hn], oleaf))));
      }
      ps.g = rec(ps.x, sum(ls));
    }
  }

  // tau.<g> = tau.<own>: rebind the unfolding through R2, split the silent
  // self loop off every idling summand through R3 and C, and collapse it
  auto make_tmid = [&](int u, int a) -> ProofTrace {
    const PSide& ps = psol[u][a];
    int oi = a == 0 ? pairs[u].first : pairs[u].second;
    const SideSys& sd = sides[a];
    NExprP body = ps.g->left;
    int nb = static_cast<int>(summands(body).size());
    int h = static_cast<int>(ps.hrows.size());
    int n0 = nb - h;
    NExprP start = prefix(Action::tau(), dirac(ps.g));
    Builder b{start, {}, {}};
    std::vector<int> pure;
    for (int r = 0; r < h; ++r)
      if (ps.hrest[r].empty()) pure.push_back(r);
    if (pure.empty()) {
      Builder gb{ps.g, {}, {}};
      gb.step({{}, Axiom::R1, true});
      ProofTrace r1t = gb.done(ps.g);
      Builder pb{start, {}, {}};
      pb.embed_at({0, 0}, r1t);
      for (int r = 0; r < h; ++r)
        pb.step({summand_path({0, 0}, n0 + r, nb), Axiom::T1, false});
      ProofTrace prem = pb.done(start);
      RewriteStep r2{{}, Axiom::R2, true};
      r2.nargs["X"] = ps.x;
      r2.eargs["E"] = prefix(Action::tau(), dirac(body));
      r2.premise = static_cast<int>(b.premises.size());
      b.premises.push_back(prem);
      b.step(std::move(r2));
    } else {
      // rows on which this side fully idles show up as literal silent self
      // loops tau.<x>; R2 cannot bind across them, so merge them into one,
      // rotate it to the front, and strip it with R5 before rebinding the
      // guarded remainder
      SumCtx c0{b, {0, 0, 0}};
      for (int k = static_cast<int>(pure.size()) - 1; k >= 1; --k)
        c0.merge(n0 + pure[0], n0 + pure[k]);
      {
        std::vector<int> ord;
        for (int k = 0; k < c0.size(); ++k)
          if (k != n0 + pure[0]) ord.push_back(k);
        ord.push_back(n0 + pure[0]);
        c0.permute(ord);
      }
      b.step({{0, 0, 0}, Axiom::N1, true});
      b.step({{0, 0}, Axiom::R5, true});
      NExprP gt = subterm_at(b.root, {0, 0})->n;  // rec x tau.<B>
      b.step({{0, 0}, Axiom::R1, true});
      b.step({{}, Axiom::T1, true});
      NExprP f0 = b.root;  // tau.<B[gt/x]>
      Builder pb{f0, {}, {}};
      int m2 = n0 + h - static_cast<int>(pure.size());
      int rank = 0;
      for (int r = 0; r < h; ++r) {
        if (ps.hrest[r].empty()) continue;
        Path rp = summand_path({0, 0}, n0 + rank, m2);
        rp.insert(rp.end(), {0, 0, 0});
        pb.step({rp, Axiom::R1, true});
        ++rank;
      }
      RewriteStep r2{{}, Axiom::R2, true};
      r2.nargs["X"] = ps.x;
      r2.eargs["E"] = gt->left;
      r2.premise = static_cast<int>(b.premises.size());
      b.premises.push_back(pb.done(f0));
      b.step(std::move(r2));
    }
    b.step({{}, Axiom::R5, false});
    SumCtx ctx{b, {0}};
    auto flatten = [&]() {
      std::vector<int> ord(ctx.size());
      std::iota(ord.begin(), ord.end(), 0);
      ctx.permute(ord);
    };
    flatten();  // [loop, own summands, idling summands]
    auto oleaf = [&](State k) { return sd.sol->exprs[k]; };
    for (int r = h - 1; r >= 0; --r) {
      if (ps.hrest[r].empty()) continue;  // already stripped with the loop
      int q = ctx.size() - 1;  // the idling summand is last
      Path inner = ctx.path_of(q);
      inner.insert(inner.end(), {0, 0, 0});
      b.step({inner, Axiom::N4, false});
      b.step({{0}, Axiom::N1, true});
      b.step({{}, Axiom::R3, true});
      flatten();  // [H', tau.Psi, loop, own..., idling rest]
      ctx.dup(2);
      {
        Path cip = ctx.path_of(ctx.size() - 1);
        cip.insert(cip.end(), {0, 0});
        b.step({cip, Axiom::N4, false});
      }
      ctx.uninterpolate(ctx.size() - 1, 0, 1);
      {
        Path cip = ctx.path_of(ctx.size() - 1);
        cip.insert(cip.end(), {0, 0});
        b.step({cip, Axiom::N4, true});
      }
      ctx.merge(1, ctx.size() - 1);
      {
        std::vector<int> ord;
        for (int k = 1; k < ctx.size(); ++k) ord.push_back(k);
        ord.push_back(0);
        ctx.permute(ord);  // tau.Psi to the back, then recombine it away
        NExprP basee = subterm_at(b.root, {0, 0})->n;
        Builder rb{basee, {}, {}};
        std::vector<std::pair<Rat, int>> mx;
        Rat tot = Rat(1) - rowmap[pairs[u]][ps.hrows[r]].side[a].idle;
        for (auto& [wgt, c] : rowmap[pairs[u]][ps.hrows[r]].side[a].mix)
          mx.push_back({wgt / tot, 1 + c});
        PExprP psi = psum_of(ps.hrest[r], oleaf);
        add_combined(rb, {}, Action::tau(), mx, &psi);
        b.embed_at({0}, reverse_trace(rb.done(basee)));
      }
    }
    {
      std::vector<int> ord;
      for (int k = 1; k < ctx.size(); ++k) ord.push_back(k);
      ord.push_back(0);
      ctx.permute(ord);
      b.step({{0}, Axiom::N1, true});
      b.step({{}, Axiom::R5, true});
      b.step({{}, Axiom::R1, true});
    }
    b.embed_at({0, 0}, reverse_trace(sd.sol->traces[oi]));
    return b.done(start);
  };
  for (int u = 0; u < npairs; ++u)
    for (int a : {0, 1})
      if (psol[u][a].isrec) psol[u][a].tmid = make_tmid(u, a);

  Bindings ubind[2];
  for (int a : {0, 1})
    for (int u = 0; u < npairs; ++u)
      ubind[a].push_back({out.ses.formals[u], psol[u][a].g});

  auto side_trace = [&](int u, int a) -> ProofTrace {
    int oi = a == 0 ? pairs[u].first : pairs[u].second;
    const SideSys& sd = sides[a];
    const PSide& ps = psol[u][a];
    const std::vector<JRow>& rows = rowmap[pairs[u]];
    const std::vector<SubDist>& tg = rowtarget[pairs[u]];
    auto oleaf = [&](State k) { return sd.sol->exprs[k]; };
    auto own_of = [&](State q) {
      return a == 0 ? pairs[q].first : pairs[q].second;
    };
    Builder b{ps.g, {}, {}};
    if (ps.isrec)
      b.step({{}, Axiom::R1, true});
    else
      b.append(sd.sol->traces[oi]);
    int nb = static_cast<int>(summands(b.root).size());
    int h = static_cast<int>(ps.hrows.size());
    int n0 = nb - h;
    // which row each summand currently realises (-1: a bare nil def)
    std::vector<int> entries(n0, -1);
    for (size_t r = 0; r < rows.size(); ++r)
      for (int c : rows[r].side[a].owners) entries[c] = static_cast<int>(r);
    for (int r : ps.hrows) entries.push_back(r);
    // append the rows that are combinations of existing summands
    for (size_t r = 0; r < rows.size(); ++r) {
      const RowSide& rs = rows[r].side[a];
      if (rows[r].isvar || !rs.owners.empty() || rs.idle != Rat(0)) continue;
      PExprP inter = psum_of(tg[r], [&](State q) { return oleaf(own_of(q)); });
      add_combined(b, {}, rows[r].act, rs.mix, &inter);
      entries.push_back(static_cast<int>(r));
    }
    // rewrite every summand into its row shape
    int ncur = static_cast<int>(entries.size());
    for (int pos = 0; pos < ncur; ++pos) {
      int r = entries[pos];
      if (r < 0 || rows[r].isvar) continue;
      Path pp = summand_path({}, pos, ncur);
      if (pos >= n0 && pos < nb) {
        // an idling row: fold the recursion leaf away first
        int hi = pos - n0;
        int nh = 1 + (ps.hrest[hi].empty()
                          ? 0
                          : static_cast<int>(ps.hrest[hi].support().size()));
        convert_leaf(b, pp, 0, nh, ps.tmid, false);
      }
      if (pos < nb) {
        Path body = pp;
        body.push_back(0);
        reshape_psum(b, body,
                     psum_of(tg[r], [&](State q) { return oleaf(own_of(q)); }));
      }
      // lift base leaves into the pair solutions where those recurse
      std::set<State> supp = tg[r].support();
      std::vector<State> us(supp.begin(), supp.end());
      for (size_t m = 0; m < us.size(); ++m)
        if (psol[us[m]][a].isrec)
          convert_leaf(b, pp, static_cast<int>(m),
                       static_cast<int>(us.size()), psol[us[m]][a].tmid, true);
    }
    // fold duplicate realisations together and drop a nil placeholder
    bool again = true;
    while (again) {
      again = false;
      for (size_t p2 = 0; p2 < entries.size() && !again; ++p2)
        for (size_t p1 = 0; p1 < p2; ++p1)
          if (entries[p1] == entries[p2] && entries[p1] >= 0) {
            SumCtx ctx{b, {}};
            ctx.merge(static_cast<int>(p1), static_cast<int>(p2));
            entries.erase(entries.begin() + static_cast<long>(p2));
            again = true;
            break;
          }
    }
    for (size_t p1 = 0; p1 < entries.size(); ++p1)
      if (entries[p1] < 0 && entries.size() > 1) {
        remove_nil(b, {}, static_cast<int>(p1));
        entries.erase(entries.begin() + static_cast<long>(p1));
        break;
      }
    if (!rows.empty()) {
      if (entries.size() != rows.size()) fail("join: internal row mismatch");
      std::vector<int> order;
      for (size_t r = 0; r < rows.size(); ++r) {
        auto it =
            std::find(entries.begin(), entries.end(), static_cast<int>(r));
        if (it == entries.end()) fail("join: internal row mismatch");
        order.push_back(static_cast<int>(it - entries.begin()));
      }
      SumCtx ctx{b, {}};
      ctx.permute(order);
    }
    ProofTrace tr = b.done(ps.g);
    tr.end = substitute(out.ses.defs[u], ubind[a]);
    return tr;
  };

  for (int u = 0; u < npairs; ++u) {
    out.left.exprs.push_back(psol[u][0].g);
    out.right.exprs.push_back(psol[u][1].g);
  }
  for (int u = 0; u < npairs; ++u) {
    out.left.traces.push_back(side_trace(u, 0));
    out.right.traces.push_back(side_trace(u, 1));
  }
  {
    PA upa = induced_pa(out.ses);
    if (!is_guarded_ses(out.ses, upa))
      fail("join: internal: the joint system is unguarded");
  }
  return out;
}

// ---- unique solutions and the prover --------------------------------------

namespace {

// Paths of the free occurrences of x in e.
void var_positions(const NExprP& e, const std::string& x, const Path& p,
                   std::vector<Path>& out) {
  switch (e->kind) {
    case NKind::Var:
      if (e->name == x) out.push_back(p);
      return;
    case NKind::Prefix: {
      std::function<void(const PExprP&, Path)> walk = [&](const PExprP& q,
                                                          Path pp) {
        if (is_pchoice(q)) {
          Path l = pp, r = pp;
          l.push_back(0);
          r.push_back(1);
          walk(q->left, l);
          walk(q->right, r);
        } else {
          pp.push_back(0);
          var_positions(q->inner, x, pp, out);
        }
      };
      Path pp = p;
      pp.push_back(0);
      walk(e->parg, pp);
      return;
    }
    case NKind::Choice: {
      Path l = p, r = p;
      l.push_back(0);
      r.push_back(1);
      var_positions(e->left, x, l, out);
      var_positions(e->right, x, r, out);
      return;
    }
    case NKind::Rec: {
      if (e->name == x) return;
      Path q = p;
      q.push_back(0);
      var_positions(e->left, x, q, out);
      return;
    }
    default:
      return;
  }
}

}  // namespace

Solution solve_unique(const SES& ses, long max_states) {
  (void)max_states;
  int n = ses.size();
  if (n == 0) fail("solve: empty system");
  if (is_standard(ses)) {
    PA pa = induced_pa(ses);
    if (!is_guarded_ses(ses, pa)) fail("solve: the system is not guarded");
  }

  // peel the last equation: close it into a recursion, substitute it into
  // the others, and recurse on the smaller system
  std::function<Solution(const std::vector<NExprP>&)> go =
      [&](const std::vector<NExprP>& defs) -> Solution {
    int m = static_cast<int>(defs.size());
    const std::string& xm = ses.formals[m - 1];
    if (m == 1) {
      NExprP e1 = rec(xm, defs[0]);
      Builder b{e1, {}, {}};
      b.step({{}, Axiom::R1, true});
      Solution sol;
      sol.exprs = {e1};
      sol.traces = {b.done(e1)};
      return sol;
    }
    NExprP em_open = rec(xm, defs[m - 1]);  // the other formals still free
    std::vector<NExprP> tds;
    for (int k = 0; k < m - 1; ++k)
      tds.push_back(substitute(defs[k], {{xm, em_open}}));
    Solution sol = go(tds);
    Bindings bs;
    for (int k = 0; k < m - 1; ++k) bs.push_back({ses.formals[k], sol.exprs[k]});
    NExprP em = rec(xm, substitute(defs[m - 1], bs));
    Builder b{em, {}, {}};
    b.step({{}, Axiom::R1, true});
    sol.exprs.push_back(em);
    sol.traces.push_back(b.done(em));
    return sol;
  };
  Solution sol = go(ses.defs);
  Bindings bs = bindings_of(ses, sol);
  for (int i = 0; i < n; ++i) sol.traces[i].end = substitute(ses.defs[i], bs);

  // the solution is perfect when its expressions realise exactly the
  // transitions of the system, state for state
  if (is_standard(ses)) {
    bool ok = true;
    std::map<std::string, int> keyof;
    for (int k = 0; k < n && ok; ++k)
      ok = keyof.insert({alpha_key(sol.exprs[k]), k}).second;
    for (int k = 0; k < n && ok; ++k) {
      std::set<std::pair<std::string, SubDist>> have, want;
      for (auto& [a, ed] : strong_steps(sol.exprs[k])) {
        std::map<State, Rat> w;
        for (auto& [key, ent] : ed.entries()) {
          auto it = keyof.find(alpha_key(ent.first));
          if (it == keyof.end()) {
            ok = false;
            break;
          }
          w[it->second] += ent.second;
        }
        if (!ok) break;
        have.insert({a.str(), SubDist(w)});
      }
      for (const SesStep& st : ses_steps(ses, k))
        want.insert({st.act.str(), st.target});
      ok = ok && have == want;
    }
    sol.perfect = ok;
  }
  return sol;
}

std::vector<ProofTrace> equate_solutions(const SES& ses, const Solution& e,
                                         const Solution& f) {
  int n = ses.size();
  if (static_cast<int>(f.exprs.size()) != n ||
      static_cast<int>(f.traces.size()) != n ||
      static_cast<int>(e.exprs.size()) != n)
    fail("equate: solution size mismatch");

  // mirror the peeling of solve_unique: rebind the last component through
  // R2, push the rebinding into the other components, recurse, and finally
  // rewrite the recursion body
  std::function<std::vector<ProofTrace>(const std::vector<NExprP>&,
                                        const std::vector<NExprP>&,
                                        const std::vector<ProofTrace>&)>
      go = [&](const std::vector<NExprP>& defs, const std::vector<NExprP>& fex,
               const std::vector<ProofTrace>& ftr) -> std::vector<ProofTrace> {
    int m = static_cast<int>(defs.size());
    const std::string& xm = ses.formals[m - 1];
    if (m == 1) {
      Builder b{fex[0], {}, {}};
      RewriteStep r2{{}, Axiom::R2, true};
      r2.nargs["X"] = xm;
      r2.eargs["E"] = defs[0];
      r2.premise = 0;
      b.premises.push_back(ftr[0]);
      b.step(std::move(r2));
      return {b.done(fex[0])};
    }
    Bindings fb;
    for (int k = 0; k < m - 1; ++k) fb.push_back({ses.formals[k], fex[k]});
    NExprP bodyf = substitute(defs[m - 1], fb);
    Builder ub{fex[m - 1], {}, {}};
    {
      RewriteStep r2{{}, Axiom::R2, true};
      r2.nargs["X"] = xm;
      r2.eargs["E"] = bodyf;
      r2.premise = 0;
      ub.premises.push_back(ftr[m - 1]);
      ub.step(std::move(r2));
    }
    ProofTrace u = ub.done(fex[m - 1]);  // F_m = rec xm (S_m[F])
    NExprP em_open = rec(xm, defs[m - 1]);
    std::vector<NExprP> tds, fex2;
    std::vector<ProofTrace> ftds;
    for (int k = 0; k < m - 1; ++k) {
      tds.push_back(substitute(defs[k], {{xm, em_open}}));
      fex2.push_back(fex[k]);
      Builder b{fex[k], {}, {}};
      b.append(ftr[k]);
      std::vector<Path> at;
      var_positions(defs[k], xm, {}, at);
      for (const Path& p : at) b.embed_at(p, u);
      ProofTrace tk = b.done(fex[k]);
      tk.end = substitute(tds[k], fb);
      ftds.push_back(std::move(tk));
    }
    std::vector<ProofTrace> sub = go(tds, fex2, ftds);
    Builder lb{fex[m - 1], {}, {}};
    lb.append(u);
    for (int k = 0; k < m - 1; ++k) {
      std::vector<Path> at;
      var_positions(defs[m - 1], ses.formals[k], {}, at);
      for (const Path& p : at) {
        Path q{0};
        q.insert(q.end(), p.begin(), p.end());
        lb.embed_at(q, sub[k]);
      }
    }
    sub.push_back(lb.done(fex[m - 1]));
    return sub;
  };
  std::vector<ProofTrace> got = go(ses.defs, f.exprs, f.traces);
  for (int k = 0; k < n; ++k)
    if (!alpha_eq(got[k].end, e.exprs[k]))
      fail("equate: component " + ses.formals[k] +
           " does not meet the recursive solution");
  return got;
}

ProofTrace prove_equal(const NExprP& e, const NExprP& f, long max_states,
                       int max_policies) {
  // free variables are closed off with distinct fresh visible probes, so
  // the semantic check decides the open congruence
  Bindings probes;
  std::set<std::string> fv = free_vars(e);
  fv.merge(free_vars(f));
  for (const std::string& v : fv)
    probes.push_back(
        {v, prefix(Action::visible("?" + v), dirac(nil()))});
  if (!weak_congruence(substitute(e, probes), substitute(f, probes),
                       static_cast<int>(max_states))
           .verdict)
    fail("prove: the expressions are not weakly congruent");
  GuardResult ge = guard_transform(e);
  GuardResult gf = guard_transform(f);
  auto [se, sole] = characterise(ge.guarded, max_states);
  auto [sf, solf] = characterise(gf.guarded, max_states);
  auto [sse, ssole] = saturate(se, sole, max_policies);
  auto [ssf, ssolf] = saturate(sf, solf, max_policies);
  JoinResult jr = join(sse, ssole, ssf, ssolf, max_states);
  if (!alpha_eq(jr.left.exprs[0], ge.guarded) ||
      !alpha_eq(jr.right.exprs[0], gf.guarded))
    fail("prove: internal: the distinguished pair is not synchronising");
  Solution w = solve_unique(jr.ses, max_states);
  std::vector<ProofTrace> tl = equate_solutions(jr.ses, w, jr.left);
  std::vector<ProofTrace> tr = equate_solutions(jr.ses, w, jr.right);
  Builder b{e, {}, {}};
  b.append(ge.trace);
  b.append(tl[0]);
  b.append(reverse_trace(tr[0]));
  b.append(reverse_trace(gf.trace));
  ProofTrace out = b.done(e);
  VerifyResult v = verify_trace(out);
  if (!v.ok) fail("prove: internal: the assembled trace fails: " + v.reason);
  return out;
}

}  // namespace paw
