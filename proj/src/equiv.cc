#include "paw/equiv.hh"

#include <vector>

#include "paw/weakreach.hh"

namespace paw {

namespace {

// every strong step of s answered by t: a weak step whose target couples
// with the step's distribution inside rel
bool matches(State s, State t, const PA& pa,
             const std::vector<std::vector<bool>>& rel, bool hat) {
  int n = static_cast<int>(pa.size());
  for (int tr : pa.outgoing[s]) {
    const Transition& step = pa.transitions[tr];
    WeakStepVars w = weak_step_lp(SubDist::point(t), step.act, pa, hat);
    std::vector<LinRow> into(n);
    for (auto& [u, m] : step.to.weights()) {
      LinRow out;
      for (int v = 0; v < n; ++v)
        if (rel[u][v]) {
          int c = w.lp.add_var();
          out.push_back({c, Rat(1)});
          into[v].push_back({c, Rat(1)});
        }
      w.lp.add_eq(out, m);
    }
    for (int v = 0; v < n; ++v) {
      LinRow row = into[v];
      row.push_back({w.stop_var[v], Rat(-1)});
      w.lp.add_eq(row, Rat(0));
    }
    if (!w.lp.solve()) return false;
  }
  return true;
}

}  // namespace

bool simulates_strong_steps(State s, State t, const PA& pa,
                            const EquivPartition& part, bool hat) {
  int n = static_cast<int>(pa.size());
  std::vector<std::vector<bool>> rel(n, std::vector<bool>(n, false));
  for (int u = 0; u < n; ++u)
    for (int v = 0; v < n; ++v) rel[u][v] = part.same_block(u, v);
  return matches(s, t, pa, rel, hat);
}

EquivPartition coarsest_partition(const PA& pa) {
  int n = static_cast<int>(pa.size());
  // greatest fixpoint over symmetric state relations, starting from all
  // pairs and discarding a pair when either side fails to answer the other
  std::vector<std::vector<bool>> rel(n, std::vector<bool>(n, true));
  bool changed = true;
  while (changed) {
    changed = false;
    for (int s = 0; s < n; ++s)
      for (int t = s + 1; t < n; ++t) {
        if (!rel[s][t]) continue;
        if (!matches(s, t, pa, rel, true) || !matches(t, s, pa, rel, true)) {
          rel[s][t] = rel[t][s] = false;
          changed = true;
        }
      }
  }
  EquivPartition part;
  std::vector<bool> placed(n, false);
  for (int s = 0; s < n; ++s) {
    if (placed[s]) continue;
    std::set<State> block;
    for (int t = 0; t < n; ++t)
      if (rel[s][t] && !placed[t]) {
        block.insert(t);
        placed[t] = true;
      }
    part.blocks.push_back(std::move(block));
  }
  return part;
}

BisimResult weak_bisim(const NExprP& e, const NExprP& f, int max_states) {
  BisimResult r;
  r.joint = build_joint_pa(e, f, max_states);
  r.partition = coarsest_partition(r.joint.pa);
  r.verdict = r.partition.same_block(r.joint.init_a, r.joint.init_b);
  return r;
}

BisimResult weak_congruence(const NExprP& e, const NExprP& f, int max_states) {
  BisimResult r = weak_bisim(e, f, max_states);
  r.root_check =
      simulates_strong_steps(r.joint.init_a, r.joint.init_b, r.joint.pa,
                             r.partition, false) &&
      simulates_strong_steps(r.joint.init_b, r.joint.init_a, r.joint.pa,
                             r.partition, false);
  r.verdict = r.root_check;
  return r;
}

}  // namespace paw
