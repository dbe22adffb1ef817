#include "paw/semantics.hh"

#include <deque>
#include <set>
#include <functional>
#include <sstream>

#include "json.hpp"

namespace paw {

void ExprDist::add(const NExprP& e, const Rat& w) {
  if (w == 0) return;
  if (w < 0) throw std::runtime_error("negative weight");
  std::string k = alpha_key(e);
  auto it = m_.find(k);
  if (it == m_.end())
    m_.emplace(std::move(k), std::make_pair(e, w));
  else
    it->second.second += w;
}

bool ExprDist::operator==(const ExprDist& o) const {
  if (m_.size() != o.m_.size()) return false;
  auto a = m_.begin();
  auto b = o.m_.begin();
  for (; a != m_.end(); ++a, ++b)
    if (a->first != b->first || a->second.second != b->second.second) return false;
  return true;
}

bool ExprDist::operator<(const ExprDist& o) const {
  auto a = m_.begin();
  auto b = o.m_.begin();
  for (; a != m_.end() && b != o.m_.end(); ++a, ++b) {
    if (a->first != b->first) return a->first < b->first;
    if (a->second.second != b->second.second)
      return a->second.second < b->second.second;
  }
  return m_.size() < o.m_.size();
}

ExprDist pexp_dist(const PExprP& p) {
  ExprDist d;
  std::function<void(const PExprP&, const Rat&)> walk =
      [&](const PExprP& q, const Rat& w) {
        if (q->kind == PKind::Dirac) {
          d.add(q->inner, w);
        } else {
          walk(q->left, w * q->p);
          walk(q->right, w * (1 - q->p));
        }
      };
  walk(p, Rat(1));
  return d;
}

namespace {
void steps_into(const NExprP& e, std::set<std::string>& unfolding,
                std::vector<std::pair<Action, ExprDist>>& out) {
  switch (e->kind) {
    case NKind::Nil:
    case NKind::Var:
      return;
    case NKind::Prefix:
      out.emplace_back(e->act, pexp_dist(e->parg));
      return;
    case NKind::Choice:
      steps_into(e->left, unfolding, out);
      steps_into(e->right, unfolding, out);
      return;
    case NKind::Rec: {
      // unfold; a head cycle of rec binders (e.g. rec X X) has no base
      // derivation, so revisiting one contributes nothing
      std::string key = alpha_key(e);
      if (!unfolding.insert(key).second) return;
      NExprP unrolled = substitute(e->left, {{e->name, e}});
      steps_into(unrolled, unfolding, out);
      unfolding.erase(key);
      return;
    }
  }
}
}  // namespace

std::vector<std::pair<Action, ExprDist>> strong_steps(const NExprP& e) {
  std::vector<std::pair<Action, ExprDist>> raw;
  std::set<std::string> unfolding;
  steps_into(e, unfolding, raw);
  // deterministic order, duplicates collapsed
  std::set<std::pair<Action, ExprDist>> dedup(raw.begin(), raw.end());
  return {dedup.begin(), dedup.end()};
}

void PA::index() {
  outgoing.assign(states.size(), {});
  for (size_t i = 0; i < transitions.size(); ++i)
    outgoing[transitions[i].from].push_back(static_cast<int>(i));
}

std::vector<int> PA::steps_from(State s, const Action& a) const {
  std::vector<int> out;
  for (int t : outgoing[s])
    if (transitions[t].act == a) out.push_back(t);
  return out;
}

namespace {
PA build_from_roots(const std::vector<NExprP>& roots, int max_states,
                    std::vector<State>& root_ids) {
  for (auto& r : roots)
    if (!free_vars(r).empty())
      throw std::runtime_error("cannot build automaton of an open expression: free " +
                               *free_vars(r).begin());
  PA pa;
  std::map<std::string, State> ids;
  std::deque<State> frontier;
  auto intern = [&](const NExprP& e) {
    std::string k = alpha_key(e);
    auto it = ids.find(k);
    if (it != ids.end()) return it->second;
    if (static_cast<int>(pa.states.size()) >= max_states)
      throw BudgetError("state budget " + std::to_string(max_states) +
                        " exceeded while exploring " + pretty(e));
    State s = static_cast<State>(pa.states.size());
    pa.states.push_back(e);
    ids.emplace(std::move(k), s);
    frontier.push_back(s);
    return s;
  };
  for (auto& r : roots) root_ids.push_back(intern(r));
  while (!frontier.empty()) {
    State s = frontier.front();
    frontier.pop_front();
    for (auto& [act, dist] : strong_steps(pa.states[s])) {
      std::map<State, Rat> w;
      for (auto& [k, ew] : dist.entries()) w[intern(ew.first)] += ew.second;
      pa.transitions.push_back({s, act, SubDist(std::move(w))});
    }
  }
  pa.initial = root_ids.empty() ? 0 : root_ids[0];
  pa.index();
  return pa;
}
}  // namespace

PA build_pa(const NExprP& e, int max_states) {
  std::vector<State> roots;
  return build_from_roots({e}, max_states, roots);
}

JointPA build_joint_pa(const NExprP& a, const NExprP& b, int max_states) {
  std::vector<State> roots;
  JointPA j;
  j.pa = build_from_roots({a, b}, max_states, roots);
  j.init_a = roots[0];
  j.init_b = roots[1];
  return j;
}

std::string PA::to_json() const {
  nlohmann::json out;
  out["states"] = nlohmann::json::array();
  for (auto& s : states) out["states"].push_back(pretty(s));
  out["initial"] = initial;
  out["transitions"] = nlohmann::json::array();
  for (auto& t : transitions) {
    nlohmann::json to = nlohmann::json::object();
    for (auto& [s, w] : t.to.weights()) to[std::to_string(s)] = rat_str(w);
    out["transitions"].push_back(
        {{"from", t.from}, {"action", t.act.str()}, {"to", to}});
  }
  return out.dump(2);
}

std::string PA::to_dot() const {
  std::ostringstream os;
  os << "digraph pa {\n  rankdir=TB;\n  node [shape=box];\n";
  for (size_t i = 0; i < states.size(); ++i) {
    os << "  s" << i << " [label=\"" << pretty(states[i]) << "\"";
    if (static_cast<State>(i) == initial) os << ", penwidth=2";
    os << "];\n";
  }
  for (size_t t = 0; t < transitions.size(); ++t) {
    const Transition& tr = transitions[t];
    // filled-circle splitter between source and probabilistic targets
    os << "  t" << t << " [shape=point, width=0.08];\n";
    os << "  s" << tr.from << " -> t" << t << " [label=\"" << tr.act.str()
       << "\", arrowhead=none];\n";
    for (auto& [s, w] : tr.to.weights())
      os << "  t" << t << " -> s" << s << " [label=\"" << rat_str(w) << "\"];\n";
  }
  os << "}\n";
  return os.str();
}

}  // namespace paw
