#include "paw/weakreach.hh"

#include <algorithm>
#include <deque>
#include <stdexcept>

#include "json.hpp"

namespace paw {

std::string FlowCertificate::to_json() const {
  nlohmann::json out;
  out["occupancy"] = nlohmann::json::object();
  for (auto& [t, w] : occupancy) out["occupancy"][std::to_string(t)] = rat_str(w);
  auto dump = [](const SubDist& d) {
    nlohmann::json o = nlohmann::json::object();
    for (auto& [s, w] : d.weights()) o[std::to_string(s)] = rat_str(w);
    return o;
  };
  out["stop"] = dump(stop);
  out["diverted"] = dump(diverted);
  return out.dump(2);
}

bool combined_step(const SubDist& mu, const Action& alpha, const SubDist& nu,
                   const PA& pa) {
  LP lp;
  std::map<int, int> xvar;  // transition -> variable
  for (auto& [s, w] : mu.weights()) {
    LinRow row;
    for (int t : pa.steps_from(s, alpha)) {
      auto [it, fresh] = xvar.emplace(t, 0);
      if (fresh) it->second = lp.add_var();
      row.push_back({it->second, Rat(1)});
    }
    if (row.empty()) return false;  // this unit of mass cannot move
    lp.add_eq(row, w);
  }
  std::set<State> targets = nu.support();
  for (auto& [t, v] : xvar)
    for (auto& [u, w] : pa.transitions[t].to.weights()) targets.insert(u);
  for (State u : targets) {
    LinRow row;
    for (auto& [t, v] : xvar) {
      Rat c = pa.transitions[t].to.at(u);
      if (c != 0) row.push_back({v, c});
    }
    lp.add_eq(row, nu.at(u));
  }
  return lp.solve().has_value();
}

std::set<State> divergence_set(const PA& pa) {
  std::set<State> d;
  for (State s = 0; s < static_cast<State>(pa.size()); ++s) d.insert(s);
  bool changed = true;
  while (changed) {
    changed = false;
    for (auto it = d.begin(); it != d.end();) {
      bool keep = false;
      for (int t : pa.outgoing[*it]) {
        if (!pa.transitions[t].act.is_tau()) continue;
        bool inside = true;
        for (auto& [u, w] : pa.transitions[t].to.weights())
          if (!d.count(u)) {
            inside = false;
            break;
          }
        if (inside) {
          keep = true;
          break;
        }
      }
      if (keep)
        ++it;
      else
        it = d.erase(it), changed = true;
    }
  }
  return d;
}

namespace {

struct TauStage {
  std::map<int, int> occ;    // tau transition -> variable
  std::map<State, int> div;  // divergence-set state -> variable
  std::vector<int> stop;     // per state
};

// Flow-balance constraints for one silent stage: at every state,
// source + inflow = stop + diverted + outflow. The source at state s is
// src_const[s] plus the linear expression src_expr[s].
TauStage add_tau_stage(LP& lp, const PA& pa, const std::set<State>& D,
                       const std::vector<Rat>& src_const,
                       const std::vector<LinRow>& src_expr) {
  int n = static_cast<int>(pa.size());
  TauStage st;
  for (int t = 0; t < static_cast<int>(pa.transitions.size()); ++t)
    if (pa.transitions[t].act.is_tau()) st.occ[t] = lp.add_var();
  for (State s : D) st.div[s] = lp.add_var();
  for (int s = 0; s < n; ++s) st.stop.push_back(lp.add_var());
  for (int s = 0; s < n; ++s) {
    LinRow row = src_expr.empty() ? LinRow{} : src_expr[s];
    for (auto& [t, y] : st.occ) {
      Rat c = pa.transitions[t].to.at(s);
      if (pa.transitions[t].from == s) c -= 1;
      if (c != 0) row.push_back({y, c});
    }
    if (auto it = st.div.find(s); it != st.div.end())
      row.push_back({it->second, Rat(-1)});
    row.push_back({st.stop[s], Rat(-1)});
    lp.add_eq(row, -src_const[s]);
  }
  return st;
}

std::vector<Rat> dist_vec(const SubDist& mu, int n) {
  std::vector<Rat> v(n, Rat(0));
  for (auto& [s, w] : mu.weights()) v[s] = w;
  return v;
}

SubDist read_dist(const std::vector<Rat>& sol, const std::vector<int>& vars) {
  std::map<State, Rat> w;
  for (size_t s = 0; s < vars.size(); ++s)
    if (sol[vars[s]] != 0) w[static_cast<State>(s)] = sol[vars[s]];
  return SubDist(std::move(w));
}

}  // namespace

std::optional<FlowCertificate> weak_tau_member(const SubDist& mu,
                                               const SubDist& nu, const PA& pa) {
  int n = static_cast<int>(pa.size());
  LP lp;
  TauStage st = add_tau_stage(lp, pa, divergence_set(pa), dist_vec(mu, n), {});
  for (int s = 0; s < n; ++s) lp.add_eq({{st.stop[s], Rat(1)}}, nu.at(s));
  auto sol = lp.solve();
  if (!sol) return std::nullopt;
  FlowCertificate cert;
  for (auto& [t, y] : st.occ)
    if ((*sol)[y] != 0) cert.occupancy[t] = (*sol)[y];
  cert.stop = nu;
  std::map<State, Rat> dv;
  for (auto& [s, v] : st.div)
    if ((*sol)[v] != 0) dv[s] = (*sol)[v];
  cert.diverted = SubDist(std::move(dv));
  return cert;
}

WeakStepVars weak_step_lp(const SubDist& mu, const std::optional<Action>& alpha,
                          const PA& pa, bool hat) {
  int n = static_cast<int>(pa.size());
  std::set<State> D = divergence_set(pa);
  WeakStepVars out;
  TauStage first = add_tau_stage(out.lp, pa, D, dist_vec(mu, n), {});
  if (!alpha || (alpha->is_tau() && hat)) {
    out.stop_var = first.stop;
    return out;
  }
  // middle stage: every unit stopped by the first stage takes an alpha step
  std::map<int, int> xvar;
  for (int t = 0; t < static_cast<int>(pa.transitions.size()); ++t)
    if (pa.transitions[t].act == *alpha) xvar[t] = out.lp.add_var();
  for (int s = 0; s < n; ++s) {
    LinRow row{{first.stop[s], Rat(1)}};
    for (auto& [t, x] : xvar)
      if (pa.transitions[t].from == s) row.push_back({x, Rat(-1)});
    out.lp.add_eq(row, Rat(0));
  }
  std::vector<LinRow> eta(n);
  for (auto& [t, x] : xvar)
    for (auto& [u, w] : pa.transitions[t].to.weights()) eta[u].push_back({x, w});
  TauStage last =
      add_tau_stage(out.lp, pa, D, std::vector<Rat>(n, Rat(0)), eta);
  out.stop_var = last.stop;
  return out;
}

bool weak_label_member(const SubDist& mu, const Action& alpha,
                       const SubDist& nu, const PA& pa, bool hat) {
  WeakStepVars w = weak_step_lp(mu, alpha, pa, hat);
  for (size_t s = 0; s < w.stop_var.size(); ++s)
    w.lp.add_eq({{w.stop_var[s], Rat(1)}}, nu.at(static_cast<State>(s)));
  return w.lp.solve().has_value();
}

namespace {

// choice: state -> tau transition index, or -1 for stopping. Enumerates all
// deterministic assignments over the states actually reachable from the
// seeds through chosen transitions.
void enum_tau_policies(const PA& pa, const std::set<State>& seeds, int& used,
                       int budget, std::map<State, int>& choice,
                       const std::function<void(const std::map<State, int>&)>& emit) {
  // find an undecided reachable state
  std::deque<State> frontier(seeds.begin(), seeds.end());
  std::set<State> seen(seeds.begin(), seeds.end());
  State undecided = -1;
  while (!frontier.empty() && undecided < 0) {
    State s = frontier.front();
    frontier.pop_front();
    auto it = choice.find(s);
    if (it == choice.end()) {
      undecided = s;
      break;
    }
    if (it->second >= 0)
      for (auto& [u, w] : pa.transitions[it->second].to.weights())
        if (seen.insert(u).second) frontier.push_back(u);
  }
  if (undecided < 0) {
    if (++used > budget)
      throw BudgetError("policy budget " + std::to_string(budget) + " exceeded");
    emit(choice);
    return;
  }
  choice[undecided] = -1;
  enum_tau_policies(pa, seeds, used, budget, choice, emit);
  for (int t : pa.outgoing[undecided])
    if (pa.transitions[t].act.is_tau()) {
      choice[undecided] = t;
      enum_tau_policies(pa, seeds, used, budget, choice, emit);
    }
  choice.erase(undecided);
}

// Exact limit outcome of running a deterministic stationary policy from mu:
// states whose mass can never leave the moving region are cut out (that mass
// silently diverges), the rest is an absorbing chain solved by Gaussian
// elimination on expected occupancies.
SubDist policy_outcome(const PA& pa, const std::map<State, int>& choice,
                       const SubDist& mu) {
  std::set<State> moving;
  for (auto& [s, t] : choice)
    if (t >= 0) moving.insert(s);
  // escapers: moving states with a path to a non-moving state
  std::set<State> escapers;
  bool grew = true;
  while (grew) {
    grew = false;
    for (State s : moving) {
      if (escapers.count(s)) continue;
      for (auto& [u, w] : pa.transitions[choice.at(s)].to.weights())
        if (!moving.count(u) || escapers.count(u)) {
          escapers.insert(s);
          grew = true;
          break;
        }
    }
  }
  std::vector<State> order(escapers.begin(), escapers.end());
  int m = static_cast<int>(order.size());
  std::map<State, int> idx;
  for (int i = 0; i < m; ++i) idx[order[i]] = i;
  // occupancy o solves o(u) = mu(u) + sum_v o(v) P(v,u)
  std::vector<std::vector<Rat>> a(m, std::vector<Rat>(m + 1, Rat(0)));
  for (int i = 0; i < m; ++i) {
    a[i][i] = 1;
    a[i][m] = mu.at(order[i]);
  }
  for (int j = 0; j < m; ++j)
    for (auto& [u, w] : pa.transitions[choice.at(order[j])].to.weights())
      if (auto it = idx.find(u); it != idx.end()) a[it->second][j] -= w;
  for (int c = 0; c < m; ++c) {
    int piv = -1;
    for (int r = c; r < m; ++r)
      if (a[r][c] != 0) {
        piv = r;
        break;
      }
    if (piv < 0) throw std::runtime_error("singular occupancy system");
    std::swap(a[c], a[piv]);
    for (int r = 0; r < m; ++r) {
      if (r == c || a[r][c] == 0) continue;
      Rat f = a[r][c] / a[c][c];
      for (int k = c; k <= m; ++k) a[r][k] -= f * a[c][k];
    }
  }
  std::vector<Rat> o(m);
  for (int i = 0; i < m; ++i) o[i] = a[i][m] / a[i][i];
  std::map<State, Rat> out;
  for (auto& [s, w] : mu.weights())
    if (!moving.count(s)) out[s] += w;
  for (int i = 0; i < m; ++i)
    for (auto& [u, w] : pa.transitions[choice.at(order[i])].to.weights())
      if (!moving.count(u)) {
        Rat c = o[i] * w;
        if (c != 0) out[u] += c;
      }
  for (auto it = out.begin(); it != out.end();)
    it = it->second == 0 ? out.erase(it) : std::next(it);
  return SubDist(std::move(out));
}

void silent_outcomes(const PA& pa, const SubDist& mu, int& used, int budget,
                     std::set<SubDist>& out) {
  if (mu.empty()) {
    out.insert(mu);
    return;
  }
  std::map<State, int> choice;
  enum_tau_policies(pa, mu.support(), used, budget, choice,
                    [&](const std::map<State, int>& c) {
                      out.insert(policy_outcome(pa, c, mu));
                    });
}

}  // namespace

std::vector<SubDist> generators(State s, const std::optional<Action>& alpha,
                                const PA& pa, int max_policies) {
  int used = 0;
  std::set<SubDist> silent;
  silent_outcomes(pa, SubDist::point(s), used, max_policies, silent);
  if (!alpha || alpha->is_tau()) return {silent.begin(), silent.end()};
  std::set<SubDist> out;
  for (const SubDist& omega : silent) {
    if (omega.empty()) {
      out.insert(omega);
      continue;
    }
    // every stopped unit must take an alpha transition; enumerate the
    // deterministic per-state picks
    std::set<State> osupp = omega.support();
    std::vector<State> supp(osupp.begin(), osupp.end());
    std::vector<std::vector<int>> picks;
    bool stuck = false;
    for (State u : supp) {
      auto ts = pa.steps_from(u, *alpha);
      if (ts.empty()) {
        stuck = true;
        break;
      }
      picks.push_back(ts);
    }
    if (stuck) continue;
    std::vector<size_t> sel(supp.size(), 0);
    for (;;) {
      if (++used > max_policies)
        throw BudgetError("policy budget " + std::to_string(max_policies) +
                          " exceeded");
      std::map<State, Rat> eta;
      for (size_t i = 0; i < supp.size(); ++i)
        for (auto& [u, w] : pa.transitions[picks[i][sel[i]]].to.weights())
          eta[u] += omega.at(supp[i]) * w;
      silent_outcomes(pa, SubDist(std::move(eta)), used, max_policies, out);
      size_t i = 0;
      while (i < sel.size() && ++sel[i] == picks[i].size()) sel[i++] = 0;
      if (i == sel.size()) break;
    }
  }
  return {out.begin(), out.end()};
}

namespace {

// k-stage truncation: each stage lets every state park part of its mass and
// push the rest through tau transitions. Returns the per-stage stop
// variables and the variables holding the final still-moving mass.
struct FinitaryVars {
  LP lp;
  std::vector<LinRow> total;  // per state: linear expression for nu(s)
};

FinitaryVars build_finitary(const SubDist& mu, int k, const PA& pa) {
  int n = static_cast<int>(pa.size());
  FinitaryVars f;
  f.total.assign(n, {});
  std::vector<int> taus;
  for (int t = 0; t < static_cast<int>(pa.transitions.size()); ++t)
    if (pa.transitions[t].act.is_tau()) taus.push_back(t);
  // cur[s]: expression for the moving mass at s entering the stage
  std::vector<std::pair<Rat, int>> cur(n);  // constant or variable (-1: const)
  for (int s = 0; s < n; ++s) cur[s] = {mu.at(s), -1};
  for (int stage = 0; stage < k; ++stage) {
    std::vector<int> y(taus.size());
    for (auto& v : y) v = f.lp.add_var();
    std::vector<int> stop(n), next(n);
    for (auto& v : stop) v = f.lp.add_var();
    for (auto& v : next) v = f.lp.add_var();
    for (int s = 0; s < n; ++s) {
      LinRow row{{stop[s], Rat(1)}};
      for (size_t i = 0; i < taus.size(); ++i)
        if (pa.transitions[taus[i]].from == s) row.push_back({y[i], Rat(1)});
      Rat rhs = 0;
      if (cur[s].second >= 0)
        row.push_back({cur[s].second, Rat(-1)});
      else
        rhs = cur[s].first;
      f.lp.add_eq(row, rhs);
      LinRow inflow{{next[s], Rat(1)}};
      for (size_t i = 0; i < taus.size(); ++i) {
        Rat c = pa.transitions[taus[i]].to.at(s);
        if (c != 0) inflow.push_back({y[i], -c});
      }
      f.lp.add_eq(inflow, Rat(0));
      f.total[s].push_back({stop[s], Rat(1)});
    }
    for (int s = 0; s < n; ++s) cur[s] = {Rat(0), next[s]};
  }
  for (int s = 0; s < n; ++s)
    if (cur[s].second >= 0)
      f.total[s].push_back({cur[s].second, Rat(1)});
    else if (cur[s].first != 0) {
      int c = f.lp.add_var();
      f.lp.add_eq({{c, Rat(1)}}, cur[s].first);
      f.total[s].push_back({c, Rat(1)});
    }
  return f;
}

}  // namespace

bool finitary_reach_within(const SubDist& mu, const SubDist& nu, int k,
                           const PA& pa) {
  if (k < 0) throw std::runtime_error("negative depth");
  FinitaryVars f = build_finitary(mu, k, pa);
  for (int s = 0; s < static_cast<int>(pa.size()); ++s)
    f.lp.add_eq(f.total[s], nu.at(s));
  return f.lp.solve().has_value();
}

Rat finitary_min_mass_at(const SubDist& mu, State s0, int k, const PA& pa) {
  if (k < 0) throw std::runtime_error("negative depth");
  FinitaryVars f = build_finitary(mu, k, pa);
  auto r = f.lp.minimize(f.total[s0]);
  if (!r) throw std::runtime_error("finitary system infeasible");
  return r->first;
}

}  // namespace paw
