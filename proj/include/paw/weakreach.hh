// Weak transition relations of a finite probabilistic automaton under the
// infinitary convex semantics: mu => nu (silent), mu =>alpha nu, and the
// idling variant =>alpha-hat, decided by exact-rational flow feasibility.
// Also: deterministic stationary policy enumeration (generator sets whose
// convex hull is the silent reachable set) and the depth-bounded finitary
// approximation.
#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "paw/dist.hh"
#include "paw/errors.hh"
#include "paw/lp.hh"
#include "paw/semantics.hh"

namespace paw {

// Executable witness for mu => nu: how much mass crosses each tau
// transition, where it finally stops, and what escapes silently into the
// divergence-capable region.
struct FlowCertificate {
  std::map<int, Rat> occupancy;  // tau-transition index -> mass through it
  SubDist stop;                  // equals the target nu
  SubDist diverted;              // supported on divergence_set
  std::string to_json() const;
};

inline constexpr int kDefaultMaxPolicies = 1 << 16;

// mu --alpha--> nu under the convex lifting: every unit of mu takes some
// alpha transition and the chosen targets mix to exactly nu.
bool combined_step(const SubDist& mu, const Action& alpha, const SubDist& nu,
                   const PA& pa);

// Greatest set D where every member has a single tau transition staying
// inside D: exactly the states able to lose all their mass silently.
std::set<State> divergence_set(const PA& pa);

std::optional<FlowCertificate> weak_tau_member(const SubDist& mu,
                                               const SubDist& nu, const PA& pa);

// mu => -->alpha => nu; for hat=true and alpha=tau, idling (mu => nu) also
// counts.
bool weak_label_member(const SubDist& mu, const Action& alpha,
                       const SubDist& nu, const PA& pa, bool hat);

// Flow constraints for a weak step from mu into an undetermined target:
// stop_var[s] is the LP variable carrying the target's mass at s. Callers
// add their own constraints on those variables (the equivalence checker
// equates per-block sums). alpha absent means the silent relation.
struct WeakStepVars {
  LP lp;
  std::vector<int> stop_var;  // indexed by state
};
WeakStepVars weak_step_lp(const SubDist& mu, const std::optional<Action>& alpha,
                          const PA& pa, bool hat);

// Finite set G with: every nu reachable from delta_s by =>alpha-hat (or =>
// when alpha is absent) is a convex combination of G, and each member of G
// is itself reachable. Enumerates deterministic stationary policies; throws
// BudgetError past max_policies evaluations.
std::vector<SubDist> generators(State s, const std::optional<Action>& alpha,
                                const PA& pa,
                                int max_policies = kDefaultMaxPolicies);

// Membership in the k-stage finitary relation (combined tau steps with
// per-state stopping, truncated at depth k).
bool finitary_reach_within(const SubDist& mu, const SubDist& nu, int k,
                           const PA& pa);

// Least mass the k-stage relation can leave at s0.
Rat finitary_min_mass_at(const SubDist& mu, State s0, int k, const PA& pa);

}  // namespace paw
