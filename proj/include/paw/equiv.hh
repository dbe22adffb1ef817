// Weak bisimilarity and weak congruence of closed expressions, via partition
// refinement over the joint automaton with an LP matching oracle.
#pragma once

#include "paw/dist.hh"
#include "paw/semantics.hh"

namespace paw {

struct BisimResult {
  bool verdict = false;
  EquivPartition partition;  // coarsest weak bisimulation on the joint PA
  bool root_check = true;    // congruence queries: non-idling root matching
  JointPA joint;
};

// Greatest partition where every strong step of a state is matched by each
// blockmate through a weak (idling-allowed) step into a blockwise-equal
// distribution.
EquivPartition coarsest_partition(const PA& pa);

// s's strong steps all matched by t against the given partition; hat=false
// additionally forbids idling on tau (the root condition of congruence).
bool simulates_strong_steps(State s, State t, const PA& pa,
                            const EquivPartition& part, bool hat);

BisimResult weak_bisim(const NExprP& e, const NExprP& f,
                       int max_states = kDefaultMaxStates);
BisimResult weak_congruence(const NExprP& e, const NExprP& f,
                            int max_states = kDefaultMaxStates);

}  // namespace paw
