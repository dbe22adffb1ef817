// Standard equation systems and the completeness pipeline: equational
// characterisation of guarded expressions, stationary transition trees with
// the shortcut/linearise algebra, saturation, joining of two systems along a
// bisimulation, unique solutions, and the end-to-end prover that turns a
// weak-congruence verdict into a machine-checkable axiomatic trace.
#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "paw/axioms.hh"
#include "paw/semantics.hh"
#include "paw/weakreach.hh"

namespace paw {

// System of equations X_i = S_i. Standard form restricts each S_i to a sum
// of prefixes over probabilistic combinations of formals plus free-variable
// summands; solve_unique also accepts semi-standard bodies (formals occur
// only as prefix targets or variable summands). The distinguished equation
// is index 0.
struct SES {
  std::vector<std::string> formals;
  std::vector<NExprP> defs;

  int size() const { return static_cast<int>(formals.size()); }
  int index_of(const std::string& x) const;  // -1 if not a formal

  std::string to_json() const;
  static SES from_json(const std::string& text);
};

struct SesFlags {
  bool standard = false;
  bool guarded = false;
  bool saturated = false;
};

// One strong transition of a definition body, kept per summand so that trace
// construction can address the exact syntactic summand it came from.
struct SesStep {
  int summand;      // index into the flattened summand list of the def
  Action act;
  SubDist target;   // over formal indices
};

// Per-state silent policy: for each state either no entry (stop) or a
// subdistribution scheduled from that state's silent combined transitions.
using StationaryPolicy = std::map<State, SubDist>;

// Finite representation of a stationary transition tree. Nodes are stored on
// non-stopping pioneer paths only; a child whose state already occurs on the
// path is a recursion edge, and the subtree hanging below it is a scaled copy
// of the subtree at the ancestor. node[q] holds the absolute distribution
// scheduled at path q (mass relative to the whole tree, not to the parent).
struct Stt {
  SubDist start;
  std::map<std::vector<State>, SubDist> node;

  Rat incoming(const std::vector<State>& q) const;
  int recursions() const;
  int tree_size() const;        // non-stopping pioneer nodes plus recursions
  SubDist leads_to() const;     // the induced weak transition target
  // Throws SesError when a stored invariant fails: scheduled mass above the
  // incoming mass, a non-pioneer or unreachable key, or a volume ratio that
  // is not stationary.
  void check_valid(const PA& pa) const;
};

// Solution of an SES: expressions E_i with per-equation traces E_i = S_i[E/X].
struct Solution {
  std::vector<NExprP> exprs;
  std::vector<ProofTrace> traces;
  bool perfect = false;
};

struct SesError : StepError {
  using StepError::StepError;
};

// Strong transitions read off def i. Requires the def to be standard.
std::vector<SesStep> ses_steps(const SES& ses, int i);

// PA with one state per formal and the transitions of ses_steps. Free
// variables do not contribute transitions.
PA induced_pa(const SES& ses);

SesFlags validate_ses(const SES& ses, int max_policies = kDefaultMaxPolicies);

// Builds a standard guarded SES satisfied by the guarded expression E, by
// structural recursion. The returned solution has exprs[0] == E and verified
// satisfaction traces. Throws SesError when E is not guarded.
std::pair<SES, Solution> characterise(const NExprP& e,
                                      long max_states = kDefaultMaxStates);

// The stationary transition tree induced by running theta from delta(start).
Stt tt_from_policy(const SES& ses, State start, const StationaryPolicy& theta);

struct SesUpdate {
  SES ses;
  Stt tt;
  Solution sol;  // updated satisfaction traces for the touched equation
};

// Shortcut at a non-stopping pioneer node of length >= 2 on which no node
// recurs: augments the last state's equation with a combined summand that
// jumps over the node, and rebuilds the tree with strictly smaller size.
SesUpdate shortcut(const SES& ses, const Stt& tt,
                   const std::vector<State>& node, const Solution& sol);

// Linearise at a pioneer node that recurs on itself: augments the equation
// with the loop-free scaled summand (introduced through R2/R3) and rescales
// the tree by lambda = incoming/(incoming - self); one recursion disappears.
SesUpdate linearise(const SES& ses, const Stt& tt,
                    const std::vector<State>& node, const Solution& sol);

// Adds strong transitions until every weak transition is matched by a strong
// combined one and the free-variable closure condition holds. Traces in the
// solution are extended so it still satisfies the grown system.
std::pair<SES, Solution> saturate(const SES& ses, const Solution& sol,
                                  int max_policies = kDefaultMaxPolicies);

struct JoinResult {
  SES ses;                            // the joint system over pair states
  std::vector<std::pair<int, int>> pairs;  // formal k of the joint system
                                           // is (i in S, j in T)
  Solution left;                      // satisfaction by the S-side solution
  Solution right;                     // satisfaction by the T-side solution
};

// Joins two guarded saturated systems whose distinguished solutions are
// weakly congruent into one guarded system satisfied by both.
JoinResult join(const SES& s, const Solution& sol_s, const SES& t,
                const Solution& sol_t, long max_states = kDefaultMaxStates);

// The recursive solution of a guarded (semi-)standard system, with traces
// and the isomorphism check recorded in Solution::perfect.
Solution solve_unique(const SES& ses, long max_states = kDefaultMaxStates);

// Traces F_i = E_i equating an arbitrary satisfying solution with the
// recursive one. Index 0 is the distinguished equation.
std::vector<ProofTrace> equate_solutions(const SES& ses, const Solution& e,
                                         const Solution& f);

// End-to-end prover: checks E and F closed and weakly congruent, then runs
// guard -> characterise -> saturate -> join -> unique solution and returns a
// verified trace E = F. Throws SesError when the pair is not congruent.
ProofTrace prove_equal(const NExprP& e, const NExprP& f,
                       long max_states = kDefaultMaxStates,
                       int max_policies = kDefaultMaxPolicies);

}  // namespace paw
