// Position-addressed bidirectional rewriting with the eighteen equational
// laws of weak congruence, plus verifiable proof traces, trace combinators,
// and the derived procedures: explicit sum/psum rearrangement, absorption of
// an unguarded variable (E = E + X) and the guarding transformation.
#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "paw/syntax.hh"

namespace paw {

enum class Axiom {
  N1, N2, N3, N4,      // sum: commutativity, associativity, idempotence, unit
  P1, P2, P3,          // psum: commutativity, associativity, idempotence
  T1, T2, T3, T4,      // silent-step laws
  C,                   // convex interpolation of equal-action branches
  R1, R2, R3, R4, R5, R6,  // recursion laws
};

std::string axiom_name(Axiom a);
Axiom axiom_from_name(const std::string& name);

struct StepError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One rewrite at a position, left-to-right when forward. Most steps are
// fully determined by the redex; the argument maps carry exactly the data
// that is not (R1/R2 endpoints, convex coefficients, R6 weights).
struct RewriteStep {
  Path pos;
  Axiom ax = Axiom::N1;
  bool forward = true;
  std::map<std::string, NExprP> eargs;       // expression metavariables
  std::map<std::string, std::string> nargs;  // binder names
  std::map<std::string, Rat> rargs;          // probabilities
  std::vector<Rat> plist;                    // R6 reverse: branch weights
  int premise = -1;                          // R2: index into trace premises
};

struct ProofTrace {
  NExprP start, end;
  std::vector<RewriteStep> steps;
  std::vector<ProofTrace> premises;  // R2 subproofs, referenced by index

  std::string to_json(int indent = -1) const;
  static ProofTrace from_json(const std::string& text);
};

// Applies one step; premises are consulted only by R2. Throws StepError on
// invalid position, pattern mismatch or failed side condition.
NExprP apply_step(const NExprP& e, const RewriteStep& s,
                  const std::vector<ProofTrace>& premises = {});

// The same step undone: direction flipped, with any arguments that are only
// derivable from the pre-step expression filled in from `before`.
RewriteStep inverted(const RewriteStep& s, const NExprP& before);

// All positions (and directions) where the axiom applies with a canonical,
// parameter-free instantiation. Parameterized matches (C forward, P3/R1
// reverse, R2, R6 reverse) are not searched.
std::vector<RewriteStep> enumerate_redexes(const NExprP& e, Axiom a);

struct VerifyResult {
  bool ok = true;
  int failed_step = -1;  // -1: endpoint mismatch or premise failure
  std::string reason;
  explicit operator bool() const { return ok; }
};
VerifyResult verify_trace(const ProofTrace& t);

// Combinators. All of them keep traces replayable; concat and substitution
// check their result and throw StepError when endpoints do not line up.
ProofTrace trace_refl(const NExprP& e);
ProofTrace trace_step(const NExprP& start, RewriteStep s,
                      std::vector<ProofTrace> premises = {});
ProofTrace concat(ProofTrace a, const ProofTrace& b);
ProofTrace reverse_trace(const ProofTrace& t);
// Same rewrites inside a bigger expression: the hole at pos of root.
ProofTrace embed(const NExprP& root, const Path& pos, const ProofTrace& t);
// The trace with a substitution applied throughout (endpoints, arguments,
// premises); verified after the fact.
ProofTrace subst_trace(const ProofTrace& t, const Bindings& bs);

// Flattened views of + spines and psum combs (weights multiplied down).
std::vector<NExprP> summands(const NExprP& e);
struct PLeaf {
  Rat w;
  NExprP e;
};
std::vector<PLeaf> pleaves(const PExprP& p);

// Explicit rearrangement: emits N1/N2 (P1/P2) steps that permute the
// flattened summand list at pos into the given order (order[i] = old index
// of the new i-th element) and reassociate canonically: sums left-nested,
// psums right-nested. Steps are appended, the rewritten root is returned.
NExprP permute_sum(const NExprP& root, const Path& pos,
                   const std::vector<int>& order,
                   std::vector<RewriteStep>& steps,
                   bool right_nested = false);
NExprP permute_psum(const NExprP& root, const Path& pos,
                    const std::vector<int>& order,
                    std::vector<RewriteStep>& steps);

// E = E + X for X unguarded in E, by structural induction.
ProofTrace absorb_unguarded_var(const NExprP& e, const std::string& x);

// A guarded expression provably equal to the input.
struct GuardResult {
  NExprP guarded;
  ProofTrace trace;
};
GuardResult guard_transform(const NExprP& e);

}  // namespace paw
