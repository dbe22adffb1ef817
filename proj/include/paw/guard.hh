// Probabilistic unguardedness E |> V, guardedness of expressions, and strong
// unguardedness (a free occurrence outside any prefix).
#pragma once

#include <set>
#include <string>

#include "paw/syntax.hh"

namespace paw {

using VarSet = std::set<std::string>;

// All derivable sets V with E |> V. Rules: X |> {X}; tau.P inherits from P;
// rec X E turns V != {X} into V minus X; choice takes either side; <E> is
// transparent; P (+p) Q unions one set from each side.
std::set<VarSet> unguarded_sets(const NExprP& e);

// E |> {X}: a silent transition can concentrate all mass on expressions
// where X is strongly unguarded.
bool is_unguarded(const NExprP& e, const std::string& x);

// every recursion rec X F occurring inside e has X guarded in F
bool is_guarded_expr(const NExprP& e);

// X free in e outside any prefix (including tau)
bool strongly_unguarded(const NExprP& e, const std::string& x);

// The nonprobabilistic variant: some free occurrence of X outside any
// visible prefix, probabilistic choice being transparent. Kept only as the
// degenerate singleton-set check for regressions.
bool nonprob_unguarded(const NExprP& e, const std::string& x);

}  // namespace paw
