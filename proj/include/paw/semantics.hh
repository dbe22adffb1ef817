// Operational semantics: strong transitions of expressions and construction
// of the reachable finite probabilistic automaton.
#pragma once

#include <map>
#include <string>
#include <vector>

#include "paw/dist.hh"
#include "paw/errors.hh"
#include "paw/syntax.hh"

namespace paw {

// Distribution over expressions, deduplicated modulo alpha with a
// deterministic iteration order (keyed on the canonical encoding).
class ExprDist {
 public:
  void add(const NExprP& e, const Rat& w);
  const std::map<std::string, std::pair<NExprP, Rat>>& entries() const { return m_; }
  bool operator==(const ExprDist& o) const;
  bool operator<(const ExprDist& o) const;

 private:
  std::map<std::string, std::pair<NExprP, Rat>> m_;
};

struct Transition {
  State from;
  Action act;
  SubDist to;  // mass exactly 1
};

struct PA {
  std::vector<NExprP> states;
  std::vector<Transition> transitions;
  State initial = 0;

  std::vector<std::vector<int>> outgoing;  // state -> transition indices
  void index();                            // (re)build outgoing

  std::vector<int> steps_from(State s, const Action& a) const;
  size_t size() const { return states.size(); }

  std::string to_json() const;
  std::string to_dot() const;
};

inline constexpr int kDefaultMaxStates = 10000;

// The unique distribution a probabilistic expression denotes (mass 1).
ExprDist pexp_dist(const PExprP& p);

// All derivable strong transitions of an expression; free variables
// contribute none, recursion is unfolded.
std::vector<std::pair<Action, ExprDist>> strong_steps(const NExprP& e);

PA build_pa(const NExprP& e, int max_states = kDefaultMaxStates);

// Joint reachable automaton for two roots (used by the equivalence checker);
// init_a is always 0.
struct JointPA {
  PA pa;
  State init_a = 0;
  State init_b = 0;
};
JointPA build_joint_pa(const NExprP& a, const NExprP& b,
                       int max_states = kDefaultMaxStates);

}  // namespace paw
