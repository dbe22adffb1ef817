// Exact-rational linear program feasibility (and optional minimization),
// implemented as a dense two-phase simplex with Bland's rule. All variables
// are nonnegative; constraints are equalities or <= inequalities.
#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "paw/rational.hh"

namespace paw {

using LinTerm = std::pair<int, Rat>;  // (variable, coefficient)
using LinRow = std::vector<LinTerm>;

class LP {
 public:
  int add_var();                                  // fresh x >= 0
  int num_vars() const { return nvars_; }
  void add_eq(const LinRow& row, const Rat& rhs);
  void add_le(const LinRow& row, const Rat& rhs);

  // Some assignment satisfying all constraints, or nullopt.
  std::optional<std::vector<Rat>> solve() const;

  // Minimizes sum(obj) over the feasible region; nullopt if infeasible.
  // The region must be bounded in the objective direction (it always is for
  // the mass-conserving flow systems built here).
  std::optional<std::pair<Rat, std::vector<Rat>>> minimize(const LinRow& obj) const;

 private:
  struct Con {
    LinRow row;
    Rat rhs;
    bool eq;
  };
  int nvars_ = 0;
  std::vector<Con> cons_;
};

}  // namespace paw
