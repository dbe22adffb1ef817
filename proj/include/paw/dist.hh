// Finitely supported subprobability distributions over integer state ids,
// with exact rational weights, plus equivalence partitions and the lifting
// of a state relation to distributions.
#pragma once

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "paw/rational.hh"

namespace paw {

using State = int;

class SubDist {
 public:
  SubDist() = default;
  explicit SubDist(std::map<State, Rat> w);
  static SubDist point(State s, const Rat& w = Rat(1));  // w * delta_s

  const std::map<State, Rat>& weights() const { return w_; }
  Rat at(State s) const;
  bool empty() const { return w_.empty(); }
  std::set<State> support() const;

  bool operator==(const SubDist& o) const { return w_ == o.w_; }
  bool operator<(const SubDist& o) const { return w_ < o.w_; }

  std::string str() const;

 private:
  std::map<State, Rat> w_;  // all values strictly positive, sum <= 1
};

Rat mass(const SubDist& mu);
SubDist add(const SubDist& mu, const SubDist& nu);   // throws if mass > 1
SubDist sub(const SubDist& mu, const SubDist& nu);   // requires nu <= mu
SubDist scale(const Rat& lambda, const SubDist& mu); // throws if mass > 1
bool leq(const SubDist& mu, const SubDist& nu);      // pointwise

struct EquivPartition {
  std::vector<std::set<State>> blocks;  // nonempty, disjoint, exhaustive

  int block_of(State s) const;  // -1 if absent
  bool same_block(State s, State t) const;
  static EquivPartition discrete(int n_states);
  static EquivPartition single(int n_states);
};

// Lifted relation membership for an equivalence presented as a partition:
// per-block mass equality.
bool lift_equiv_check(const SubDist& mu, const SubDist& nu,
                      const EquivPartition& part);

// Lifted relation membership for an arbitrary relation R: existence of a
// coupling supported on R with marginals mu and nu (decided by max-flow).
bool lift_equiv_check(const SubDist& mu, const SubDist& nu,
                      const std::set<std::pair<State, State>>& rel);

}  // namespace paw
