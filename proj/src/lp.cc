#include "paw/lp.hh"

#include <stdexcept>

namespace paw {

int LP::add_var() { return nvars_++; }

void LP::add_eq(const LinRow& row, const Rat& rhs) { cons_.push_back({row, rhs, true}); }

void LP::add_le(const LinRow& row, const Rat& rhs) { cons_.push_back({row, rhs, false}); }

namespace {

// Dense tableau of basic rows; basis[i] is the variable owning row i.
// Reduced costs are recomputed each pivot, which is fine at our sizes.
struct Tableau {
  int n = 0;  // columns (variables), excluding rhs
  std::vector<std::vector<Rat>> rows;
  std::vector<Rat> rhs;
  std::vector<int> basis;

  void pivot(int r, int c) {
    Rat piv = rows[r][c];
    for (auto& v : rows[r]) v /= piv;
    rhs[r] /= piv;
    for (size_t i = 0; i < rows.size(); ++i) {
      if (static_cast<int>(i) == r) continue;
      Rat f = rows[i][c];
      if (f == 0) continue;
      for (int j = 0; j < n; ++j) rows[i][j] -= f * rows[r][j];
      rhs[i] -= f * rhs[r];
    }
    basis[r] = c;
  }

  // Minimizes cost over the current basis, only letting columns below limit
  // enter. Bland's rule throughout, so it terminates on degenerate systems.
  // Returns false on an unbounded ray.
  bool optimize(const std::vector<Rat>& cost, int limit) {
    for (;;) {
      std::vector<Rat> red = cost;
      for (size_t i = 0; i < rows.size(); ++i) {
        Rat cb = cost[basis[i]];
        if (cb == 0) continue;
        for (int j = 0; j < limit; ++j) red[j] -= cb * rows[i][j];
      }
      int enter = -1;
      for (int j = 0; j < limit; ++j)
        if (red[j] < 0) {
          enter = j;
          break;
        }
      if (enter < 0) return true;
      int leave = -1;
      Rat best = 0;
      for (size_t i = 0; i < rows.size(); ++i) {
        if (rows[i][enter] <= 0) continue;
        Rat ratio = rhs[i] / rows[i][enter];
        if (leave < 0 || ratio < best ||
            (ratio == best && basis[i] < basis[leave]))
          leave = static_cast<int>(i), best = ratio;
      }
      if (leave < 0) return false;
      pivot(leave, enter);
    }
  }

  Rat objective(const std::vector<Rat>& cost) const {
    Rat v = 0;
    for (size_t i = 0; i < rows.size(); ++i) v += cost[basis[i]] * rhs[i];
    return v;
  }
};

}  // namespace

std::optional<std::pair<Rat, std::vector<Rat>>> LP::minimize(const LinRow& obj) const {
  int m = static_cast<int>(cons_.size());
  int nslack = 0;
  for (auto& c : cons_)
    if (!c.eq) ++nslack;
  Tableau t;
  t.n = nvars_ + nslack + m;  // original, slacks, artificials
  int slack0 = nvars_, art0 = nvars_ + nslack;
  t.rows.assign(m, std::vector<Rat>(t.n, Rat(0)));
  t.rhs.assign(m, Rat(0));
  t.basis.assign(m, 0);
  int si = 0;
  for (int i = 0; i < m; ++i) {
    const Con& c = cons_[i];
    for (auto& [v, coef] : c.row) {
      if (v < 0 || v >= nvars_) throw std::runtime_error("bad variable in constraint");
      t.rows[i][v] += coef;
    }
    t.rhs[i] = c.rhs;
    if (!c.eq) t.rows[i][slack0 + si++] = 1;
    if (t.rhs[i] < 0) {
      for (auto& v : t.rows[i]) v = -v;
      t.rhs[i] = -t.rhs[i];
    }
    t.rows[i][art0 + i] = 1;
    t.basis[i] = art0 + i;
  }

  std::vector<Rat> phase1(t.n, Rat(0));
  for (int i = 0; i < m; ++i) phase1[art0 + i] = 1;
  t.optimize(phase1, t.n);
  if (t.objective(phase1) != 0) return std::nullopt;

  // Drive leftover (degenerate) artificials out of the basis where possible;
  // a row with no eligible pivot is redundant and stays pinned at zero.
  for (int i = 0; i < m; ++i) {
    if (t.basis[i] < art0) continue;
    for (int j = 0; j < art0; ++j)
      if (t.rows[i][j] != 0) {
        t.pivot(i, j);
        break;
      }
  }

  std::vector<Rat> phase2(t.n, Rat(0));
  for (auto& [v, coef] : obj) phase2[v] += coef;
  if (!t.optimize(phase2, art0)) throw std::runtime_error("unbounded objective");

  std::vector<Rat> x(nvars_, Rat(0));
  for (int i = 0; i < m; ++i)
    if (t.basis[i] < nvars_) x[t.basis[i]] = t.rhs[i];
  return std::make_pair(t.objective(phase2), std::move(x));
}

std::optional<std::vector<Rat>> LP::solve() const {
  auto r = minimize({});
  if (!r) return std::nullopt;
  return std::move(r->second);
}

}  // namespace paw
