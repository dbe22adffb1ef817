#include "doctest.h"

#include <random>

#include "paw/lp.hh"

using namespace paw;

TEST_CASE("feasibility basics") {
  LP lp;
  int x = lp.add_var(), y = lp.add_var();
  lp.add_eq({{x, Rat(1)}, {y, Rat(1)}}, Rat(1));
  lp.add_le({{x, Rat(1)}}, Rat(1, 3));
  auto sol = lp.solve();
  REQUIRE(sol);
  CHECK((*sol)[x] + (*sol)[y] == 1);
  CHECK((*sol)[x] <= Rat(1, 3));

  LP bad;
  int z = bad.add_var();
  bad.add_eq({{z, Rat(1)}}, Rat(1));
  bad.add_le({{z, Rat(1)}}, Rat(1, 2));
  CHECK(!bad.solve());
}

TEST_CASE("negative right-hand sides and implicit nonnegativity") {
  LP lp;
  int x = lp.add_var();
  lp.add_le({{x, Rat(-1)}}, Rat(-2));  // x >= 2
  auto sol = lp.solve();
  REQUIRE(sol);
  CHECK((*sol)[x] >= 2);

  LP bad;
  int y = bad.add_var();
  bad.add_le({{y, Rat(1)}}, Rat(-1));  // y <= -1 clashes with y >= 0
  CHECK(!bad.solve());
}

TEST_CASE("minimization finds exact optima") {
  LP lp;
  int x = lp.add_var(), y = lp.add_var();
  lp.add_eq({{x, Rat(1)}, {y, Rat(1)}}, Rat(1));
  lp.add_le({{y, Rat(1)}}, Rat(2, 5));
  auto r = lp.minimize({{x, Rat(1)}});
  REQUIRE(r);
  CHECK(r->first == Rat(3, 5));
  CHECK(r->second[x] == Rat(3, 5));
  CHECK(r->second[y] == Rat(2, 5));

  // transportation-flavoured: move one unit across two lanes with costs 3, 1
  LP tr;
  int a = tr.add_var(), b = tr.add_var();
  tr.add_eq({{a, Rat(1)}, {b, Rat(1)}}, Rat(1));
  tr.add_le({{b, Rat(1)}}, Rat(3, 4));
  auto t = tr.minimize({{a, Rat(3)}, {b, Rat(1)}});
  REQUIRE(t);
  CHECK(t->first == Rat(3) * Rat(1, 4) + Rat(3, 4));
}

TEST_CASE("degenerate and redundant systems") {
  LP lp;
  int x = lp.add_var(), y = lp.add_var();
  lp.add_eq({{x, Rat(1)}, {y, Rat(1)}}, Rat(1));
  lp.add_eq({{x, Rat(2)}, {y, Rat(2)}}, Rat(2));  // redundant copy
  lp.add_eq({{x, Rat(1)}}, Rat(0));               // pins x at a degenerate vertex
  auto sol = lp.solve();
  REQUIRE(sol);
  CHECK((*sol)[x] == 0);
  CHECK((*sol)[y] == 1);

  LP z;
  (void)z.add_var();
  z.add_eq({}, Rat(0));
  CHECK(z.solve());
  LP zbad;
  (void)zbad.add_var();
  zbad.add_eq({}, Rat(1));
  CHECK(!zbad.solve());
}

TEST_CASE("random systems: returned points satisfy all constraints") {
  std::mt19937 rng(7);
  std::uniform_int_distribution<int> coef(-3, 3), den(1, 4);
  for (int iter = 0; iter < 200; ++iter) {
    int n = 2 + iter % 4;
    LP lp;
    std::vector<int> vars;
    for (int i = 0; i < n; ++i) vars.push_back(lp.add_var());
    struct Row {
      LinRow row;
      Rat rhs;
      bool eq;
    };
    std::vector<Row> rows;
    int m = 1 + iter % 5;
    for (int c = 0; c < m; ++c) {
      LinRow row;
      for (int i = 0; i < n; ++i) {
        Rat cf(coef(rng), den(rng));
        if (cf != 0) row.push_back({vars[i], cf});
      }
      Rat rhs(coef(rng), den(rng));
      bool eq = (rng() & 1) != 0;
      rows.push_back({row, rhs, eq});
      if (eq)
        lp.add_eq(row, rhs);
      else
        lp.add_le(row, rhs);
    }
    auto sol = lp.solve();
    if (!sol) continue;
    for (auto& r : rows) {
      Rat lhs = 0;
      for (auto& [v, cf] : r.row) lhs += cf * (*sol)[v];
      if (r.eq)
        CHECK(lhs == r.rhs);
      else
        CHECK(lhs <= r.rhs);
    }
    for (auto& v : *sol) CHECK(v >= 0);
  }
}

TEST_CASE("random minimization agrees with a feasibility bisection probe") {
  // The optimum value v* is the least t with {obj = t} feasible; confirm the
  // reported optimum is feasible and that obj = v* - eps is not.
  std::mt19937 rng(11);
  std::uniform_int_distribution<int> coef(0, 3);
  for (int iter = 0; iter < 60; ++iter) {
    int n = 2 + iter % 3;
    LP lp;
    std::vector<int> vars;
    for (int i = 0; i < n; ++i) vars.push_back(lp.add_var());
    LinRow simplex_row;
    for (int i = 0; i < n; ++i) simplex_row.push_back({vars[i], Rat(1)});
    lp.add_eq(simplex_row, Rat(1));
    LinRow obj;
    for (int i = 0; i < n; ++i) obj.push_back({vars[i], Rat(coef(rng), 1)});
    auto r = lp.minimize(obj);
    REQUIRE(r);
    LP probe;
    std::vector<int> pv;
    for (int i = 0; i < n; ++i) pv.push_back(probe.add_var());
    LinRow prow, pobj;
    for (int i = 0; i < n; ++i) prow.push_back({pv[i], Rat(1)});
    for (size_t i = 0; i < obj.size(); ++i) pobj.push_back({pv[i], obj[i].second});
    probe.add_eq(prow, Rat(1));
    probe.add_eq(pobj, r->first - Rat(1, 1000));
    CHECK(!probe.solve());
  }
}
