#include "paw/guard.hh"

#include <functional>

namespace paw {

namespace {

std::set<VarSet> ung_n(const NExprP& e);

std::set<VarSet> ung_p(const PExprP& p) {
  if (p->kind == PKind::Dirac) return ung_n(p->inner);
  std::set<VarSet> left = ung_p(p->left), right = ung_p(p->right), out;
  for (auto& v : left)
    for (auto& w : right) {
      VarSet u = v;
      u.insert(w.begin(), w.end());
      out.insert(std::move(u));
    }
  return out;
}

std::set<VarSet> ung_n(const NExprP& e) {
  switch (e->kind) {
    case NKind::Nil:
      return {};
    case NKind::Var:
      return {{e->name}};
    case NKind::Prefix:
      return e->act.is_tau() ? ung_p(e->parg) : std::set<VarSet>{};
    case NKind::Choice: {
      std::set<VarSet> out = ung_n(e->left), right = ung_n(e->right);
      out.insert(right.begin(), right.end());
      return out;
    }
    case NKind::Rec: {
      std::set<VarSet> out;
      for (auto& v : ung_n(e->left)) {
        if (v == VarSet{e->name}) continue;
        VarSet u = v;
        u.erase(e->name);
        out.insert(std::move(u));
      }
      return out;
    }
  }
  return {};
}

}  // namespace

std::set<VarSet> unguarded_sets(const NExprP& e) { return ung_n(e); }

bool is_unguarded(const NExprP& e, const std::string& x) {
  return ung_n(e).count(VarSet{x}) > 0;
}

bool is_guarded_expr(const NExprP& e) {
  switch (e->kind) {
    case NKind::Nil:
    case NKind::Var:
      return true;
    case NKind::Prefix: {
      std::function<bool(const PExprP&)> walk = [&](const PExprP& p) {
        if (p->kind == PKind::Dirac) return is_guarded_expr(p->inner);
        return walk(p->left) && walk(p->right);
      };
      return walk(e->parg);
    }
    case NKind::Choice:
      return is_guarded_expr(e->left) && is_guarded_expr(e->right);
    case NKind::Rec:
      return !is_unguarded(e->left, e->name) && is_guarded_expr(e->left);
  }
  return true;
}

bool strongly_unguarded(const NExprP& e, const std::string& x) {
  switch (e->kind) {
    case NKind::Var:
      return e->name == x;
    case NKind::Choice:
      return strongly_unguarded(e->left, x) || strongly_unguarded(e->right, x);
    case NKind::Rec:
      return e->name != x && strongly_unguarded(e->left, x);
    default:
      return false;
  }
}

namespace {

bool np_ung_p(const PExprP& p, const std::string& x);

bool np_ung_n(const NExprP& e, const std::string& x) {
  switch (e->kind) {
    case NKind::Nil:
      return false;
    case NKind::Var:
      return e->name == x;
    case NKind::Prefix:
      return e->act.is_tau() && np_ung_p(e->parg, x);
    case NKind::Choice:
      return np_ung_n(e->left, x) || np_ung_n(e->right, x);
    case NKind::Rec:
      return e->name != x && np_ung_n(e->left, x);
  }
  return false;
}

bool np_ung_p(const PExprP& p, const std::string& x) {
  if (p->kind == PKind::Dirac) return np_ung_n(p->inner, x);
  return np_ung_p(p->left, x) || np_ung_p(p->right, x);
}

}  // namespace

bool nonprob_unguarded(const NExprP& e, const std::string& x) {
  return np_ung_n(e, x);
}

}  // namespace paw
