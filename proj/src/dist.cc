#include "paw/dist.hh"

#include <deque>
#include <sstream>

namespace paw {

SubDist::SubDist(std::map<State, Rat> w) : w_(std::move(w)) {
  Rat total = 0;
  for (auto it = w_.begin(); it != w_.end();) {
    if (it->second < 0)
      throw std::runtime_error("negative weight in distribution");
    if (it->second == 0) {
      it = w_.erase(it);
      continue;
    }
    total += it->second;
    ++it;
  }
  if (total > 1)
    throw std::runtime_error("distribution mass " + rat_str(total) + " exceeds 1");
}

SubDist SubDist::point(State s, const Rat& w) {
  if (w == 0) return SubDist();
  return SubDist({{s, w}});
}

Rat SubDist::at(State s) const {
  auto it = w_.find(s);
  return it == w_.end() ? Rat(0) : it->second;
}

std::set<State> SubDist::support() const {
  std::set<State> out;
  for (auto& [s, w] : w_) out.insert(s);
  return out;
}

std::string SubDist::str() const {
  std::ostringstream os;
  os << "{";
  bool first = true;
  for (auto& [s, w] : w_) {
    if (!first) os << ", ";
    first = false;
    os << s << " -> " << rat_str(w);
  }
  os << "}";
  return os.str();
}

Rat mass(const SubDist& mu) {
  Rat total = 0;
  for (auto& [s, w] : mu.weights()) total += w;
  return total;
}

SubDist add(const SubDist& mu, const SubDist& nu) {
  std::map<State, Rat> w = mu.weights();
  for (auto& [s, v] : nu.weights()) w[s] += v;
  return SubDist(std::move(w));  // constructor rejects mass > 1
}

SubDist sub(const SubDist& mu, const SubDist& nu) {
  std::map<State, Rat> w = mu.weights();
  for (auto& [s, v] : nu.weights()) {
    auto it = w.find(s);
    if (it == w.end() || it->second < v)
      throw std::runtime_error("subtrahend is not pointwise below");
    it->second -= v;
  }
  return SubDist(std::move(w));
}

SubDist scale(const Rat& lambda, const SubDist& mu) {
  if (lambda < 0) throw std::runtime_error("negative scaling factor");
  std::map<State, Rat> w;
  for (auto& [s, v] : mu.weights()) w[s] = lambda * v;
  return SubDist(std::move(w));
}

bool leq(const SubDist& mu, const SubDist& nu) {
  for (auto& [s, w] : mu.weights())
    if (w > nu.at(s)) return false;
  return true;
}

int EquivPartition::block_of(State s) const {
  for (size_t i = 0; i < blocks.size(); ++i)
    if (blocks[i].count(s)) return static_cast<int>(i);
  return -1;
}

bool EquivPartition::same_block(State s, State t) const {
  int b = block_of(s);
  return b >= 0 && b == block_of(t);
}

EquivPartition EquivPartition::discrete(int n_states) {
  EquivPartition p;
  for (State s = 0; s < n_states; ++s) p.blocks.push_back({s});
  return p;
}

EquivPartition EquivPartition::single(int n_states) {
  EquivPartition p;
  if (n_states > 0) {
    std::set<State> all;
    for (State s = 0; s < n_states; ++s) all.insert(s);
    p.blocks.push_back(std::move(all));
  }
  return p;
}

bool lift_equiv_check(const SubDist& mu, const SubDist& nu,
                      const EquivPartition& part) {
  std::map<int, Rat> diff;  // per-block mass of mu minus nu
  for (auto& [s, w] : mu.weights()) {
    int b = part.block_of(s);
    if (b < 0) throw std::runtime_error("state outside partition");
    diff[b] += w;
  }
  for (auto& [s, w] : nu.weights()) {
    int b = part.block_of(s);
    if (b < 0) throw std::runtime_error("state outside partition");
    diff[b] -= w;
  }
  for (auto& [b, d] : diff)
    if (d != 0) return false;
  return true;
}

// Coupling existence via Edmonds-Karp max-flow on the bipartite support
// graph; exact rational capacities.
bool lift_equiv_check(const SubDist& mu, const SubDist& nu,
                      const std::set<std::pair<State, State>>& rel) {
  if (mass(mu) != mass(nu)) return false;
  std::vector<State> ls, rs;
  for (auto& [s, w] : mu.weights()) ls.push_back(s);
  for (auto& [t, w] : nu.weights()) rs.push_back(t);
  int nl = static_cast<int>(ls.size()), nr = static_cast<int>(rs.size());
  int n = nl + nr + 2, src = nl + nr, snk = src + 1;
  std::vector<std::map<int, Rat>> cap(n);
  for (int i = 0; i < nl; ++i) cap[src][i] = mu.at(ls[i]);
  for (int j = 0; j < nr; ++j) cap[nl + j][snk] = nu.at(rs[j]);
  for (int i = 0; i < nl; ++i)
    for (int j = 0; j < nr; ++j)
      if (rel.count({ls[i], rs[j]})) cap[i][nl + j] = Rat(2);  // effectively unbounded
  Rat flow = 0, want = mass(mu);
  while (true) {
    std::vector<int> prev(n, -1);
    prev[src] = src;
    std::deque<int> q{src};
    while (!q.empty() && prev[snk] < 0) {
      int u = q.front();
      q.pop_front();
      for (auto& [v, c] : cap[u])
        if (c > 0 && prev[v] < 0) {
          prev[v] = u;
          q.push_back(v);
        }
    }
    if (prev[snk] < 0) break;
    Rat aug = -1;
    for (int v = snk; v != src; v = prev[v]) {
      const Rat& c = cap[prev[v]][v];
      if (aug < 0 || c < aug) aug = c;
    }
    for (int v = snk; v != src; v = prev[v]) {
      cap[prev[v]][v] -= aug;
      cap[v][prev[v]] += aug;
    }
    flow += aug;
  }
  return flow == want;
}

}  // namespace paw
