// Copyright 2026 The negtree Authors
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// at http://www.apache.org/licenses/LICENSE-2.0
#include "negtree/sgtree/tree.hpp"

#include <algorithm>
#include <istream>
#include <map>
#include <ostream>
#include <queue>
#include <sstream>

#include "negtree/core/io.hpp"

namespace negtree {

int level_for_distance(double d, double base) {
  if (!(d > 0.0)) throw InvalidInput("level_for_distance needs a positive distance");
  int j = static_cast<int>(std::ceil(std::log(d) / std::log(base)));
  while (level_scale(base, j) < d) ++j;
  while (level_scale(base, j - 1) >= d) --j;
  return j;
}

namespace {

std::unique_ptr<SGNode> make_node(TargetId rep, int level) {
  auto n = std::make_unique<SGNode>();
  n->rep = rep;
  n->level = level;
  return n;
}

// Leaf `slot` becomes an internal node at `level` holding itself and p.
void split_leaf(std::unique_ptr<SGNode>& slot, int level, TargetId p) {
  slot->level = level;
  slot->children.push_back(make_node(slot->rep, level - 1));
  slot->children.push_back(make_node(p, level - 1));
}

void insert_point(const TreeMetric& metric, double b, std::unique_ptr<SGNode>& root, TargetId p) {
  if (!root) {
    root = make_node(p, 0);
    return;
  }
  const double d = metric.between(root->rep, p);
  if (root->leaf()) {
    split_leaf(root, d > 0.0 ? level_for_distance(d, b) : root->level, p);
    return;
  }
  if (d > level_scale(b, root->level)) {
    const int j = level_for_distance(d, b);
    auto top = make_node(root->rep, j);
    top->children.push_back(std::move(root));
    top->children.push_back(make_node(p, j - 1));
    root = std::move(top);
    return;
  }
  insert_below(metric, b, *root, p);
}

}  // namespace

void insert_below(const TreeMetric& metric, double b, SGNode& node, TargetId p) {
  require(!node.leaf(), "insertion below a leaf");
  SGNode* c = &node;
  for (;;) {
    const double sep = level_scale(b, c->level - 1);
    int best = -1;
    double best_d = 0.0;
    for (std::size_t i = 0; i < c->children.size(); ++i) {
      const SGNode& ch = *c->children[i];
      const double dc = metric.between(ch.rep, p);
      if (dc >= sep) continue;
      if (best < 0 || dc < best_d || (dc == best_d && ch.rep < c->children[best]->rep)) {
        best = static_cast<int>(i);
        best_d = dc;
      }
    }
    if (best < 0) {
      c->children.push_back(make_node(p, c->level - 1));
      return;
    }
    std::unique_ptr<SGNode>& slot = c->children[best];
    if (slot->leaf()) {
      split_leaf(slot, best_d > 0.0 ? level_for_distance(best_d, b) : c->level - 1, p);
      return;
    }
    if (best_d <= level_scale(b, slot->level)) {
      c = slot.get();
      continue;
    }
    const int j = level_for_distance(best_d, b);
    auto lifted = make_node(slot->rep, j);
    lifted->children.push_back(std::move(slot));
    lifted->children.push_back(make_node(p, j - 1));
    slot = std::move(lifted);
    return;
  }
}

namespace {

// Cover-tree mode: nested nets Y_l, each a maximal b^l-separated set containing
// Y_{l+1}; every net point hangs under its nearest point of the next net up.
std::unique_ptr<SGNode> build_cover(const TreeMetric& metric, double b, std::span<const TargetId> points) {
  const TargetId p0 = points[0];
  double far = 0.0;
  for (TargetId p : points) far = std::max(far, metric.between(p0, p));
  if (points.size() == 1 || far == 0.0) {
    std::unique_ptr<SGNode> root;
    for (TargetId p : points) insert_point(metric, b, root, p);
    return root;
  }
  struct Link {
    TargetId parent;
    int level;  // node level at the parent, i.e. top(child) + 1
  };
  std::map<TargetId, Link> link;
  std::vector<TargetId> net{p0};
  std::vector<char> in_net(points.size(), 0);
  in_net[0] = 1;
  std::vector<TargetId> pending;
  for (std::size_t i = 1; i < points.size(); ++i) pending.push_back(i);

  int k = level_for_distance(far, b);
  while (!pending.empty()) {
    const double sep = level_scale(b, k - 1);
    const std::vector<TargetId> upper = net;
    std::vector<TargetId> still;
    bool only_duplicates = true;
    for (TargetId idx : pending) {
      const TargetId p = points[idx];
      double nearest_all = std::numeric_limits<double>::infinity();
      for (TargetId q : net) nearest_all = std::min(nearest_all, metric.between(q, p));
      if (nearest_all > 0.0) only_duplicates = false;
      if (nearest_all < sep) {
        still.push_back(idx);
        continue;
      }
      TargetId par = upper[0];
      double pd = metric.between(par, p);
      for (TargetId q : upper) {
        const double dq = metric.between(q, p);
        if (dq < pd || (dq == pd && q < par)) {
          par = q;
          pd = dq;
        }
      }
      link[p] = {par, k};
      net.push_back(p);
    }
    pending = std::move(still);
    if (only_duplicates && !pending.empty()) {
      for (TargetId idx : pending) {
        const TargetId p = points[idx];
        TargetId par = p0;
        for (TargetId q : net)
          if (metric.between(q, p) == 0.0) {
            par = q;
            break;
          }
        link[p] = {par, k - 1};
      }
      pending.clear();
    }
    --k;
  }

  std::map<TargetId, std::vector<std::pair<int, TargetId>>> kids;
  for (const auto& [p, l] : link) kids[l.parent].push_back({l.level, p});
  for (auto& [p, v] : kids) std::sort(v.begin(), v.end(), [](auto a, auto c) { return a.first > c.first || (a.first == c.first && a.second < c.second); });

  // Chain of p's nodes at the levels where it has children, highest first.
  auto chain = [&](auto&& self, TargetId p, std::size_t from) -> std::unique_ptr<SGNode> {
    auto it = kids.find(p);
    if (it == kids.end() || from >= it->second.size()) return make_node(p, 0);
    const auto& v = it->second;
    const int level = v[from].first;
    std::size_t end = from;
    while (end < v.size() && v[end].first == level) ++end;
    auto node = make_node(p, level);
    node->children.push_back(self(self, p, end));
    for (std::size_t i = from; i < end; ++i) node->children.push_back(self(self, v[i].second, 0));
    return node;
  };
  return chain(chain, p0, 0);
}

double tol(double x) { return 1e-9 * std::max(1.0, std::abs(x)); }

}  // namespace

std::unique_ptr<SGNode> build_subtree(const TreeMetric& metric, double base, std::span<const TargetId> points,
                                      int duplicate_level) {
  require(base > 1.0, "tree base must be > 1");
  std::unique_ptr<SGNode> root;
  for (TargetId p : points) {
    insert_point(metric, base, root, p);
    if (root->leaf()) root->level = duplicate_level;
  }
  return root;
}

void SGTree::finalize(const TreeMetric& metric) {
  leaf_order_.clear();
  auto visit = [&](auto&& self, SGNode& n, const SGNode* parent) -> void {
    n.leaf_begin = leaf_order_.size();
    if (n.leaf()) {
      leaf_order_.push_back(n.rep);
      if (parent) n.level = parent->level - 1;
      n.count = 1;
      n.maxd = 0.0;
      n.mind = std::numeric_limits<double>::infinity();
      return;
    }
    n.count = 0;
    bool seen_self = false;
    for (auto& c : n.children) {
      c->self_child = !seen_self && c->rep == n.rep;
      seen_self = seen_self || c->self_child;
      self(self, *c, &n);
      n.count += c->count;
    }
    n.maxd = 0.0;
    for (std::size_t i = n.leaf_begin; i < leaf_order_.size(); ++i)
      n.maxd = std::max(n.maxd, metric.between(n.rep, leaf_order_[i]));
    n.mind = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n.children.size(); ++i) {
      const SGNode& ci = *n.children[i];
      for (std::size_t j = i + 1; j < n.children.size(); ++j) {
        const double d = metric.between(ci.rep, n.children[j]->rep);
        if (d > 0.0) n.mind = std::min(n.mind, d);
      }
    }
  };
  if (root_) {
    root_->self_child = false;
    visit(visit, *root_, nullptr);
  }
}

SGForest::SGForest(TreeMetric metric, BuildOptions opts, std::vector<SGTree> trees)
    : metric_(std::move(metric)), opts_(opts), trees_(std::move(trees)) {}

void SGForest::set_metric(TreeMetric m) {
  require(m.size() == metric_.size(), "replacement metric must cover the same targets");
  metric_ = std::move(m);
}

void SGForest::refresh_stats() {
  for (auto& t : trees_) t.finalize(metric_);
}

int SGForest::min_level() const {
  int lo = std::numeric_limits<int>::max();
  auto visit = [&](auto&& self, const SGNode& n) -> void {
    lo = std::min(lo, n.level);
    for (const auto& c : n.children) self(self, *c);
  };
  for (const auto& t : trees_) visit(visit, *t.root());
  return lo;
}

int SGForest::max_level() const {
  int hi = std::numeric_limits<int>::min();
  for (const auto& t : trees_) hi = std::max(hi, t.root()->level);
  return hi;
}

SGForest build_forest(TreeMetric metric, const BuildOptions& opts) {
  require(opts.base > 1.0, "tree base must be > 1");
  require(opts.forest_size >= 1, "forest size must be >= 1");
  const auto n = static_cast<std::size_t>(metric.size());
  require(n >= 1, "cannot build a tree over zero targets");
  require(opts.forest_size <= n, "forest size exceeds the number of targets");
  std::vector<std::vector<TargetId>> shards(opts.forest_size);
  for (TargetId i = 0; i < n; ++i) shards[i % opts.forest_size].push_back(i);
  std::vector<SGTree> trees;
  for (const auto& pts : shards) {
    SGTree t(opts.mode == TreeMode::SG ? build_subtree(metric, opts.base, pts)
                                       : build_cover(metric, opts.base, pts));
    t.finalize(metric);
    trees.push_back(std::move(t));
  }
  return SGForest(std::move(metric), opts, std::move(trees));
}

SGForest build(const TargetStore& store, double base, std::size_t forest_size) {
  BuildOptions o;
  o.base = base;
  o.forest_size = forest_size;
  return build_forest(TreeMetric::euclidean(store.full), o);
}

std::string describe(const Violation& v) {
  std::ostringstream os;
  os << v.property << " violated at node(rep=" << v.rep << ", level=" << v.level << "): measured " << v.measured
     << " vs bound " << v.bound;
  return os.str();
}

std::vector<ClusterRef> level_clustering(const SGForest& forest, int level) {
  std::vector<ClusterRef> out;
  for (std::size_t t = 0; t < forest.num_trees(); ++t) {
    auto visit = [&](auto&& self, const SGNode& n) -> void {
      if (n.level <= level || n.leaf()) {
        out.push_back({&n, t});
        return;
      }
      for (const auto& c : n.children) self(self, *c);
    };
    visit(visit, *forest.tree(t).root());
  }
  return out;
}

std::vector<Violation> verify_invariants(const SGForest& forest) {
  std::vector<Violation> out;
  const TreeMetric& m = forest.metric();
  const double b = forest.base();
  const bool cover = forest.options().mode == TreeMode::Cover;
  auto report = [&](const SGNode& n, const char* prop, double measured, double bound) {
    out.push_back({&n, n.rep, n.level, prop, measured, bound});
  };

  std::vector<int> seen(forest.num_targets(), 0);
  for (std::size_t t = 0; t < forest.num_trees(); ++t) {
    const SGTree& tree = forest.tree(t);
    auto visit = [&](auto&& self, const SGNode& n) -> std::uint64_t {
      if (n.leaf()) {
        if (n.rep < seen.size()) ++seen[n.rep];
        if (n.count != 1) report(n, "count", double(n.count), 1.0);
        return 1;
      }
      std::uint64_t total = 0;
      bool nested = false;
      const double cov = level_scale(b, n.level);
      for (const auto& c : n.children) {
        nested = nested || c->rep == n.rep;
        if (c->level >= n.level) report(*c, "level", c->level, n.level - 1);
        const double d = m.between(n.rep, c->rep);
        if (d > cov + tol(cov)) report(*c, "covering", d, cov);
        total += self(self, *c);
      }
      if (!nested) report(n, "nesting", 0.0, 1.0);
      if (n.count != total) report(n, "count", double(n.count), double(total));

      double maxd = 0.0;
      for (TargetId y : tree.members(n)) maxd = std::max(maxd, m.between(n.rep, y));
      if (std::abs(maxd - n.maxd) > tol(maxd)) report(n, "maxd", n.maxd, maxd);
      const double radius_bound = cover ? cov * b / (b - 1.0) : cov;
      if (maxd > radius_bound + tol(radius_bound)) report(n, "maxd", maxd, radius_bound);

      double mind = std::numeric_limits<double>::infinity();
      const double sep = level_scale(b, n.level - 1);
      for (std::size_t i = 0; i < n.children.size(); ++i)
        for (std::size_t j = i + 1; j < n.children.size(); ++j) {
          const double d = m.between(n.children[i]->rep, n.children[j]->rep);
          if (d > 0.0) mind = std::min(mind, d);
          if (!cover && d > 0.0 && d < sep - tol(sep)) report(n, "separation", d, sep);
        }
      const bool mind_ok = std::isinf(mind) ? std::isinf(n.mind) : std::abs(mind - n.mind) <= tol(mind);
      if (!mind_ok) report(n, "mind", n.mind, mind);
      return total;
    };
    visit(visit, *tree.root());
  }
  for (std::size_t y = 0; y < seen.size(); ++y)
    if (seen[y] != 1) out.push_back({nullptr, y, 0, "partition", double(seen[y]), 1.0});

  if (cover) {
    for (int l = forest.min_level(); l <= forest.max_level(); ++l) {
      const double sep = level_scale(b, l);
      auto slice = level_clustering(forest, l);
      for (std::size_t i = 0; i < slice.size(); ++i)
        for (std::size_t j = i + 1; j < slice.size(); ++j) {
          if (slice[i].tree != slice[j].tree) continue;
          const double d = m.between(slice[i].node->rep, slice[j].node->rep);
          if (d > 0.0 && d < sep - tol(sep)) {
            out.push_back({slice[i].node, slice[i].node->rep, l, "separation", d, sep});
          }
        }
    }
  }
  return out;
}

std::vector<TargetId> knn(const SGForest& forest, VecRef query_embedding, std::size_t k) {
  const TreeMetric& m = forest.metric();
  const Vec qp = m.query_point(query_embedding);
  k = std::min(k, forest.num_targets());
  using Hit = std::pair<double, TargetId>;
  std::priority_queue<Hit> best;  // worst on top
  struct Item {
    double lb;
    double d;
    const SGNode* node;
    bool operator<(const Item& o) const { return lb > o.lb; }
  };
  std::priority_queue<Item> open;
  auto full = [&] { return best.size() == k; };
  for (std::size_t t = 0; t < forest.num_trees(); ++t) {
    const SGNode* r = forest.tree(t).root();
    const double d = m.distance(qp, r->rep);
    open.push({std::max(0.0, d - r->maxd), d, r});
  }
  while (!open.empty() && k > 0) {
    const Item it = open.top();
    open.pop();
    if (full() && it.lb > best.top().first) break;
    if (it.node->leaf()) {
      const Hit h{it.d, it.node->rep};
      if (!full()) {
        best.push(h);
      } else if (h < best.top()) {
        best.pop();
        best.push(h);
      }
      continue;
    }
    for (const auto& c : it.node->children) {
      const double dc = c->rep == it.node->rep ? it.d : m.distance(qp, c->rep);
      const double lb = std::max(0.0, dc - c->maxd);
      if (full() && lb > best.top().first) continue;
      open.push({lb, dc, c.get()});
    }
  }
  std::vector<Hit> hits;
  while (!best.empty()) {
    hits.push_back(best.top());
    best.pop();
  }
  std::sort(hits.begin(), hits.end());
  std::vector<TargetId> out;
  for (const auto& h : hits) out.push_back(h.second);
  return out;
}

namespace {

void write_node(ByteWriter& w, const SGNode& n) {
  w.i32(n.level);
  w.u64(n.rep);
  w.u64(n.count);
  w.f32(static_cast<float>(n.maxd));
  w.f32(static_cast<float>(n.mind));
  w.u32(static_cast<std::uint32_t>(n.children.size()));
  for (const auto& c : n.children) write_node(w, *c);
}

std::unique_ptr<SGNode> read_node(ByteReader& r, std::size_t n_targets, int depth) {
  if (depth > 1 << 20) throw IoError("snapshot nesting too deep");
  auto n = std::make_unique<SGNode>();
  n->level = r.i32();
  n->rep = r.u64();
  n->count = r.u64();
  r.f32();
  r.f32();
  const auto kids = r.u32();
  if (n->rep >= n_targets) throw IoError("snapshot representative out of range");
  for (std::uint32_t i = 0; i < kids; ++i) n->children.push_back(read_node(r, n_targets, depth + 1));
  return n;
}

bool counts_match(const SGNode& a, const SGNode& b) {
  if (a.count != b.count || a.children.size() != b.children.size()) return false;
  for (std::size_t i = 0; i < a.children.size(); ++i)
    if (!counts_match(*a.children[i], *b.children[i])) return false;
  return true;
}

}  // namespace

std::string serialize_forest(const SGForest& forest) {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(forest.num_trees()));
  w.f64(forest.base());
  w.u32(forest.options().mode == TreeMode::SG ? 0u : 1u);
  w.u64(forest.num_targets());
  for (std::size_t t = 0; t < forest.num_trees(); ++t) write_node(w, *forest.tree(t).root());
  return w.str();
}

SGForest deserialize_forest(const std::string& payload, TreeMetric metric) {
  ByteReader r(payload);
  BuildOptions o;
  o.forest_size = r.u32();
  o.base = r.f64();
  o.mode = r.u32() == 0 ? TreeMode::SG : TreeMode::Cover;
  const auto n = r.u64();
  if (n != static_cast<std::uint64_t>(metric.size())) throw IoError("snapshot target count does not match embeddings");
  std::vector<SGTree> trees;
  for (std::size_t t = 0; t < o.forest_size; ++t) {
    auto root = read_node(r, n, 0);
    SGTree tree(std::move(root));
    trees.push_back(std::move(tree));
  }
  if (!r.done()) throw IoError("trailing bytes in forest snapshot");
  // Keep the stored counts to cross-check after recomputation.
  std::vector<std::unique_ptr<SGNode>> stored;
  SGForest f(std::move(metric), o, std::move(trees));
  ByteReader again(payload);
  again.bytes(4 + 8 + 4 + 8);
  for (std::size_t t = 0; t < o.forest_size; ++t) stored.push_back(read_node(again, n, 0));
  f.refresh_stats();
  for (std::size_t t = 0; t < o.forest_size; ++t)
    if (!counts_match(*stored[t], *f.tree(t).root())) throw IoError("snapshot descendant counts are inconsistent");
  return f;
}

void save_forest(std::ostream& os, const SGForest& forest) {
  write_sections(os, {{"FRST", serialize_forest(forest)}});
}

SGForest load_forest(std::istream& is, TreeMetric metric) {
  const auto secs = read_sections(is);
  const Section* s = find_section(secs, "FRST");
  if (!s) throw IoError("snapshot has no FRST section");
  return deserialize_forest(s->payload, std::move(metric));
}

}  // namespace negtree
