#include <doctest.h>

#include <cmath>

#include "asd/error.hpp"
#include "asd/gcn.hpp"
#include "asd/label_prop.hpp"
#include "support.hpp"

using namespace asd;

namespace {

struct Fixture {
  StGraph graph;
  std::vector<Vec3> x;
  std::vector<int> labels;
};

// Up to 20 nodes in a few segments: intra chains plus random inter edges.
Fixture random_fixture(std::uint64_t seed, std::size_t n = 18) {
  Rng rng(seed);
  std::vector<GraphNode> nodes;
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i) {
    GraphNode g;
    g.node_id = i;
    g.segment_id = i / 5;
    g.t = 60.0 * static_cast<double>(i);
    g.x = {rng.uniform(0, 3), rng.uniform(0, 30), rng.uniform(0.2, 1)};
    nodes.push_back(g);
    if (i > 0 && i / 5 == (i - 1) / 5) edges.push_back({i - 1, i, 1.0, EdgeKind::Intra});
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 2; j < std::min(n, i + 6); ++j) {
      if (rng.uniform() < 0.5) edges.push_back({i, j, rng.uniform(0.3, 1.0), EdgeKind::Inter});
    }
  }
  Fixture f;
  for (auto& g : nodes) f.x.push_back(g.x);
  f.graph = StGraph(std::move(nodes), std::move(edges), 0);
  f.labels.assign(n, -1);
  for (std::size_t i = 0; i < n; i += 3) f.labels[i] = f.x[i][0] > 1.5 ? kAbnormal : kNormal;
  f.labels[0] = kAbnormal;
  f.labels[1] = kNormal;
  return f;
}

double rel_error(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

// Central differences of an arbitrary scalar function of the parameters.
template <class F>
std::vector<double> numeric_grad(const GcnModel& m, F f, double h = 1e-5) {
  std::vector<double> g(m.size());
  GcnModel probe = m;
  for (std::size_t q = 0; q < m.size(); ++q) {
    const double orig = probe.params[q];
    probe.params[q] = orig + h;
    const double up = f(probe);
    probe.params[q] = orig - h;
    const double down = f(probe);
    probe.params[q] = orig;
    g[q] = (up - down) / (2 * h);
  }
  return g;
}

}  // namespace

TEST_CASE("gradients match central differences, per term and combined") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Fixture f = random_fixture(seed);
    GcnGraph gg(f.graph);
    REQUIRE(gg.size() <= 20);
    REQUIRE(!gg.triples().empty());
    GcnModel m = init_model(gg, f.x, 16, seed);
    const double l1 = 0.3, l2 = 0.7;

    auto total = [&](const GcnModel& p) { return loss(p, gg, f.x, f.labels, l1, l2).total; };
    auto analytic = gradient(m, gg, f.x, f.labels, l1, l2);
    auto numeric = numeric_grad(m, total);
    double worst = 0;
    for (std::size_t q = 0; q < m.size(); ++q) worst = std::max(worst, rel_error(analytic[q], numeric[q]));
    CHECK(worst < 1e-4);

    // supervised term alone
    auto sup_a = gradient(m, gg, f.x, f.labels, 0, 0);
    auto sup_n = numeric_grad(m, [&](const GcnModel& p) { return loss(p, gg, f.x, f.labels, 0, 0).sup; });
    worst = 0;
    for (std::size_t q = 0; q < m.size(); ++q) worst = std::max(worst, rel_error(sup_a[q], sup_n[q]));
    CHECK(worst < 1e-4);

    // regularisers isolated by differencing the analytic gradients
    auto sp_a = gradient(m, gg, f.x, f.labels, 1, 0);
    auto sp_n = numeric_grad(m, [&](const GcnModel& p) { return sparsity_loss(p.edge_weights()); });
    auto tm_a = gradient(m, gg, f.x, f.labels, 0, 1);
    auto tm_n = numeric_grad(m, [&](const GcnModel& p) { return temporal_loss(gg, p.edge_weights()); });
    double worst_sp = 0, worst_tm = 0;
    for (std::size_t q = 0; q < m.size(); ++q) {
      worst_sp = std::max(worst_sp, rel_error(sp_a[q] - sup_a[q], sp_n[q]));
      worst_tm = std::max(worst_tm, rel_error(tm_a[q] - sup_a[q], tm_n[q]));
    }
    CHECK(worst_sp < 1e-4);
    CHECK(worst_tm < 1e-4);

    CHECK(grad_check(m, gg, f.x, f.labels, l1, l2).max_rel_error < 1e-4);
  }
}

TEST_CASE("sparsity subgradient at zero weight") {
  Fixture f = random_fixture(4);
  GcnGraph gg(f.graph);
  GcnModel m = init_model(gg, f.x, 16, 4);
  REQUIRE(m.n_edge > 0);
  const std::size_t q = m.off_edge();
  m.params[q] = 0.0;
  const double h = 1e-6, l1 = 0.5;
  auto g = gradient(m, gg, f.x, f.labels, l1, 0);
  auto g0 = gradient(m, gg, f.x, f.labels, 0, 0);
  // one-sided slopes of the L1 term are +l1 and -l1; the analytic choice lies between
  GcnModel up = m, down = m;
  up.params[q] = h;
  down.params[q] = -h;
  const double right = (l1 * sparsity_loss(up.edge_weights()) - l1 * sparsity_loss(m.edge_weights())) / h;
  const double left = (l1 * sparsity_loss(m.edge_weights()) - l1 * sparsity_loss(down.edge_weights())) / h;
  const double sub = g[q] - g0[q];
  CHECK(sub >= left - 1e-9);
  CHECK(sub <= right + 1e-9);
}

TEST_CASE("loss terms") {
  CHECK(sparsity_loss({0.5, -0.25}) == doctest::Approx(0.75));
  CHECK(supervised_loss({1, 0, 0, 1}, {0, 1}, true) == doctest::Approx(0.0));
  CHECK_THROWS_AS(supervised_loss({0.5, 0.5}, {-1}, true), PreconditionError);

  // a chain whose inter edges all carry the same weight has no temporal penalty
  std::vector<GraphNode> nodes(4);
  for (std::size_t i = 0; i < 4; ++i) nodes[i].node_id = i;
  std::vector<Edge> e{{0, 1, 1, EdgeKind::Intra}, {1, 2, 1, EdgeKind::Intra}, {2, 3, 1, EdgeKind::Intra},
                      {0, 2, 0.4, EdgeKind::Inter}, {1, 3, 0.4, EdgeKind::Inter}};
  GcnGraph gg(StGraph(nodes, e, 0));
  CHECK(temporal_loss(gg, {0.4, 0.4}) > 0.0);  // inter 0.4 vs intra 1 around the same node
  std::vector<Edge> flat{{0, 1, 1, EdgeKind::Intra}, {1, 2, 1, EdgeKind::Intra}, {0, 2, 1, EdgeKind::Inter}};
  std::vector<GraphNode> three(nodes.begin(), nodes.begin() + 3);
  GcnGraph tri(StGraph(three, flat, 0));
  CHECK(temporal_loss(tri, {1.0}) == 0.0);
}

TEST_CASE("forward pass on a two-node path by hand") {
  std::vector<GraphNode> nodes(2);
  nodes[1].node_id = 1;
  GcnGraph gg(StGraph(nodes, {{0, 1, 1.0, EdgeKind::Intra}}, 0));
  GcnModel m;
  m.hidden = 3;
  m.n_edge = 0;
  m.params.assign(m.size(), 0.0);
  m.in_mean = {0, 0, 0};
  m.in_std = {1, 1, 1};
  for (std::size_t d = 0; d < 3; ++d) m.params[m.off_w1() + d * 3 + d] = 1.0;  // identity
  // second layer: logit0 = h0 + h1, logit1 = h2
  m.params[m.off_w2() + 0 * 2 + 0] = 1.0;
  m.params[m.off_w2() + 1 * 2 + 0] = 1.0;
  m.params[m.off_w2() + 2 * 2 + 1] = 1.0;
  m.params[m.off_b2() + 1] = 0.5;
  std::vector<Vec3> x{{1, 2, 3}, {3, -4, 1}};
  auto p = forward(m, gg, x);
  // degrees with self loops are 2, so every normalised entry is 1/2
  Vec3 h{};
  for (int d = 0; d < 3; ++d) h[d] = std::max(0.0, 0.5 * (x[0][d] + x[1][d]));
  const double z0 = 0.5 * (h[0] + h[1]) * 2.0;  // both rows share h
  const double z1 = 0.5 * h[2] * 2.0 + 0.5;
  const double e0 = std::exp(z0), e1 = std::exp(z1);
  CHECK(p[0] == doctest::Approx(e0 / (e0 + e1)).epsilon(1e-12));
  CHECK(p[2] == doctest::Approx(e0 / (e0 + e1)).epsilon(1e-12));
  CHECK(p[0] + p[1] == doctest::Approx(1.0).epsilon(1e-15));

  // isolated node, identity layers, zero logits -> uniform
  std::vector<GraphNode> lone(1);
  GcnGraph one(StGraph(lone, {}, 0));
  GcnModel z = m;
  std::fill(z.params.begin(), z.params.end(), 0.0);
  auto u = forward(z, one, {{1, 2, 3}});
  CHECK(u[0] == doctest::Approx(0.5));
  CHECK(u[1] == doctest::Approx(0.5));
  CHECK_THROWS_AS(forward(z, one, {{1, 2, 3}, {1, 1, 1}}), PreconditionError);
}

TEST_CASE("identical nodes on a vertex-transitive graph get identical outputs") {
  std::vector<GraphNode> nodes(6);
  std::vector<Edge> e;
  for (std::size_t i = 0; i < 6; ++i) {
    nodes[i].node_id = i;
    if (i > 0) e.push_back({i - 1, i, 1.0, EdgeKind::Intra});
  }
  e.push_back({0, 5, 1.0, EdgeKind::Inter});
  GcnGraph gg(StGraph(nodes, e, 0));
  std::vector<Vec3> x(6, Vec3{0.4, 12.0, 0.8});
  GcnModel m = init_model(gg, x, 16, 9);
  m.params[m.off_edge()] = 1.0;
  auto p = forward(m, gg, x);
  for (std::size_t i = 1; i < 6; ++i) CHECK(p[2 * i] == doctest::Approx(p[0]).epsilon(1e-12));
}

namespace {

Fixture separable() {
  Rng rng(77);
  std::vector<GraphNode> nodes;
  std::vector<Edge> edges;
  const std::size_t n = 40;
  for (std::size_t i = 0; i < n; ++i) {
    GraphNode g;
    g.node_id = i;
    g.segment_id = i / 10;
    const bool abn = i % 10 == 3 || i % 10 == 7;
    g.x = abn ? Vec3{2.5 + rng.uniform(0, 0.3), 30 + rng.uniform(0, 5), 0.9}
              : Vec3{0.2 + rng.uniform(0, 0.3), 5 + rng.uniform(0, 5), 0.4};
    nodes.push_back(g);
  }
  Fixture f;
  for (auto& g : nodes) f.x.push_back(g.x);
  for (std::size_t i = 1; i < n; ++i)
    if (nodes[i].segment_id == nodes[i - 1].segment_id) edges.push_back({i - 1, i, 1.0, EdgeKind::Intra});
  f.graph = StGraph(std::move(nodes), std::move(edges), 0);
  f.labels.assign(n, -1);
  // labelled normals include the neighbours of the labelled anomalies, so the
  // smoothing around an anomaly is seen in training
  for (std::size_t i : {3u, 13u, 0u, 2u, 4u, 12u, 14u, 21u}) f.labels[i] = (i % 10 == 3) ? kAbnormal : kNormal;
  return f;
}

}  // namespace

TEST_CASE("training separates a separable toy graph and is deterministic") {
  Fixture f = separable();
  GcnGraph gg(f.graph);
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.learning_rate = 0.05;
  auto a = train(init_model(gg, f.x, 16, 5), gg, f.x, f.labels, cfg);
  auto p = forward(a.model, gg, f.x);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gg.size(); ++i) {
    const bool abn = i % 10 == 3 || i % 10 == 7;
    correct += (p[2 * i] > 0.5) == abn;
  }
  CHECK(correct == gg.size());
  // every abnormal node outranks every normal one
  double lo_abn = 1, hi_norm = 0;
  for (std::size_t i = 0; i < gg.size(); ++i) {
    if (i % 10 == 3 || i % 10 == 7) lo_abn = std::min(lo_abn, p[2 * i]);
    else hi_norm = std::max(hi_norm, p[2 * i]);
  }
  CHECK(lo_abn > hi_norm);
  CHECK(a.history.size() == 200);
  CHECK(a.history.back().total < a.history.front().total);

  auto b = train(init_model(gg, f.x, 16, 5), gg, f.x, f.labels, cfg);
  CHECK(b.history.back().total == a.history.back().total);
  CHECK(b.model.params == a.model.params);

  TrainConfig plain = cfg;
  plain.lambda1 = plain.lambda2 = 0;
  auto c = train(init_model(gg, f.x, 16, 5), gg, f.x, f.labels, plain);
  for (const auto& h : c.history) CHECK(h.total == h.sup);

  TrainConfig bad = cfg;
  bad.tau = 0.4;
  CHECK_THROWS_AS(train(init_model(gg, f.x, 16, 5), gg, f.x, f.labels, bad), PreconditionError);
}

TEST_CASE("self-training") {
  Fixture f = separable();
  GcnGraph gg(f.graph);
  TrainConfig cfg;
  cfg.epochs = 100;
  cfg.learning_rate = 0.05;
  auto base = train(init_model(gg, f.x, 16, 5), gg, f.x, f.labels, cfg);
  const auto base_probs = forward(base.model, gg, f.x);

  SUBCASE("closed gate leaves the base model") {
    TrainConfig closed = cfg;
    closed.tau = 1.0;
    auto st = self_train(base.model, gg, f.x, f.labels, closed);
    CHECK(st.probs == base_probs);
    CHECK(st.labels == f.labels);
    REQUIRE(st.rounds.size() == 1);
    CHECK(st.rounds[0].added == 0);
  }
  SUBCASE("labeled set grows and seeds stay") {
    for (bool balanced : {true, false}) {
      TrainConfig c = cfg;
      c.balanced_pseudo_labels = balanced;
      auto st = self_train(base.model, gg, f.x, f.labels, c);
      std::size_t prev = 0;
      for (const auto& r : st.rounds) {
        CHECK(r.labeled >= prev);
        prev = r.labeled;
        if (balanced) CHECK(2 * r.added_abnormal == r.added);
      }
      for (std::size_t i = 0; i < f.labels.size(); ++i)
        if (f.labels[i] >= 0) CHECK(st.labels[i] == f.labels[i]);
    }
  }
  SUBCASE("one unbalanced round takes every confident node with its argmax") {
    TrainConfig c = cfg;
    c.self_train_rounds = 1;
    c.balanced_pseudo_labels = false;
    auto st = self_train(base.model, gg, f.x, f.labels, c);
    for (std::size_t i = 0; i < f.labels.size(); ++i) {
      if (f.labels[i] >= 0) continue;
      const double pa = base_probs[2 * i], pn = base_probs[2 * i + 1];
      if (std::max(pa, pn) > c.tau) CHECK(st.labels[i] == (pa > pn ? kAbnormal : kNormal));
      else CHECK(st.labels[i] == -1);
    }
  }
}
