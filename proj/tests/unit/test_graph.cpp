#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "oracle.hpp"
#include "plap/graph.hpp"
#include "support.hpp"

using namespace plap;

namespace {

using Edge = std::array<Index, 2>;

std::map<Edge, double> edge_map(const WeightedGraph& g) {
  std::map<Edge, double> m;
  for (Index e = 0; e < g.num_edges(); ++e) m[g.edges[static_cast<std::size_t>(e)]] = g.weights[e];
  return m;
}

SslTask path_task() {
  SslTask t;
  t.features = Eigen::MatrixXd(3, 1);
  t.features << 0.0, 1.0, 2.0;
  t.labels = {0, -1, 1};
  t.n_classes = 2;
  return t;
}

WeightedGraph path_graph() {
  WeightedGraph g;
  g.n_vertices = 3;
  g.edges = {{0, 1}, {1, 2}};
  g.weights = Vector::Ones(2);
  return g;
}

}  // namespace

TEST_SUITE("graph") {
  TEST_CASE("knn on collinear points") {
    Eigen::MatrixXd x(3, 1);
    x << 0.0, 1.0, 2.0;
    const auto g = knn_graph(x, 1);
    const auto m = edge_map(g);
    REQUIRE(m.size() == 2);
    CHECK(m.count({0, 1}) == 1);
    CHECK(m.count({1, 2}) == 1);
    // bandwidth 1/2: exp(-1 / (1/4))
    for (const auto& [e, w] : m) CHECK(w == doctest::Approx(std::exp(-4.0)).epsilon(1e-15));
  }

  TEST_CASE("knn on coincident points and the complete case") {
    Eigen::MatrixXd two(2, 3);
    two << 1.0, 2.0, 3.0, 1.0, 2.0, 3.0;
    const auto g = knn_graph(two, 1);
    REQUIRE(g.num_edges() == 1);
    CHECK(g.weights[0] == 1.0);

    std::mt19937_64 rng(4);
    std::normal_distribution<double> n;
    Eigen::MatrixXd x(7, 2);
    for (Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
    const auto full = knn_graph(x, 6);
    CHECK(full.num_edges() == 21);
    CHECK_NOTHROW(full.validate());
    CHECK(support::thrown_kind([&] { knn_graph(x, 7); }) == ErrorKind::config);
    CHECK(support::thrown_kind([&] { knn_graph(x, 0); }) == ErrorKind::config);
  }

  TEST_CASE("knn is invariant under point permutations") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n;
    const Index count = 40;
    Eigen::MatrixXd x(count, 3);
    for (Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
    std::vector<Index> perm(count);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Eigen::MatrixXd y(count, 3);
    for (Index i = 0; i < count; ++i) y.row(i) = x.row(perm[static_cast<std::size_t>(i)]);

    for (auto mode : {KnnSymmetrization::union_of_neighbors, KnnSymmetrization::mutual}) {
      const auto gx = edge_map(knn_graph(x, 5, mode));
      const auto gy = knn_graph(y, 5, mode);
      std::map<Edge, double> mapped;
      for (Index e = 0; e < gy.num_edges(); ++e) {
        Index a = perm[static_cast<std::size_t>(gy.edges[static_cast<std::size_t>(e)][0])];
        Index b = perm[static_cast<std::size_t>(gy.edges[static_cast<std::size_t>(e)][1])];
        mapped[{std::min(a, b), std::max(a, b)}] = gy.weights[e];
      }
      REQUIRE(mapped.size() == gx.size());
      for (const auto& [e, w] : gx) {
        REQUIRE(mapped.count(e) == 1);
        CHECK(mapped[e] == doctest::Approx(w).epsilon(1e-14));
      }
    }
  }

  TEST_CASE("incidence operator") {
    WeightedGraph one;
    one.n_vertices = 2;
    one.edges = {{0, 1}};
    one.weights = Vector::Ones(1);
    Vector v(2);
    v << 3.0, 1.0;
    CHECK(matvec(incidence_operator(one), v)[0] == 2.0);

    WeightedGraph tri;
    tri.n_vertices = 3;
    tri.edges = {{0, 1}, {0, 2}, {1, 2}};
    tri.weights = Vector::Ones(3);
    const auto b = incidence_operator(tri);
    Vector w(3);
    w << 1.0, 2.0, 3.0;
    const Vector bw = matvec(b, w);
    CHECK(bw[0] == -1.0);
    CHECK(bw[1] == -2.0);
    CHECK(bw[2] == -1.0);
    CHECK(matvec(b, Vector::Ones(3)).norm() == 0.0);
    CHECK(matvec(b, w).norm() > 0.0);
  }

  TEST_CASE("graph validation") {
    WeightedGraph g = path_graph();
    CHECK_NOTHROW(g.validate());
    g.edges[1] = {2, 1};
    CHECK(support::thrown_kind([&] { g.validate(); }) == ErrorKind::config);
    g.edges[1] = {1, 1};
    CHECK(support::thrown_kind([&] { g.validate(); }) == ErrorKind::config);
    g.edges[1] = {0, 1};
    CHECK(support::thrown_kind([&] { g.validate(); }) == ErrorKind::config);
    g = path_graph();
    g.weights[0] = 0.0;
    CHECK(support::thrown_kind([&] { g.validate(); }) == ErrorKind::config);
  }

  TEST_CASE("clique expansion") {
    Hypergraph h;
    h.n_vertices = 3;
    h.hyperedges = {{0, 1, 2}};
    h.weights = Vector::Constant(1, 5.0);
    const auto tri = clique_expansion(h);
    CHECK(tri.num_edges() == 3);
    for (Index e = 0; e < 3; ++e) CHECK(tri.weights[e] == 5.0);

    h.n_vertices = 4;
    h.hyperedges = {{0, 1, 2}, {1, 2, 3}};
    h.weights = Vector(2);
    h.weights << 2.0, 4.0;
    const auto m = edge_map(clique_expansion(h));
    CHECK(m.at({1, 2}) == 3.0);
    CHECK(m.at({0, 1}) == 2.0);
    CHECK(m.at({2, 3}) == 4.0);
    CHECK(m.count({0, 3}) == 0);
  }

  TEST_CASE("clique expansion weights minimize the squared deviation") {
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<Index> size(2, 5), vert(0, 9);
    std::uniform_real_distribution<double> wt(0.5, 5.0);
    Hypergraph h;
    h.n_vertices = 10;
    for (int k = 0; k < 12; ++k) {
      std::set<Index> s;
      const Index want = size(rng);
      while (static_cast<Index>(s.size()) < want) s.insert(vert(rng));
      h.hyperedges.emplace_back(s.begin(), s.end());
    }
    h.weights = Vector(12);
    for (auto& w : h.weights) w = wt(rng);
    const auto m = edge_map(clique_expansion(h));

    for (const auto& [e, w] : m) {
      std::vector<double> ws;
      for (std::size_t k = 0; k < h.hyperedges.size(); ++k) {
        const auto& he = h.hyperedges[k];
        if (std::find(he.begin(), he.end(), e[0]) != he.end() && std::find(he.begin(), he.end(), e[1]) != he.end())
          ws.push_back(h.weights[static_cast<Index>(k)]);
      }
      REQUIRE_FALSE(ws.empty());
      auto loss = [&](double x) {
        double s = 0.0;
        for (double v : ws) s += (x - v) * (x - v);
        return s;
      };
      // grid search, refined until the spacing is 1e-6
      double lo = 0.0, hi = 6.0, best = 0.0;
      for (double step = 1e-2; step >= 1e-6; step /= 10) {
        double best_loss = std::numeric_limits<double>::infinity();
        for (double x = lo; x <= hi; x += step) {
          if (loss(x) < best_loss) {
            best_loss = loss(x);
            best = x;
          }
        }
        lo = best - step;
        hi = best + step;
      }
      CHECK(std::abs(w - best) <= 2e-6);
      CHECK(std::abs(w - std::accumulate(ws.begin(), ws.end(), 0.0) / ws.size()) <= 1e-12);
    }
  }

  TEST_CASE("connected components") {
    WeightedGraph g;
    g.n_vertices = 6;
    g.edges = {{1, 4}, {2, 3}, {3, 5}};
    g.weights = Vector::Ones(3);
    const auto c = connected_components(g);
    const std::vector<Index> want{0, 1, 2, 2, 1, 2};
    CHECK(c == want);
  }

  TEST_CASE("harmonic interpolation on a path") {
    const auto spec = build_ssl_problem(path_graph(), path_task(), 0, Integrand::power(2.0));
    CHECK(spec.weights()[0] == 2.0);  // doubled
    CHECK(spec.g()[0] == 1.0);
    CHECK(spec.g()[2] == -1.0);
    CHECK(spec.f().norm() == 0.0);
    const auto res = dirls_solve(spec);
    REQUIRE(res.converged());
    CHECK(res.u_g[0] == 1.0);
    CHECK(std::abs(res.u_g[1]) <= 1e-14);
    CHECK(res.u_g[2] == -1.0);

    const auto reg = build_ssl_problem(path_graph(), path_task(), 0, Integrand::regularized(10.0, 1e-3, 1e3));
    const auto r10 = dirls_solve(reg);
    REQUIRE(r10.converged());
    CHECK(std::abs(r10.u_g[1]) <= 1e-12);
  }

  TEST_CASE("fully labelled graphs have no unknowns") {
    auto task = path_task();
    task.labels = {0, 1, 1};
    const auto spec = build_ssl_problem(path_graph(), task, 1, Integrand::power(4.0));
    CHECK(spec.num_free() == 0);
    const auto res = dirls_solve(spec);
    CHECK(res.converged());
    CHECK(res.u_g == spec.g());
  }

  TEST_CASE("unlabelled components are rejected") {
    WeightedGraph g = path_graph();
    g.n_vertices = 5;
    g.edges.push_back({3, 4});
    g.weights = Vector::Ones(3);
    SslTask t;
    t.features = Eigen::MatrixXd::Zero(5, 1);
    t.labels = {0, -1, 1, -1, -1};
    t.n_classes = 2;
    CHECK(support::thrown_kind([&] { build_ssl_problem(g, t, 0, Integrand::power(2.0)); }) ==
          ErrorKind::config);
  }

  TEST_CASE("graph energy matches the pairwise sum") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n;
    Eigen::MatrixXd x(25, 2);
    for (Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
    const auto g = knn_graph(x, 4);
    SslTask t;
    t.features = x;
    t.labels.assign(25, -1);
    t.labels[0] = 0;
    t.n_classes = 1;
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(25, 25);
    for (Index e = 0; e < g.num_edges(); ++e) {
      const auto [i, j] = g.edges[static_cast<std::size_t>(e)];
      w(i, j) = w(j, i) = g.weights[e];
    }
    for (double p : {2.0, 3.0}) {
      const auto spec = build_ssl_problem(g, t, 0, Integrand::power(p));
      Vector v(25);
      for (auto& vi : v) vi = n(rng);
      v[0] = 1.0;
      long double direct = 0.0L;
      for (Index i = 0; i < 25; ++i)
        for (Index j = 0; j < 25; ++j) direct += w(i, j) * std::pow(std::abs(v[i] - v[j]), p) / p;
      CHECK(primal_energy(spec, v).value == doctest::Approx(static_cast<double>(direct)).epsilon(1e-13));
    }
  }

  TEST_CASE("argmax predictions") {
    std::vector<Vector> scores(3, Vector(4));
    scores[0] << 0.1, 0.5, 0.3, 0.2;
    scores[1] << 0.2, 0.5, 0.1, 0.2;
    scores[2] << 0.0, 0.4, 0.3, 0.2;
    const std::vector<int> want{1, 0, 0, 0};
    CHECK(argmax_predictions(scores) == want);
    for (auto& s : scores) s *= 7.5;
    CHECK(argmax_predictions(scores) == want);
    CHECK(accuracy(want, {1, 0, 1, 1}) == doctest::Approx(0.5));
    CHECK(accuracy(want, {1, 0, 1, 1}, {0, 1}) == 1.0);
  }

  TEST_CASE("one-vs-rest classification") {
    const auto blobs = make_two_blobs(60, 2, 2.0, 3);
    const auto g = knn_graph(blobs.task.features, 5);
    ClassifyConfig cfg;
    cfg.threads = 2;
    const auto res = one_vs_rest_classify(g, blobs.task, Integrand::regularized(4.0, 1e-3, 1e3), cfg);
    REQUIRE(res.per_class.size() == 2);
    for (std::size_t v = 0; v < blobs.task.labels.size(); ++v)
      if (blobs.task.labels[v] >= 0) CHECK(res.predictions[v] == blobs.task.labels[v]);
    for (const auto& e : res.class_errors) CHECK(e.empty());
    CHECK(res.predictions_at(res.max_iterations() - 1) == res.predictions);

    // a single class takes every vertex
    SslTask one = blobs.task;
    one.n_classes = 1;
    for (auto& l : one.labels) l = l == 1 ? -1 : l;
    const auto single = one_vs_rest_classify(g, one, Integrand::power(2.0));
    for (int p : single.predictions) CHECK(p == 0);

    // thread count does not change the outcome
    cfg.threads = 1;
    const auto serial = one_vs_rest_classify(g, blobs.task, Integrand::regularized(4.0, 1e-3, 1e3), cfg);
    CHECK(serial.predictions == res.predictions);
  }

  TEST_CASE("two blobs") {
    const auto a = make_two_blobs(20, 3, 3.0, 7);
    const auto b = make_two_blobs(20, 3, 3.0, 7);
    CHECK(a.task.features == b.task.features);
    CHECK(a.task.labels[0] == 0);
    CHECK(a.task.labels[19] == 1);
    CHECK(std::count(a.task.labels.begin(), a.task.labels.end(), -1) == 18);
    CHECK(a.truth[9] == 0);
    CHECK(a.truth[10] == 1);
  }

  TEST_CASE("edge list output") {
    support::TempDir dir("edges");
    WeightedGraph g = path_graph();
    g.weights[1] = 0.25;
    write_edge_list(dir / "g.txt", g);
    std::ifstream in(dir / "g.txt");
    Index i, j;
    double w;
    std::vector<std::tuple<Index, Index, double>> rows;
    while (in >> i >> j >> w) rows.emplace_back(i, j, w);
    REQUIRE(rows.size() == 2);
    CHECK(rows[1] == std::make_tuple(Index{1}, Index{2}, 0.25));
  }
}

TEST_SUITE("graph") {
  TEST_CASE("principal component projection") {
    // points on a tilted line plus a small orthogonal wobble
    std::mt19937_64 rng(12);
    std::normal_distribution<double> n;
    const Index count = 200;
    Eigen::MatrixXd x(count, 3);
    Eigen::Vector3d dir(1.0, 2.0, 2.0);
    dir /= 3.0;
    Eigen::Vector3d off(2.0, -1.0, 0.0);
    off /= std::sqrt(5.0);
    for (Index i = 0; i < count; ++i) {
      const double t = 5.0 * n(rng), s = 0.1 * n(rng);
      x.row(i) = (t * dir + s * off + Eigen::Vector3d(1.0, 1.0, 1.0)).transpose();
    }
    const Eigen::MatrixXd y = pca_reduce(x, 2);
    REQUIRE(y.rows() == count);
    REQUIRE(y.cols() == 2);
    // centred scores; the first axis carries the line coordinate up to sign
    CHECK(std::abs(y.col(0).mean()) <= 1e-12);
    const Eigen::MatrixXd c = x.rowwise() - x.colwise().mean();
    const Vector along = c * dir;
    CHECK((y.col(0).cwiseAbs() - along.cwiseAbs()).norm() <= 1e-2 * along.norm());
    CHECK(y.col(0).squaredNorm() > y.col(1).squaredNorm());
    // distances are preserved when nothing is dropped
    const Eigen::MatrixXd full = pca_reduce(x, 3);
    CHECK(std::abs((full.row(3) - full.row(7)).norm() - (x.row(3) - x.row(7)).norm()) <= 1e-12);
    CHECK(support::thrown_kind([&] { pca_reduce(x, 4); }) == ErrorKind::config);
    CHECK(support::thrown_kind([&] { pca_reduce(x, 0); }) == ErrorKind::config);
  }
}
