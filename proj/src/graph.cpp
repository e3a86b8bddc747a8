#include "plap/graph.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <thread>

#include <Eigen/SVD>

#include "plap/error.hpp"

namespace plap {

void WeightedGraph::validate() const {
  if (weights.size() != num_edges()) throw config_error("graph: one weight per edge required");
  std::set<std::array<Index, 2>> seen;
  for (Index e = 0; e < num_edges(); ++e) {
    const auto [i, j] = edges[e];
    if (i < 0 || j >= n_vertices) throw config_error("graph: vertex index out of range");
    if (i == j) throw config_error("graph: self-loop at vertex " + std::to_string(i));
    if (i > j) throw config_error("graph: edge " + std::to_string(e) + " is not oriented i < j");
    if (!seen.insert(edges[e]).second) {
      throw config_error("graph: duplicate edge [" + std::to_string(i) + "," + std::to_string(j) + "]");
    }
    if (!(weights[e] > 0.0) || !std::isfinite(weights[e])) {
      throw config_error("graph: edge weights must be positive and finite");
    }
  }
}

void SslTask::validate() const {
  if (static_cast<Index>(labels.size()) != features.rows()) {
    throw config_error("SSL task: one label entry per feature row required");
  }
  if (n_classes < 1) throw config_error("SSL task: need at least one class");
  std::vector<int> count(static_cast<std::size_t>(n_classes), 0);
  for (int l : labels) {
    if (l < -1 || l >= n_classes) throw config_error("SSL task: label " + std::to_string(l) + " out of range");
    if (l >= 0) ++count[static_cast<std::size_t>(l)];
  }
  for (int c = 0; c < n_classes; ++c) {
    if (count[static_cast<std::size_t>(c)] == 0) {
      throw config_error("SSL task: class " + std::to_string(c) + " has no labeled vertex");
    }
  }
}

Eigen::MatrixXd pca_reduce(const Eigen::MatrixXd& features, Index components) {
  if (components < 1 || components > features.cols()) {
    throw config_error("pca: need 1 <= components <= " + std::to_string(features.cols()));
  }
  if (!features.allFinite()) throw data_error("pca: features must be finite");
  const Eigen::MatrixXd centred = features.rowwise() - features.colwise().mean();
  const Eigen::BDCSVD<Eigen::MatrixXd> svd(centred, Eigen::ComputeThinV);
  Eigen::MatrixXd axes = svd.matrixV().leftCols(components);
  for (Index c = 0; c < components; ++c) {
    Index at = 0;
    axes.col(c).cwiseAbs().maxCoeff(&at);
    if (axes(at, c) < 0.0) axes.col(c) *= -1.0;
  }
  return centred * axes;
}

WeightedGraph knn_graph(const Eigen::MatrixXd& features, Index k, KnnSymmetrization mode) {
  const Index n = features.rows();
  if (k < 1) throw config_error("knn_graph: K must be >= 1");
  if (k >= n) throw config_error("knn_graph: K must be smaller than the number of points");
  if (!features.allFinite()) throw data_error("knn_graph: features must be finite");

  std::vector<std::vector<Index>> nearest(static_cast<std::size_t>(n));
  std::vector<std::pair<double, Index>> cand(static_cast<std::size_t>(n - 1));
  for (Index i = 0; i < n; ++i) {
    std::size_t c = 0;
    for (Index j = 0; j < n; ++j) {
      if (j == i) continue;
      cand[c++] = {(features.row(i) - features.row(j)).squaredNorm(), j};
    }
    std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
    for (Index t = 0; t < k; ++t) nearest[i].push_back(cand[t].second);
    std::sort(nearest[i].begin(), nearest[i].end());
  }

  std::set<std::array<Index, 2>> edge_set;
  for (Index i = 0; i < n; ++i) {
    for (Index j : nearest[i]) {
      if (mode == KnnSymmetrization::mutual &&
          !std::binary_search(nearest[j].begin(), nearest[j].end(), i)) {
        continue;
      }
      edge_set.insert({std::min(i, j), std::max(i, j)});
    }
  }

  std::vector<double> dist2;
  dist2.reserve(edge_set.size());
  double max_len = 0.0;
  for (const auto& [i, j] : edge_set) {
    dist2.push_back((features.row(i) - features.row(j)).squaredNorm());
    max_len = std::max(max_len, std::sqrt(dist2.back()));
  }
  const double sigma = max_len / 2.0;
  WeightedGraph g;
  g.n_vertices = n;
  std::vector<double> w;
  std::size_t idx = 0;
  for (const auto& e : edge_set) {
    const double d2 = dist2[idx++];
    const double weight = d2 == 0.0 ? 1.0 : std::exp(-d2 / (sigma * sigma));
    if (weight > 0.0) {
      g.edges.push_back(e);
      w.push_back(weight);
    }
  }
  g.weights = Eigen::Map<Vector>(w.data(), static_cast<Index>(w.size()));
  return g;
}

SparseMatrix incidence_operator(const WeightedGraph& graph) {
  graph.validate();
  std::vector<Triplet> t;
  t.reserve(2 * graph.edges.size());
  for (Index e = 0; e < graph.num_edges(); ++e) {
    t.push_back({e, graph.edges[e][0], 1.0});
    t.push_back({e, graph.edges[e][1], -1.0});
  }
  return SparseMatrix::from_triplets(graph.num_edges(), graph.n_vertices, t);
}

WeightedGraph clique_expansion(const Hypergraph& h) {
  if (h.hyperedges.empty()) throw config_error("clique_expansion: hypergraph has no hyperedges");
  if (h.weights.size() != static_cast<Index>(h.hyperedges.size())) {
    throw config_error("clique_expansion: one weight per hyperedge required");
  }
  std::map<std::array<Index, 2>, std::pair<double, Index>> acc;
  for (std::size_t k = 0; k < h.hyperedges.size(); ++k) {
    std::vector<Index> vs = h.hyperedges[k];
    std::sort(vs.begin(), vs.end());
    vs.erase(std::unique(vs.begin(), vs.end()), vs.end());
    if (vs.size() < 2) throw config_error("clique_expansion: hyperedge " + std::to_string(k) + " has fewer than 2 vertices");
    if (vs.front() < 0 || vs.back() >= h.n_vertices) throw config_error("clique_expansion: vertex out of range");
    if (!(h.weights[static_cast<Index>(k)] > 0.0)) throw config_error("clique_expansion: weights must be positive");
    for (std::size_t a = 0; a < vs.size(); ++a) {
      for (std::size_t b = a + 1; b < vs.size(); ++b) {
        auto& slot = acc[{vs[a], vs[b]}];
        slot.first += h.weights[static_cast<Index>(k)];
        slot.second += 1;
      }
    }
  }
  WeightedGraph g;
  g.n_vertices = h.n_vertices;
  g.weights.resize(static_cast<Index>(acc.size()));
  Index e = 0;
  for (const auto& [pair, sum] : acc) {
    g.edges.push_back(pair);
    g.weights[e++] = sum.first / static_cast<double>(sum.second);
  }
  return g;
}

std::vector<Index> connected_components(const WeightedGraph& graph) {
  std::vector<Index> parent(static_cast<std::size_t>(graph.n_vertices));
  std::iota(parent.begin(), parent.end(), Index{0});
  auto find = [&](Index x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& [i, j] : graph.edges) {
    const Index a = find(i);
    const Index b = find(j);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
  std::vector<Index> comp(parent.size());
  for (Index v = 0; v < graph.n_vertices; ++v) comp[v] = find(v);
  return comp;
}

ProblemSpec build_ssl_problem(const WeightedGraph& graph, const SslTask& task, int class_id,
                              const Integrand& integrand) {
  graph.validate();
  const Index n = graph.n_vertices;
  if (static_cast<Index>(task.labels.size()) != n) throw config_error("SSL task does not match the graph size");
  if (class_id < 0 || class_id >= task.n_classes) throw config_error("class id out of range");

  const std::vector<Index> comp = connected_components(graph);
  std::vector<bool> anchored(static_cast<std::size_t>(n), false);
  for (Index v = 0; v < n; ++v) {
    if (task.labels[v] >= 0) anchored[comp[v]] = true;
  }
  for (Index v = 0; v < n; ++v) {
    if (!anchored[comp[v]]) {
      const Index size = std::count(comp.begin(), comp.end(), comp[v]);
      throw config_error("connected component " + std::to_string(comp[v]) + " (" +
                         std::to_string(size) + " vertices, containing vertex " + std::to_string(v) +
                         ") has no labeled vertex");
    }
  }

  Vector g = Vector::Zero(n);
  std::vector<bool> fixed(static_cast<std::size_t>(n), false);
  for (Index v = 0; v < n; ++v) {
    if (task.labels[v] < 0) continue;
    fixed[v] = true;
    g[v] = task.labels[v] == class_id ? 1.0 : -1.0;
  }
  return {incidence_operator(graph), Vector(2.0 * graph.weights), Vector::Zero(n), std::move(g),
          std::move(fixed), integrand};
}

std::vector<int> argmax_predictions(const std::vector<Vector>& scores) {
  if (scores.empty()) return {};
  const Index n = scores.front().size();
  std::vector<int> out(static_cast<std::size_t>(n), 0);
  for (Index v = 0; v < n; ++v) {
    double best = scores[0][v];
    for (std::size_t c = 1; c < scores.size(); ++c) {
      if (scores[c][v] > best) {
        best = scores[c][v];
        out[v] = static_cast<int>(c);
      }
    }
  }
  return out;
}

Index ClassifyResult::max_iterations() const {
  Index k = 0;
  for (const auto& s : snapshots) k = std::max(k, static_cast<Index>(s.size()));
  return k;
}

std::vector<int> ClassifyResult::predictions_at(Index k) const {
  std::vector<Vector> scores;
  for (const auto& s : snapshots) {
    if (s.empty()) throw solver_error("no iterates recorded for a class");
    scores.push_back(s[std::min<std::size_t>(static_cast<std::size_t>(k), s.size() - 1)]);
  }
  return argmax_predictions(scores);
}

ClassifyResult one_vs_rest_classify(const WeightedGraph& graph, const SslTask& task,
                                    const Integrand& integrand, const ClassifyConfig& cfg) {
  task.validate();
  if (cfg.threads < 1) throw config_error("threads must be >= 1");
  const int classes = task.n_classes;
  ClassifyResult result;
  result.per_class.resize(static_cast<std::size_t>(classes));
  result.class_errors.assign(static_cast<std::size_t>(classes), "");
  result.snapshots.resize(static_cast<std::size_t>(classes));

  // Validate all specs up front so configuration errors surface before solving.
  std::vector<ProblemSpec> specs;
  for (int c = 0; c < classes; ++c) specs.push_back(build_ssl_problem(graph, task, c, integrand));

  std::atomic<int> next{0};
  auto worker = [&] {
    for (int c = next++; c < classes; c = next++) {
      const ProblemSpec& spec = specs[static_cast<std::size_t>(c)];
      DirlsConfig dc = cfg.dirls;
      auto& snaps = result.snapshots[static_cast<std::size_t>(c)];
      dc.on_iterate = [&](const IterateState& s) {
        snaps.push_back(spec.expand_free(s.u_free) + spec.g());
        if (cfg.dirls.on_iterate) cfg.dirls.on_iterate(s);
      };
      try {
        result.per_class[static_cast<std::size_t>(c)] = dirls_solve(spec, dc);
        const auto& r = result.per_class[static_cast<std::size_t>(c)];
        if (r.status == SolveStatus::inner_failure) {
          result.class_errors[static_cast<std::size_t>(c)] = "class " + std::to_string(c) + ": " + r.message;
        }
      } catch (const std::exception& e) {
        result.class_errors[static_cast<std::size_t>(c)] = "class " + std::to_string(c) + ": " + e.what();
      }
      if (snaps.empty()) snaps.push_back(spec.g());
    }
  };
  const int nthreads = std::min(cfg.threads, classes);
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::vector<Vector> scores;
  for (int c = 0; c < classes; ++c) {
    const auto& r = result.per_class[static_cast<std::size_t>(c)];
    scores.push_back(r.u_g.size() == graph.n_vertices ? r.u_g : result.snapshots[static_cast<std::size_t>(c)].back());
  }
  result.predictions = argmax_predictions(scores);
  return result;
}

BlobDataset make_two_blobs(Index n, Index dim, double separation, std::uint64_t seed) {
  if (n < 2 || dim < 1) throw config_error("two blobs: need n >= 2 and dim >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise;
  BlobDataset out;
  out.task.features.resize(n, dim);
  out.task.n_classes = 2;
  out.task.labels.assign(static_cast<std::size_t>(n), -1);
  out.truth.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const int cls = i < n / 2 ? 0 : 1;
    out.truth[i] = cls;
    for (Index d = 0; d < dim; ++d) {
      const double centre = d == 0 ? (cls == 1 ? 0.5 * separation : -0.5 * separation) : 0.0;
      out.task.features(i, d) = noise(rng) + centre;
    }
  }
  out.task.labels.front() = out.truth.front();
  out.task.labels.back() = out.truth.back();
  return out;
}

double accuracy(const std::vector<int>& predictions, const std::vector<int>& truth,
                const std::vector<Index>& which) {
  if (predictions.size() != truth.size()) throw std::invalid_argument("accuracy: size mismatch");
  Index hits = 0;
  Index total = 0;
  auto visit = [&](Index v) {
    ++total;
    if (predictions[v] == truth[v]) ++hits;
  };
  if (which.empty()) {
    for (Index v = 0; v < static_cast<Index>(truth.size()); ++v) visit(v);
  } else {
    for (Index v : which) visit(v);
  }
  return total == 0 ? 1.0 : static_cast<double>(hits) / static_cast<double>(total);
}

void write_edge_list(const std::filesystem::path& path, const WeightedGraph& graph) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write edge list " + path.string());
  out.precision(17);
  for (Index e = 0; e < graph.num_edges(); ++e) {
    out << graph.edges[e][0] << ' ' << graph.edges[e][1] << ' ' << graph.weights[e] << '\n';
  }
}

}  // namespace plap
