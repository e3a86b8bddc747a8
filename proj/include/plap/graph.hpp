#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "plap/dirls.hpp"
#include "plap/problem.hpp"

namespace plap {

/// Undirected weighted graph with canonical orientation i < j per edge.
struct WeightedGraph {
  Index n_vertices = 0;
  std::vector<std::array<Index, 2>> edges;
  Vector weights;

  /// Throws config error on self-loops, duplicates, non-canonical
  /// orientation, out-of-range vertices or non-positive weights.
  void validate() const;
  Index num_edges() const noexcept { return static_cast<Index>(edges.size()); }
};

struct Hypergraph {
  Index n_vertices = 0;
  std::vector<std::vector<Index>> hyperedges;
  Vector weights;
};

/// Features (one row per vertex) with a partial labelling; -1 marks unlabeled.
struct SslTask {
  Eigen::MatrixXd features;
  std::vector<int> labels;
  int n_classes = 0;

  void validate() const;
};

enum class KnnSymmetrization { union_of_neighbors, mutual };

/// Projects centred rows onto the leading `components` principal axes. Each
/// axis is signed so that its largest-magnitude loading is positive.
Eigen::MatrixXd pca_reduce(const Eigen::MatrixXd& features, Index components);

/// Exact k-nearest-neighbour graph with Gaussian weights exp(-d^2 / s^2),
/// s = half the longest constructed edge. Ties in distance go to the lower index.
WeightedGraph knn_graph(const Eigen::MatrixXd& features, Index k,
                        KnnSymmetrization mode = KnnSymmetrization::union_of_neighbors);

/// Row e holds +1 at edges[e][0] and -1 at edges[e][1].
SparseMatrix incidence_operator(const WeightedGraph& graph);

/// Every co-occurring pair becomes an edge weighted by the mean weight of the
/// hyperedges containing both endpoints.
WeightedGraph clique_expansion(const Hypergraph& h);

/// Component id per vertex, numbered by smallest member.
std::vector<Index> connected_components(const WeightedGraph& graph);

/// One-vs-rest binary problem for class_id: labeled vertices fixed to +1 (own
/// class) or -1, edge weights doubled, f = 0.
ProblemSpec build_ssl_problem(const WeightedGraph& graph, const SslTask& task, int class_id,
                              const Integrand& integrand);

struct ClassifyConfig {
  DirlsConfig dirls{};
  int threads = 1;
};

struct ClassifyResult {
  std::vector<int> predictions;
  std::vector<DirlsResult> per_class;
  std::vector<std::string> class_errors;  // empty string when the class solved
  /// Score snapshots: snapshots[c][k] holds u_g of class c after outer iteration k+1.
  std::vector<std::vector<Vector>> snapshots;

  /// Predictions when every class uses its iterate k+1 (or its last one).
  std::vector<int> predictions_at(Index k) const;
  Index max_iterations() const;
};

/// argmax over classes, lowest class id on ties.
std::vector<int> argmax_predictions(const std::vector<Vector>& scores);

ClassifyResult one_vs_rest_classify(const WeightedGraph& graph, const SslTask& task,
                                    const Integrand& integrand, const ClassifyConfig& cfg = {});

/// Fraction of vertices in `which` (all when empty) whose prediction equals truth.
/// Two Gaussian blobs in `dim` dimensions whose means differ by `separation`
/// along the first axis; points 0..n/2-1 are class 0. One label per class:
/// vertex 0 and vertex n-1.
struct BlobDataset {
  SslTask task;
  std::vector<int> truth;
};
BlobDataset make_two_blobs(Index n, Index dim, double separation, std::uint64_t seed);

double accuracy(const std::vector<int>& predictions, const std::vector<int>& truth,
                const std::vector<Index>& which = {});

/// "i j w" per line.
void write_edge_list(const std::filesystem::path& path, const WeightedGraph& graph);

}  // namespace plap
