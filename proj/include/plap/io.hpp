#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "plap/problem.hpp"

namespace plap {

/// Failure categories of the IDX reader (all reported as data errors).
enum class IdxError { open_failed, bad_magic, truncated, dimension_overflow };

class IdxFormatError : public std::runtime_error {
 public:
  IdxFormatError(IdxError code, const std::string& what) : std::runtime_error(what), code_(code) {}
  IdxError code() const noexcept { return code_; }

 private:
  IdxError code_;
};

/// IDX image file (magic 0x00000803): one row per image, pixels scaled by 1/255,
/// row-major. max_items limits how many images are read (0 = all).
Eigen::MatrixXd load_idx_images(const std::filesystem::path& path, std::size_t max_items = 0);
/// IDX label file (magic 0x00000801).
std::vector<int> load_idx_labels(const std::filesystem::path& path, std::size_t max_items = 0);

struct CsvDataset {
  std::vector<std::string> feature_names;
  Eigen::MatrixXd features;
  std::vector<int> labels;  // -1 for empty cells; empty when the file has no label column
  bool has_labels = false;
};

/// Header row required. A column named "label" holds integer class ids; an
/// empty cell marks an unlabeled row. All other cells must be numeric.
CsvDataset load_csv_dataset(const std::filesystem::path& path);
void write_csv_dataset(const std::filesystem::path& path, const CsvDataset& data);

/// Self-describing JSON container for a ProblemSpec.
std::string problem_to_json(const ProblemSpec& spec);
ProblemSpec problem_from_json(const std::string& text);
void save_problem(const std::filesystem::path& path, const ProblemSpec& spec);
ProblemSpec load_problem(const std::filesystem::path& path);

enum class ExperimentKind { regression_convergence, ssl_accuracy, tiny_oracle };

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::regression_convergence;
  std::vector<double> p{20.0};
  std::optional<double> delta_min;  // module defaults when unset
  std::optional<double> delta_max;
  Index m = 500;
  Index n = 450;
  Index n_vertices = 400;
  Index k = 10;
  std::vector<std::uint64_t> seeds{1};
  std::vector<std::string> solvers{"dirls"};
  std::optional<double> gap_tol;
  double rel_gap_tol = 0.0;
  double sigma_step_tol = 0.0;
  Index max_iters = 200;
  double newton_eps = 1e-8;
  /// Newton also stops only once its decrement is below this fraction of |E|.
  double newton_rel_decrement = 1e-10;
  std::string inner = "auto";
  int threads = 1;
  std::string output_dir = "out";
  std::string dataset;         // CSV path or IDX image path for ssl
  std::string dataset_labels;  // IDX label path
  Index subsample = 2000;
  Index labels_per_class = 1;
  Index pca_components = 0;  // 0 keeps the raw features

  void validate() const;
};

std::string_view to_string(ExperimentKind k);
ExperimentConfig experiment_config_from_json(const std::string& text);
std::string experiment_config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

}  // namespace plap
