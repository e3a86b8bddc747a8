#include "plap/io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <charconv>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "plap/error.hpp"

namespace plap {
namespace {

using nlohmann::json;

std::uint32_t read_be32(std::istream& in, const std::string& path) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) {
    throw IdxFormatError(IdxError::truncated, "IDX file " + path + " is truncated in its header");
  }
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
}

std::ifstream open_idx(const std::filesystem::path& path, std::uint32_t magic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxFormatError(IdxError::open_failed, "cannot open IDX file " + path.string());
  const std::uint32_t got = read_be32(in, path.string());
  if (got != magic) {
    std::ostringstream msg;
    msg << "IDX file " << path.string() << " has magic 0x" << std::hex << got << ", expected 0x" << magic;
    throw IdxFormatError(IdxError::bad_magic, msg.str());
  }
  return in;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cell);
      cell.clear();
    } else if (ch != '\r') {
      cell.push_back(ch);
    }
  }
  out.push_back(cell);
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& s, std::size_t line, std::size_t col) {
  const std::string t = trim(s);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
    throw data_error("CSV line " + std::to_string(line) + ", column " + std::to_string(col + 1) +
                     ": non-numeric cell '" + s + "'");
  }
  return v;
}

json vec_to_json(const Vector& v) { return json(std::vector<double>(v.begin(), v.end())); }

Vector vec_from_json(const json& j, Index expected, const char* what) {
  const auto v = j.get<std::vector<double>>();
  if (static_cast<Index>(v.size()) != expected) {
    throw data_error(std::string("problem JSON: ") + what + " has wrong length");
  }
  return Eigen::Map<const Vector>(v.data(), expected);
}

template <class T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

}  // namespace

Eigen::MatrixXd load_idx_images(const std::filesystem::path& path, std::size_t max_items) {
  std::ifstream in = open_idx(path, 0x00000803u);
  const std::uint64_t count = read_be32(in, path.string());
  const std::uint64_t rows = read_be32(in, path.string());
  const std::uint64_t cols = read_be32(in, path.string());
  const std::uint64_t pixels = rows * cols;
  if (rows == 0 || cols == 0 || pixels > (1u << 24) || count > (1ull << 31)) {
    throw IdxFormatError(IdxError::dimension_overflow, "IDX file " + path.string() + " has implausible dimensions");
  }
  const std::uint64_t take = max_items == 0 ? count : std::min<std::uint64_t>(count, max_items);
  Eigen::MatrixXd out(static_cast<Index>(take), static_cast<Index>(pixels));
  std::vector<unsigned char> buf(pixels);
  for (std::uint64_t i = 0; i < take; ++i) {
    if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(pixels))) {
      throw IdxFormatError(IdxError::truncated, "IDX file " + path.string() + " is truncated at image " + std::to_string(i));
    }
    for (std::uint64_t k = 0; k < pixels; ++k) out(static_cast<Index>(i), static_cast<Index>(k)) = buf[k] / 255.0;
  }
  return out;
}

std::vector<int> load_idx_labels(const std::filesystem::path& path, std::size_t max_items) {
  std::ifstream in = open_idx(path, 0x00000801u);
  const std::uint64_t count = read_be32(in, path.string());
  if (count > (1ull << 31)) {
    throw IdxFormatError(IdxError::dimension_overflow, "IDX file " + path.string() + " has implausible dimensions");
  }
  const std::uint64_t take = max_items == 0 ? count : std::min<std::uint64_t>(count, max_items);
  std::vector<unsigned char> buf(take);
  if (take > 0 && !in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(take))) {
    throw IdxFormatError(IdxError::truncated, "IDX file " + path.string() + " is truncated");
  }
  return {buf.begin(), buf.end()};
}

CsvDataset load_csv_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open CSV file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw data_error("CSV file " + path.string() + " is empty");
  const auto header = split_csv_line(line);
  CsvDataset out;
  std::ptrdiff_t label_col = -1;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string name = trim(header[c]);
    if (name == "label") {
      label_col = static_cast<std::ptrdiff_t>(c);
    } else {
      out.feature_names.push_back(name);
    }
  }
  out.has_labels = label_col >= 0;
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw data_error("CSV line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                       " cells, header has " + std::to_string(header.size()));
    }
    std::vector<double> row;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (static_cast<std::ptrdiff_t>(c) == label_col) {
        const std::string t = trim(cells[c]);
        if (t.empty()) {
          out.labels.push_back(-1);
        } else {
          const double v = parse_double(t, line_no, c);
          if (v != std::floor(v) || v < 0 || v > std::numeric_limits<int>::max()) {
            throw data_error("CSV line " + std::to_string(line_no) + ": label must be a nonnegative integer");
          }
          out.labels.push_back(static_cast<int>(v));
        }
      } else {
        row.push_back(parse_double(cells[c], line_no, c));
      }
    }
    rows.push_back(std::move(row));
  }
  out.features.resize(static_cast<Index>(rows.size()), static_cast<Index>(out.feature_names.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) out.features(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
  }
  return out;
}

void write_csv_dataset(const std::filesystem::path& path, const CsvDataset& data) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write CSV file " + path.string());
  out.precision(17);
  for (std::size_t c = 0; c < data.feature_names.size(); ++c) out << (c ? "," : "") << data.feature_names[c];
  if (data.has_labels) out << (data.feature_names.empty() ? "" : ",") << "label";
  out << '\n';
  for (Index r = 0; r < data.features.rows(); ++r) {
    for (Index c = 0; c < data.features.cols(); ++c) out << (c ? "," : "") << data.features(r, c);
    if (data.has_labels) {
      out << (data.features.cols() ? "," : "");
      if (data.labels[r] >= 0) out << data.labels[r];
    }
    out << '\n';
  }
}

std::string problem_to_json(const ProblemSpec& spec) {
  json j;
  j["format"] = "plap-problem";
  j["version"] = 1;
  j["rows"] = spec.num_terms();
  j["cols"] = spec.num_coords();
  const SparseMatrix& b = spec.b();
  j["row_offsets"] = std::vector<Index>(b.row_offsets().begin(), b.row_offsets().end());
  j["col_indices"] = std::vector<Index>(b.col_indices().begin(), b.col_indices().end());
  j["values"] = std::vector<double>(b.values().begin(), b.values().end());
  j["weights"] = vec_to_json(spec.weights());
  j["f"] = vec_to_json(spec.f());
  j["g"] = vec_to_json(spec.g());
  j["fixed"] = spec.fixed();
  json integrand;
  integrand["family"] = spec.integrand().is_regularized() ? "regularized-power" : "power";
  integrand["p"] = spec.integrand().p();
  if (auto d = spec.integrand().delta()) integrand["delta"] = {d->lower, d->upper};
  j["integrand"] = integrand;
  return j.dump(1);
}

ProblemSpec problem_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw data_error(std::string("problem JSON: ") + e.what());
  }
  try {
    if (j.value("format", "") != "plap-problem") throw data_error("problem JSON: missing format tag");
    const Index rows = j.at("rows").get<Index>();
    const Index cols = j.at("cols").get<Index>();
    SparseMatrix b(rows, cols, j.at("row_offsets").get<std::vector<Index>>(),
                   j.at("col_indices").get<std::vector<Index>>(), j.at("values").get<std::vector<double>>());
    const json& in = j.at("integrand");
    const double p = in.at("p").get<double>();
    const std::string family = in.at("family").get<std::string>();
    Integrand integrand = Integrand::power(p);
    if (family == "regularized-power") {
      const auto d = in.at("delta").get<std::array<double, 2>>();
      integrand = Integrand::regularized(p, d[0], d[1]);
    } else if (family != "power") {
      throw data_error("problem JSON: unknown integrand family '" + family + "'");
    }
    return {std::move(b), vec_from_json(j.at("weights"), rows, "weights"), vec_from_json(j.at("f"), cols, "f"),
            vec_from_json(j.at("g"), cols, "g"), j.at("fixed").get<std::vector<bool>>(), integrand};
  } catch (const json::exception& e) {
    throw data_error(std::string("problem JSON: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw data_error(std::string("problem JSON: ") + e.what());
  }
}

void save_problem(const std::filesystem::path& path, const ProblemSpec& spec) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write " + path.string());
  out << problem_to_json(spec) << '\n';
}

ProblemSpec load_problem(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return problem_from_json(ss.str());
}

std::string_view to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::regression_convergence: return "regression-convergence";
    case ExperimentKind::ssl_accuracy: return "ssl-accuracy";
    case ExperimentKind::tiny_oracle: return "tiny-oracle";
  }
  return "regression-convergence";
}

void ExperimentConfig::validate() const {
  if (p.empty()) throw config_error("config: p list is empty");
  for (double v : p) {
    if (!(v >= 2.0) || !std::isfinite(v)) throw config_error("config: every p must be a finite value >= 2");
  }
  if (delta_min || delta_max) {
    const double lo = delta_min.value_or(0.0);
    const double hi = delta_max.value_or(0.0);
    if (!(lo > 0.0 && hi >= lo && std::isfinite(hi))) {
      throw config_error("config: relaxation interval needs 0 < delta_min <= delta_max < inf");
    }
  }
  for (const auto& s : solvers) {
    if (s != "dirls" && s != "newton") throw config_error("config: unknown solver '" + s + "' (dirls|newton)");
  }
  if (gap_tol && !(*gap_tol > 0.0)) throw config_error("config: gap_tol must be positive");
  if (rel_gap_tol < 0.0) throw config_error("config: rel_gap_tol must be >= 0");
  if (sigma_step_tol < 0.0) throw config_error("config: sigma_step_tol must be >= 0");
  if (max_iters < 1) throw config_error("config: max_iters must be >= 1");
  if (!(newton_eps > 0.0)) throw config_error("config: newton_eps must be positive");
  if (newton_rel_decrement < 0.0) throw config_error("config: newton_rel_decrement must be >= 0");
  if (threads < 1) throw config_error("config: threads must be >= 1");
  if (seeds.empty()) throw config_error("config: seeds list is empty");
  if (experiment == ExperimentKind::regression_convergence && !(m > n && n >= 1)) {
    throw config_error("config: regression needs M > N >= 1");
  }
  if (experiment == ExperimentKind::ssl_accuracy && !(k >= 1)) throw config_error("config: K must be >= 1");
  if (pca_components < 0) throw config_error("config: pca_components must be >= 0");
}

ExperimentConfig experiment_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw config_error(std::string("config JSON: ") + e.what());
  }
  ExperimentConfig c;
  try {
    if (j.contains("experiment")) {
      const auto e = j.at("experiment").get<std::string>();
      if (e == "regression-convergence") c.experiment = ExperimentKind::regression_convergence;
      else if (e == "ssl-accuracy") c.experiment = ExperimentKind::ssl_accuracy;
      else if (e == "tiny-oracle") c.experiment = ExperimentKind::tiny_oracle;
      else throw config_error("config: unknown experiment '" + e + "'");
    }
    if (j.contains("p")) {
      c.p = j.at("p").is_array() ? j.at("p").get<std::vector<double>>() : std::vector<double>{j.at("p").get<double>()};
    }
    if (j.contains("delta") && !j.at("delta").is_null()) {
      const auto d = j.at("delta").get<std::array<double, 2>>();
      c.delta_min = d[0];
      c.delta_max = d[1];
    }
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("solvers")) c.solvers = j.at("solvers").get<std::vector<std::string>>();
    if (j.contains("gap_tol") && !j.at("gap_tol").is_null()) c.gap_tol = j.at("gap_tol").get<double>();
    maybe(j, "m", c.m);
    maybe(j, "n", c.n);
    maybe(j, "n_vertices", c.n_vertices);
    maybe(j, "k", c.k);
    maybe(j, "rel_gap_tol", c.rel_gap_tol);
    maybe(j, "sigma_step_tol", c.sigma_step_tol);
    maybe(j, "max_iters", c.max_iters);
    maybe(j, "newton_eps", c.newton_eps);
    maybe(j, "newton_rel_decrement", c.newton_rel_decrement);
    maybe(j, "inner", c.inner);
    maybe(j, "threads", c.threads);
    maybe(j, "output_dir", c.output_dir);
    maybe(j, "dataset", c.dataset);
    maybe(j, "dataset_labels", c.dataset_labels);
    maybe(j, "subsample", c.subsample);
    maybe(j, "labels_per_class", c.labels_per_class);
    maybe(j, "pca_components", c.pca_components);
    for (const auto& [key, _] : j.items()) {
      static const std::array<const char*, 23> known{
          "experiment", "p", "delta", "seeds", "solvers", "gap_tol", "m", "n", "n_vertices", "k",
          "rel_gap_tol", "sigma_step_tol", "max_iters", "newton_eps", "newton_rel_decrement", "inner", "threads", "output_dir", "dataset",
          "dataset_labels", "subsample", "labels_per_class", "pca_components"};
      if (std::find(known.begin(), known.end(), key) == known.end()) {
        throw config_error("config: unknown key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw config_error(std::string("config JSON: ") + e.what());
  }
  c.validate();
  return c;
}

std::string experiment_config_to_json(const ExperimentConfig& c) {
  json j;
  j["experiment"] = std::string(to_string(c.experiment));
  j["p"] = c.p;
  if (c.delta_min && c.delta_max) j["delta"] = {*c.delta_min, *c.delta_max};
  j["m"] = c.m;
  j["n"] = c.n;
  j["n_vertices"] = c.n_vertices;
  j["k"] = c.k;
  j["seeds"] = c.seeds;
  j["solvers"] = c.solvers;
  j["gap_tol"] = c.gap_tol ? json(*c.gap_tol) : json(nullptr);
  j["rel_gap_tol"] = c.rel_gap_tol;
  j["sigma_step_tol"] = c.sigma_step_tol;
  j["max_iters"] = c.max_iters;
  j["newton_eps"] = c.newton_eps;
  j["newton_rel_decrement"] = c.newton_rel_decrement;
  j["inner"] = c.inner;
  j["threads"] = c.threads;
  j["output_dir"] = c.output_dir;
  j["dataset"] = c.dataset;
  j["dataset_labels"] = c.dataset_labels;
  j["subsample"] = c.subsample;
  j["labels_per_class"] = c.labels_per_class;
  j["pca_components"] = c.pca_components;
  return j.dump(2);
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return experiment_config_from_json(ss.str());
}

}  // namespace plap
