#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "advsearch/adaptive_ann.hpp"
#include "advsearch/adaptive_reg.hpp"
#include "advsearch/dataset.hpp"
#include "advsearch/errors.hpp"

// Binary layouts are little-endian:
//   Hamming  "ADVH" u32 version, u64 n, u64 d, n * ceil(d/64) u64 words (bit j of a point is bit j%64 of word j/64)
//   L2       "ADVE" u32 version, u64 n, u64 d, n * d f32 row-major
//   Problem  "ADVR" u32 version, u64 n, u64 d, f64 kappa_bound, n*d f64 U row-major, n f64 b
//   Updates  "ADVU" u32 version, u64 count, then per record u8 kind (0 = U, 1 = b), u64 nnz,
//            entries (u64 row, u64 col, f64 delta) for U or (u64 index, f64 delta) for b
// Text forms: CSV rows of 0/1 or reals; update lines "U row:col:delta ..." and "b index:delta ...".

namespace advsearch::io {

using json = nlohmann::json;

inline constexpr std::uint32_t kFormatVersion = 1;

namespace detail {

template <class T>
void put(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is, const char* what) {
  T v;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw FormatError(std::string("truncated input reading ") + what);
  return v;
}

inline void put_magic(std::ostream& os, const char (&m)[5]) {
  os.write(m, 4);
  put<std::uint32_t>(os, kFormatVersion);
}

inline void expect_magic(std::istream& is, const char (&m)[5]) {
  char got[4];
  if (!is.read(got, 4) || std::memcmp(got, m, 4) != 0) throw FormatError(std::string("bad magic, expected ") + m);
  const auto v = get<std::uint32_t>(is, "version");
  if (v != kFormatVersion) throw FormatError("unsupported format version " + std::to_string(v));
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path);
  return f;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot write " + path);
  return f;
}

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, sep)) out.push_back(cell);
  return out;
}

inline double parse_double(const std::string& s, std::size_t line) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size() && s.find_first_not_of(" \t\r", pos) != std::string::npos) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError("line " + std::to_string(line) + ": not a number: '" + s + "'");
  }
}

inline std::uint64_t parse_index(const std::string& s, std::size_t line) {
  try {
    std::size_t pos = 0;
    const auto v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError("line " + std::to_string(line) + ": not an index: '" + s + "'");
  }
}

inline bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Datasets.

inline void write_hamming(std::ostream& os, const HammingDataset& data) {
  detail::put_magic(os, "ADVH");
  detail::put<std::uint64_t>(os, data.size());
  detail::put<std::uint64_t>(os, data.dim());
  for (std::uint64_t w : data.raw()) detail::put(os, w);
}

inline HammingDataset read_hamming(std::istream& is) {
  detail::expect_magic(is, "ADVH");
  const auto n = detail::get<std::uint64_t>(is, "n");
  const auto d = detail::get<std::uint64_t>(is, "d");
  std::vector<std::uint64_t> bits(n * words_for_bits(d));
  for (auto& w : bits) w = detail::get<std::uint64_t>(is, "bits");
  return HammingDataset(n, d, std::move(bits));
}

inline void write_hamming_csv(std::ostream& os, const HammingDataset& data) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < data.dim(); ++j) os << (j ? "," : "") << (data.bit(i, j) ? '1' : '0');
    os << '\n';
  }
}

inline HammingDataset read_hamming_csv(std::istream& is) {
  std::string line;
  std::size_t lineno = 0;
  std::optional<HammingDataset> data;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = detail::split(line, ',');
    if (!data) data.emplace(cells.size());
    if (cells.size() != data->dim()) throw FormatError("line " + std::to_string(lineno) + ": wrong column count");
    HammingDataset::Point p(words_for_bits(cells.size()), 0);
    for (std::size_t j = 0; j < cells.size(); ++j) {
      if (cells[j] == "1") HammingDataset::flip(p, j);
      else if (cells[j] != "0") throw FormatError("line " + std::to_string(lineno) + ": bits must be 0 or 1");
    }
    data->push_back(p);
  }
  if (!data) throw FormatError("empty Hamming CSV");
  return std::move(*data);
}

inline void write_l2(std::ostream& os, const EuclideanDataset& data) {
  detail::put_magic(os, "ADVE");
  detail::put<std::uint64_t>(os, data.size());
  detail::put<std::uint64_t>(os, data.dim());
  for (std::size_t i = 0; i < data.size(); ++i)
    for (double x : data.point(i)) detail::put(os, static_cast<float>(x));
}

inline EuclideanDataset read_l2(std::istream& is) {
  detail::expect_magic(is, "ADVE");
  const auto n = detail::get<std::uint64_t>(is, "n");
  const auto d = detail::get<std::uint64_t>(is, "d");
  std::vector<double> vals(n * d);
  for (auto& v : vals) v = detail::get<float>(is, "coordinates");
  return EuclideanDataset(n, d, std::move(vals));
}

inline void write_l2_csv(std::ostream& os, const EuclideanDataset& data) {
  os.precision(17);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto p = data.point(i);
    for (std::size_t j = 0; j < p.size(); ++j) os << (j ? "," : "") << p[j];
    os << '\n';
  }
}

inline EuclideanDataset read_l2_csv(std::istream& is) {
  std::string line;
  std::size_t lineno = 0;
  std::optional<EuclideanDataset> data;
  std::vector<double> p;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = detail::split(line, ',');
    if (!data) data.emplace(cells.size());
    if (cells.size() != data->dim()) throw FormatError("line " + std::to_string(lineno) + ": wrong column count");
    p.resize(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j) p[j] = detail::parse_double(cells[j], lineno);
    data->push_back(p);
  }
  if (!data) throw FormatError("empty L2 CSV");
  return std::move(*data);
}

// Format chosen by extension: ".csv" is text, anything else binary.
inline HammingDataset load_hamming(const std::string& path) {
  auto f = detail::open_in(path);
  return detail::ends_with(path, ".csv") ? read_hamming_csv(f) : read_hamming(f);
}
inline void save_hamming(const std::string& path, const HammingDataset& data) {
  auto f = detail::open_out(path);
  detail::ends_with(path, ".csv") ? write_hamming_csv(f, data) : write_hamming(f, data);
}
inline EuclideanDataset load_l2(const std::string& path) {
  auto f = detail::open_in(path);
  return detail::ends_with(path, ".csv") ? read_l2_csv(f) : read_l2(f);
}
inline void save_l2(const std::string& path, const EuclideanDataset& data) {
  auto f = detail::open_out(path);
  detail::ends_with(path, ".csv") ? write_l2_csv(f, data) : write_l2(f, data);
}

// ---------------------------------------------------------------------------
// Regression problems and update streams.

inline void write_problem(std::ostream& os, const RegProblem& p) {
  detail::put_magic(os, "ADVR");
  detail::put<std::uint64_t>(os, p.rows());
  detail::put<std::uint64_t>(os, p.cols());
  detail::put<double>(os, p.kappa_bound);
  for (Eigen::Index i = 0; i < p.U.rows(); ++i)
    for (Eigen::Index j = 0; j < p.U.cols(); ++j) detail::put<double>(os, p.U(i, j));
  for (Eigen::Index i = 0; i < p.b.size(); ++i) detail::put<double>(os, p.b(i));
}

inline RegProblem read_problem(std::istream& is) {
  detail::expect_magic(is, "ADVR");
  const auto n = static_cast<Eigen::Index>(detail::get<std::uint64_t>(is, "n"));
  const auto d = static_cast<Eigen::Index>(detail::get<std::uint64_t>(is, "d"));
  RegProblem p;
  p.kappa_bound = detail::get<double>(is, "kappa");
  p.U.resize(n, d);
  p.b.resize(n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) p.U(i, j) = detail::get<double>(is, "U");
  for (Eigen::Index i = 0; i < n; ++i) p.b(i) = detail::get<double>(is, "b");
  p.validate();
  return p;
}

inline RegProblem load_problem(const std::string& path) {
  auto f = detail::open_in(path);
  return read_problem(f);
}
inline void save_problem(const std::string& path, const RegProblem& p) {
  auto f = detail::open_out(path);
  write_problem(f, p);
}

// Only the sparse record kinds have a file representation.
inline void write_updates_text(std::ostream& os, const std::vector<RegUpdate>& ups) {
  os.precision(17);
  for (const auto& up : ups) {
    if (const auto* u = std::get_if<SparseUUpdate>(&up)) {
      os << 'U';
      for (const auto& e : u->entries) os << ' ' << e.row << ':' << e.col << ':' << e.value;
    } else if (const auto* b = std::get_if<SparseBUpdate>(&up)) {
      os << 'b';
      for (const auto& e : b->entries) os << ' ' << e.index << ':' << e.value;
    } else {
      throw ParameterError("write_updates: only sparse U and b records are serializable");
    }
    os << '\n';
  }
}

inline std::vector<RegUpdate> read_updates_text(std::istream& is) {
  std::vector<RegUpdate> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string kind, tok;
    ss >> kind;
    if (kind == "U") {
      SparseUUpdate u;
      while (ss >> tok) {
        const auto f = detail::split(tok, ':');
        if (f.size() != 3) throw FormatError("line " + std::to_string(lineno) + ": U entries are row:col:delta");
        u.entries.push_back({detail::parse_index(f[0], lineno), detail::parse_index(f[1], lineno),
                             detail::parse_double(f[2], lineno)});
      }
      out.emplace_back(std::move(u));
    } else if (kind == "b") {
      SparseBUpdate b;
      while (ss >> tok) {
        const auto f = detail::split(tok, ':');
        if (f.size() != 2) throw FormatError("line " + std::to_string(lineno) + ": b entries are index:delta");
        b.entries.push_back({detail::parse_index(f[0], lineno), detail::parse_double(f[1], lineno)});
      }
      out.emplace_back(std::move(b));
    } else {
      throw FormatError("line " + std::to_string(lineno) + ": record kind must be U or b");
    }
  }
  return out;
}

inline void write_updates_binary(std::ostream& os, const std::vector<RegUpdate>& ups) {
  detail::put_magic(os, "ADVU");
  detail::put<std::uint64_t>(os, ups.size());
  for (const auto& up : ups) {
    if (const auto* u = std::get_if<SparseUUpdate>(&up)) {
      detail::put<std::uint8_t>(os, 0);
      detail::put<std::uint64_t>(os, u->entries.size());
      for (const auto& e : u->entries) {
        detail::put<std::uint64_t>(os, e.row);
        detail::put<std::uint64_t>(os, e.col);
        detail::put<double>(os, e.value);
      }
    } else if (const auto* b = std::get_if<SparseBUpdate>(&up)) {
      detail::put<std::uint8_t>(os, 1);
      detail::put<std::uint64_t>(os, b->entries.size());
      for (const auto& e : b->entries) {
        detail::put<std::uint64_t>(os, e.index);
        detail::put<double>(os, e.value);
      }
    } else {
      throw ParameterError("write_updates: only sparse U and b records are serializable");
    }
  }
}

inline std::vector<RegUpdate> read_updates_binary(std::istream& is) {
  detail::expect_magic(is, "ADVU");
  const auto count = detail::get<std::uint64_t>(is, "count");
  std::vector<RegUpdate> out;
  for (std::uint64_t k = 0; k < count; ++k) {
    const auto kind = detail::get<std::uint8_t>(is, "kind");
    const auto nnz = detail::get<std::uint64_t>(is, "nnz");
    if (kind == 0) {
      SparseUUpdate u;
      for (std::uint64_t e = 0; e < nnz; ++e) {
        const auto row = detail::get<std::uint64_t>(is, "row");
        const auto col = detail::get<std::uint64_t>(is, "col");
        u.entries.push_back({row, col, detail::get<double>(is, "delta")});
      }
      out.emplace_back(std::move(u));
    } else if (kind == 1) {
      SparseBUpdate b;
      for (std::uint64_t e = 0; e < nnz; ++e) {
        const auto idx = detail::get<std::uint64_t>(is, "index");
        b.entries.push_back({idx, detail::get<double>(is, "delta")});
      }
      out.emplace_back(std::move(b));
    } else {
      throw FormatError("update record " + std::to_string(k) + ": unknown kind byte");
    }
  }
  return out;
}

inline std::vector<RegUpdate> load_updates(const std::string& path) {
  auto f = detail::open_in(path);
  return detail::ends_with(path, ".bin") ? read_updates_binary(f) : read_updates_text(f);
}
inline void save_updates(const std::string& path, const std::vector<RegUpdate>& ups) {
  auto f = detail::open_out(path);
  detail::ends_with(path, ".bin") ? write_updates_binary(f, ups) : write_updates_text(f, ups);
}

// ---------------------------------------------------------------------------
// Structure state: seeds, parameters and logical state only; tables and
// sketches are rebuilt from seeds on load.

inline json to_json(const LshConfig& c) {
  return {{"C_L", c.C_L}, {"C_q", c.C_q}, {"C_w", c.C_w}, {"jl_eps", c.jl_eps},
          {"jl_delta", c.jl_delta}, {"C_jl", c.C_jl}, {"jl_dim", c.jl_dim}};
}

inline LshConfig lsh_config_from_json(const json& j) {
  LshConfig c;
  c.C_L = j.at("C_L");
  c.C_q = j.at("C_q");
  c.C_w = j.at("C_w");
  c.jl_eps = j.at("jl_eps");
  c.jl_delta = j.at("jl_delta");
  c.C_jl = j.at("C_jl");
  c.jl_dim = j.at("jl_dim");
  return c;
}

inline json to_json(const AnnConfig& c) {
  return {{"c", c.c}, {"r", c.r}, {"s_bound", c.s_bound}, {"T", c.T}, {"beta", c.beta}, {"C_l", c.C_l},
          {"theta", c.theta}, {"cache_capacity", c.cache_capacity}, {"lsh", to_json(c.lsh)}};
}

inline AnnConfig ann_config_from_json(const json& j) {
  AnnConfig c;
  c.c = j.at("c");
  c.r = j.at("r");
  c.s_bound = j.at("s_bound");
  c.T = j.at("T");
  c.beta = j.at("beta");
  c.C_l = j.at("C_l");
  c.theta = j.at("theta");
  c.cache_capacity = j.at("cache_capacity");
  c.lsh = lsh_config_from_json(j.at("lsh"));
  return c;
}

template <class Lsh>
json save_index(const AdaptiveAnnIndex<Lsh>& index) {
  return {{"format", "advsearch.ann_index"},
          {"version", kFormatVersion},
          {"metric", Lsh::HasherType::kProjects ? "l2" : "hamming"},
          {"master_seed", index.master_seed().value},
          {"config", to_json(index.config())},
          {"theta", index.theta()},
          {"queries_answered", index.queries_answered()},
          {"deletions", index.deletion_list()}};
}

// Rebuilds over the same dataset; every copy ends fully synchronized.
template <class Lsh>
std::unique_ptr<AdaptiveAnnIndex<Lsh>> load_index(const json& j, std::shared_ptr<const typename Lsh::Dataset> data) {
  if (j.value("format", "") != "advsearch.ann_index") throw FormatError("not an ann_index document");
  const std::string metric = Lsh::HasherType::kProjects ? "l2" : "hamming";
  if (j.at("metric") != metric) throw FormatError("ann_index metric mismatch");
  AnnConfig cfg = ann_config_from_json(j.at("config"));
  cfg.theta = j.at("theta");
  auto index = std::make_unique<AdaptiveAnnIndex<Lsh>>(std::move(data), cfg, RandomSeed{j.at("master_seed").get<std::uint64_t>()});
  for (PointId id : j.at("deletions").get<std::vector<PointId>>()) index->delete_lazy(id);
  index->flush_block();
  index->resume_budget(j.at("queries_answered"));
  return index;
}

inline json grid_to_json(const OutputGrid& g) { return json(g.points()); }
inline OutputGrid grid_from_json(const json& j) { return OutputGrid::from_points(j.get<std::vector<double>>()); }

inline json problem_to_json(const RegProblem& p) {
  std::vector<double> u(p.rows() * p.cols());
  for (std::size_t i = 0; i < p.rows(); ++i)
    for (std::size_t k = 0; k < p.cols(); ++k)
      u[i * p.cols() + k] = p.U(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
  return {{"n", p.rows()}, {"d", p.cols()}, {"kappa_bound", p.kappa_bound}, {"U", u},
          {"b", std::vector<double>(p.b.data(), p.b.data() + p.b.size())}};
}

inline RegProblem problem_from_json(const json& j) {
  RegProblem p;
  const auto n = j.at("n").get<Eigen::Index>(), d = j.at("d").get<Eigen::Index>();
  const auto u = j.at("U").get<std::vector<double>>();
  const auto b = j.at("b").get<std::vector<double>>();
  if (u.size() != static_cast<std::size_t>(n * d) || b.size() != static_cast<std::size_t>(n))
    throw FormatError("problem snapshot has inconsistent sizes");
  p.U = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(u.data(), n, d);
  p.b = Eigen::Map<const Eigen::VectorXd>(b.data(), n);
  p.kappa_bound = j.at("kappa_bound");
  p.validate();
  return p;
}

inline json save_engine(const RegDpEngine& e) {
  const auto& c = e.config();
  return {{"format", "advsearch.reg_engine"}, {"version", kFormatVersion}, {"engine", "dp"},
          {"master_seed", e.master_seed().value}, {"queries_answered", e.queries_answered()},
          {"config", {{"alpha", c.alpha}, {"beta", c.beta}, {"T", c.T}, {"eps_dp", c.eps_dp},
                      {"beta_prime", c.beta_prime}, {"sample_multiplier", c.sample_multiplier},
                      {"cache_capacity", c.cache_capacity}, {"C_r", c.sketch.C_r}, {"C_m", c.sketch.C_m},
                      {"grid", grid_to_json(c.grid)}}},
          {"problem", problem_to_json(e.problem())}};
}

inline json save_engine(const RegPathEngine& e) {
  const auto& c = e.config();
  return {{"format", "advsearch.reg_engine"}, {"version", kFormatVersion}, {"engine", "path"},
          {"master_seed", e.seed().value}, {"queries_answered", e.queries_answered()},
          {"config", {{"alpha", c.alpha}, {"beta", c.beta}, {"T", c.T}, {"C_p", c.C_p},
                      {"path_budget", c.path_budget}, {"grid", grid_to_json(c.grid)}}},
          {"problem", problem_to_json(e.problem())}};
}

inline json save_engine(const RegPrecondEngine& e) {
  const auto& c = e.config();
  return {{"format", "advsearch.reg_engine"}, {"version", kFormatVersion}, {"engine", "precond"},
          {"master_seed", e.master_seed().value}, {"queries_answered", e.queries_answered()},
          {"epoch", e.epoch()}, {"counter", e.counter()},
          {"config", {{"alpha", c.alpha}, {"beta", c.beta}, {"T", c.T}, {"batch", c.batch},
                      {"sparsity", c.sparsity}, {"eps_dp", c.eps_dp}, {"beta_prime", c.beta_prime},
                      {"sample_multiplier", c.sample_multiplier}, {"cache_capacity", c.cache_capacity},
                      {"C_r", c.sketch.C_r}, {"C_m", c.sketch.C_m}, {"C_pre", c.C_pre},
                      {"precond_alpha", c.precond_alpha}, {"precond_attempts", c.precond_attempts},
                      {"grid", grid_to_json(c.grid)}}},
          {"problem", problem_to_json(e.problem())}};
}

namespace detail {
inline const json& engine_doc(const json& j, const char* kind) {
  if (j.value("format", "") != "advsearch.reg_engine") throw FormatError("not a reg_engine document");
  if (j.at("engine") != kind) throw FormatError(std::string("engine kind mismatch, expected ") + kind);
  return j.at("config");
}
}  // namespace detail

inline std::unique_ptr<RegDpEngine> load_dp_engine(const json& j) {
  const json& c = detail::engine_doc(j, "dp");
  RegDpConfig cfg;
  cfg.alpha = c.at("alpha");
  cfg.beta = c.at("beta");
  cfg.T = c.at("T");
  cfg.eps_dp = c.at("eps_dp");
  cfg.beta_prime = c.at("beta_prime");
  cfg.sample_multiplier = c.at("sample_multiplier");
  cfg.cache_capacity = c.at("cache_capacity");
  cfg.sketch.C_r = c.at("C_r");
  cfg.sketch.C_m = c.at("C_m");
  cfg.grid = grid_from_json(c.at("grid"));
  auto e = std::make_unique<RegDpEngine>(problem_from_json(j.at("problem")), std::move(cfg),
                                         RandomSeed{j.at("master_seed").get<std::uint64_t>()});
  e->resume_budget(j.at("queries_answered"));
  return e;
}

inline std::unique_ptr<RegPathEngine> load_path_engine(const json& j) {
  const json& c = detail::engine_doc(j, "path");
  RegPathConfig cfg;
  cfg.alpha = c.at("alpha");
  cfg.beta = c.at("beta");
  cfg.T = c.at("T");
  cfg.C_p = c.at("C_p");
  cfg.path_budget = c.at("path_budget");
  cfg.grid = grid_from_json(c.at("grid"));
  auto e = std::make_unique<RegPathEngine>(problem_from_json(j.at("problem")), std::move(cfg),
                                           RandomSeed{j.at("master_seed").get<std::uint64_t>()});
  e->resume_budget(j.at("queries_answered"));
  return e;
}

// The preconditioner is recomputed from the snapshot's U, which label updates
// never change, so it matches the saved engine.
inline std::unique_ptr<RegPrecondEngine> load_precond_engine(const json& j) {
  const json& c = detail::engine_doc(j, "precond");
  RegPrecondConfig cfg;
  cfg.alpha = c.at("alpha");
  cfg.beta = c.at("beta");
  cfg.T = c.at("T");
  cfg.batch = c.at("batch");
  cfg.sparsity = c.at("sparsity");
  cfg.eps_dp = c.at("eps_dp");
  cfg.beta_prime = c.at("beta_prime");
  cfg.sample_multiplier = c.at("sample_multiplier");
  cfg.cache_capacity = c.at("cache_capacity");
  cfg.sketch.C_r = c.at("C_r");
  cfg.sketch.C_m = c.at("C_m");
  cfg.C_pre = c.at("C_pre");
  cfg.precond_alpha = c.at("precond_alpha");
  cfg.precond_attempts = c.at("precond_attempts");
  cfg.grid = grid_from_json(c.at("grid"));
  auto e = std::make_unique<RegPrecondEngine>(problem_from_json(j.at("problem")), std::move(cfg),
                                              RandomSeed{j.at("master_seed").get<std::uint64_t>()});
  e->resume_epoch(j.at("epoch"), j.at("counter"));
  e->resume_budget(j.at("queries_answered"));
  return e;
}

}  // namespace advsearch::io
