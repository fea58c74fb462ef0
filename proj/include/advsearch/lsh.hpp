#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "advsearch/dataset.hpp"
#include "advsearch/errors.hpp"
#include "advsearch/random.hpp"

namespace advsearch {

struct LshConfig {
  double C_L = 3.0;        // tables L = ceil(C_L * n^rho)
  double C_q = 4.0;        // probe budget = ceil(C_q * n^rho) distinct candidates
  double C_w = 4.0;        // l2 bucket width w = C_w * r
  double jl_eps = 0.1;     // l2 projection distortion target
  double jl_delta = 0.01;  // l2 projection failure probability
  double C_jl = 0.25;      // projected dim m = ceil(C_jl * jl_eps^-2 * ln(n / jl_delta))
  std::uint64_t jl_dim = 0;  // nonzero overrides the projected dim
};

struct LshParams {
  double c = 2.0;
  double r = 1.0;
  double p1 = 0.0;
  double p2 = 0.0;
  double rho = 0.0;
  std::uint64_t key_length = 1;    // atomic hashes concatenated per table
  std::uint64_t tables = 1;        // L
  std::uint64_t probe_budget = 1;  // distinct candidates examined per query
  double width = 0.0;              // l2 only
  std::uint64_t projected_dim = 0; // l2 only
};

struct LshQueryStats {
  std::uint64_t buckets_probed = 0;
  std::uint64_t candidates_examined = 0;
};

struct Neighbor {
  PointId id;
  double distance;
  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

namespace detail {

inline void finish_parameters(LshParams& p, std::size_t n, const LshConfig& cfg) {
  const double nn = static_cast<double>(std::max<std::size_t>(n, 1));
  p.rho = std::log(1.0 / p.p1) / std::log(1.0 / p.p2);
  p.key_length = static_cast<std::uint64_t>(
      std::max(1.0, std::ceil(std::log(nn) / std::log(1.0 / p.p2))));
  const double n_rho = std::pow(nn, p.rho);
  p.tables = static_cast<std::uint64_t>(std::max(1.0, std::ceil(cfg.C_L * n_rho)));
  p.probe_budget = static_cast<std::uint64_t>(std::max(1.0, std::ceil(cfg.C_q * n_rho)));
}

}  // namespace detail

// L tables, each a vector of (key, id) sorted by key then id. Removed entries
// become tombstones (id 0) and are compacted once they dominate a table, which
// keeps the relative order of live entries.
class BucketTables {
 public:
  struct Entry {
    std::uint64_t key;
    PointId id;
  };

  BucketTables() = default;
  explicit BucketTables(std::size_t tables) : tables_(tables), dead_(tables, 0) {}

  std::size_t table_count() const { return tables_.size(); }

  void reserve(std::size_t per_table) {
    for (auto& t : tables_) t.reserve(per_table);
  }

  // Bulk load; call seal() before any lookup.
  void append(std::size_t t, std::uint64_t key, PointId id) { tables_[t].push_back({key, id}); }

  // Ids must have been appended in increasing order per table. Keys are
  // uniform hashes, so a stable counting pass on the top bits followed by a
  // stable insertion sort per bin yields (key, id) order in near-linear time.
  void seal() {
    std::vector<Entry> buf;
    std::vector<std::size_t> start;
    for (auto& t : tables_) {
      const std::size_t n = t.size();
      if (n < 2) continue;
      int bits = 4;
      while (bits < 16 && (std::size_t{1} << bits) < n) ++bits;
      const int shift = 64 - bits;
      const std::size_t bins = std::size_t{1} << bits;
      start.assign(bins + 1, 0);
      for (const auto& e : t) ++start[(e.key >> shift) + 1];
      for (std::size_t b = 0; b < bins; ++b) start[b + 1] += start[b];
      buf.resize(n);
      {
        std::vector<std::size_t> fill(start.begin(), start.end() - 1);
        for (const auto& e : t) buf[fill[e.key >> shift]++] = e;
      }
      for (std::size_t b = 0; b < bins; ++b) {
        Entry* lo = buf.data() + start[b];
        Entry* hi = buf.data() + start[b + 1];
        if (hi - lo > 64) {
          std::stable_sort(lo, hi, [](const Entry& a, const Entry& c) { return a.key < c.key; });
          continue;
        }
        for (Entry* it = lo + 1; it < hi; ++it) {
          const Entry e = *it;
          Entry* j = it;
          while (j > lo && (j - 1)->key > e.key) {
            *j = *(j - 1);
            --j;
          }
          *j = e;
        }
      }
      t.swap(buf);
    }
  }

  std::span<const Entry> bucket(std::size_t t, std::uint64_t key) const {
    const auto& tab = tables_[t];
    auto [lo, hi] = range(tab, key);
    return {tab.data() + (lo - tab.begin()), static_cast<std::size_t>(hi - lo)};
  }

  void insert(std::size_t t, std::uint64_t key, PointId id) {
    auto& tab = tables_[t];
    auto [lo, hi] = range(tab, key);
    const auto removed = std::remove_if(lo, hi, [](const Entry& e) { return e.id == 0; });
    dead_[t] -= static_cast<std::size_t>(hi - removed);
    hi = tab.erase(removed, hi);
    lo = range(tab, key).first;
    auto pos = std::find_if(lo, hi, [id](const Entry& e) { return e.id > id; });
    tab.insert(pos, Entry{key, id});
  }

  bool erase(std::size_t t, std::uint64_t key, PointId id) {
    auto& tab = tables_[t];
    auto [lo, hi] = range(tab, key);
    for (auto it = lo; it != hi; ++it) {
      if (it->id == id) {
        it->id = 0;
        if (++dead_[t] * 2 > tab.size()) compact(t);
        return true;
      }
    }
    return false;
  }

  // Live (key, id) pairs of table t in storage order.
  std::vector<Entry> live_entries(std::size_t t) const {
    std::vector<Entry> out;
    for (const auto& e : tables_[t])
      if (e.id != 0) out.push_back(e);
    return out;
  }

 private:
  using Table = std::vector<Entry>;

  static std::pair<Table::const_iterator, Table::const_iterator> range(const Table& tab,
                                                                      std::uint64_t key) {
    auto lo = std::lower_bound(tab.begin(), tab.end(), key,
                               [](const Entry& e, std::uint64_t k) { return e.key < k; });
    auto hi = std::upper_bound(lo, tab.end(), key,
                               [](std::uint64_t k, const Entry& e) { return k < e.key; });
    return {lo, hi};
  }

  static std::pair<Table::iterator, Table::iterator> range(Table& tab, std::uint64_t key) {
    auto lo = std::lower_bound(tab.begin(), tab.end(), key,
                               [](const Entry& e, std::uint64_t k) { return e.key < k; });
    auto hi = std::upper_bound(lo, tab.end(), key,
                               [](std::uint64_t k, const Entry& e) { return k < e.key; });
    return {lo, hi};
  }

  void compact(std::size_t t) {
    auto& tab = tables_[t];
    tab.erase(std::remove_if(tab.begin(), tab.end(), [](const Entry& e) { return e.id == 0; }),
              tab.end());
    dead_[t] = 0;
  }

  std::vector<Table> tables_;
  std::vector<std::size_t> dead_;
};

// Bit-sampling family for Hamming space. A table's key is a hash of the
// point's words masked to the table's sampled coordinates, so two points share
// a key iff they agree on every sampled coordinate.
class BitSamplingHasher {
 public:
  using Dataset = HammingDataset;
  static constexpr bool kProjects = false;

  static LshParams parameters(std::size_t n, std::size_t d, double c, double r,
                              const LshConfig& cfg) {
    if (!(c > 1)) throw ParameterError("lsh: c must exceed 1");
    if (!(r >= 1) || r != std::floor(r)) throw ParameterError("lsh: r must be a positive integer");
    if (c * r > static_cast<double>(d)) throw ParameterError("lsh: requires c*r <= d");
    LshParams p;
    p.c = c;
    p.r = r;
    p.p1 = 1.0 - r / static_cast<double>(d);
    p.p2 = 1.0 - c * r / static_cast<double>(d);
    if (!(p.p2 > 0)) throw ParameterError("lsh: c*r must be below d");
    detail::finish_parameters(p, n, cfg);
    return p;
  }

  BitSamplingHasher(const LshParams& p, std::size_t d, Rng& rng)
      : d_(d), words_(words_for_bits(d)), tables_(p.tables), masks_(p.tables * words_, 0) {
    for (std::size_t t = 0; t < tables_; ++t)
      for (std::uint64_t j = 0; j < p.key_length; ++j) {
        const std::uint64_t coord = rng.uniform_index(d_);
        masks_[t * words_ + coord / 64] |= std::uint64_t{1} << (coord % 64);
      }
  }

  std::size_t tables() const { return tables_; }

  // Sampled coordinates of table t as a bit mask.
  std::span<const std::uint64_t> mask(std::size_t t) const {
    return {masks_.data() + t * words_, words_};
  }

  void keys(std::span<const std::uint64_t> p, std::uint64_t* out) const {
    for (std::size_t t = 0; t < tables_; ++t) {
      const std::uint64_t* m = masks_.data() + t * words_;
      std::uint64_t h = t;
      for (std::size_t w = 0; w < words_; ++w) h = (h ^ (p[w] & m[w])) * 0x9fb21c651e98df25ULL;
      out[t] = mix64(h);
    }
  }

 private:
  std::size_t d_, words_, tables_;
  std::vector<std::uint64_t> masks_;
};

// Collision probability of floor((<a,x>+b)/w) for two points at l2 distance t.
inline double pstable_collision_probability(double t, double w) {
  if (t <= 0) return 1.0;
  const double s = w / t;
  const double normal_cdf_neg = 0.5 * std::erfc(s / std::sqrt(2.0));
  return 1.0 - 2.0 * normal_cdf_neg -
         2.0 / (std::sqrt(2.0 * std::numbers::pi) * s) * (1.0 - std::exp(-s * s / 2.0));
}

// Gaussian projection to m dims followed by p-stable bucket hashes. Both
// stages accumulate over the input dimension in ascending order, so
// projecting a block of points yields the same bits as projecting each alone.
class PStableHasher {
 public:
  using Dataset = EuclideanDataset;
  static constexpr bool kProjects = true;

  static LshParams parameters(std::size_t n, std::size_t d, double c, double r,
                              const LshConfig& cfg) {
    if (!(c > 1)) throw ParameterError("lsh: c must exceed 1");
    if (!(r > 0)) throw ParameterError("lsh: r must be positive");
    if (d == 0) throw ParameterError("lsh: zero dimension");
    LshParams p;
    p.c = c;
    p.r = r;
    p.width = cfg.C_w * r;
    p.p1 = pstable_collision_probability(r, p.width);
    p.p2 = pstable_collision_probability(c * r, p.width);
    detail::finish_parameters(p, n, cfg);
    const double nn = static_cast<double>(std::max<std::size_t>(n, 2));
    p.projected_dim =
        cfg.jl_dim ? cfg.jl_dim
                   : static_cast<std::uint64_t>(std::ceil(
                         cfg.C_jl / (cfg.jl_eps * cfg.jl_eps) * std::log(nn / cfg.jl_delta)));
    return p;
  }

  PStableHasher(const LshParams& p, std::size_t d, Rng& rng)
      : d_(d),
        m_(p.projected_dim),
        tables_(p.tables),
        key_length_(p.key_length),
        atoms_(p.tables * p.key_length),
        width_(p.width),
        proj_t_(d * m_),
        dirs_t_(m_ * atoms_),
        offsets_(atoms_) {
    const double sd = 1.0 / std::sqrt(static_cast<double>(m_));
    for (double& v : proj_t_) v = sd * rng.normal();
    for (double& v : dirs_t_) v = rng.normal();
    for (double& v : offsets_) v = width_ * rng.uniform();
  }

  std::size_t tables() const { return tables_; }
  std::size_t projected_dim() const { return m_; }

  void project(std::span<const double> x, double* out) const {
    std::fill(out, out + m_, 0.0);
    for (std::size_t k = 0; k < d_; ++k) {
      const double xk = x[k];
      const double* row = proj_t_.data() + k * m_;
      for (std::size_t i = 0; i < m_; ++i) out[i] += xk * row[i];
    }
  }

  // Projects `count` row-major points as one blocked matrix product.
  void project_block(const double* points, std::size_t count, double* out) const {
    constexpr std::size_t kBlock = 8;
    std::fill(out, out + count * m_, 0.0);
    for (std::size_t b0 = 0; b0 < count; b0 += kBlock) {
      const std::size_t b1 = std::min(count, b0 + kBlock);
      for (std::size_t k = 0; k < d_; ++k) {
        const double* row = proj_t_.data() + k * m_;
        for (std::size_t p = b0; p < b1; ++p) {
          const double xk = points[p * d_ + k];
          double* o = out + p * m_;
          for (std::size_t i = 0; i < m_; ++i) o[i] += xk * row[i];
        }
      }
    }
  }

  void keys_projected(const double* y, std::uint64_t* out) const { keys_projected_block(y, 1, out); }

  // Keys for `count` projected rows; out receives count x tables keys. Each
  // atom sums over the projected coordinates in ascending order, as in the
  // single-row case, so blocking does not change any bucket.
  void keys_projected_block(const double* y, std::size_t count, std::uint64_t* out) const {
    constexpr std::size_t kBlock = 4;
    Eigen::ArrayXXd acc(static_cast<Eigen::Index>(atoms_), static_cast<Eigen::Index>(kBlock));
    Eigen::ArrayXd bucket(static_cast<Eigen::Index>(atoms_));
    for (std::size_t b0 = 0; b0 < count; b0 += kBlock) {
      const std::size_t nb = std::min(kBlock, count - b0);
      const double* yb[kBlock];
      for (std::size_t p = 0; p < kBlock; ++p) yb[p] = y + (b0 + std::min(p, nb - 1)) * m_;
      // 4 atoms x 4 points of accumulators stay in registers across the m_ loop.
      std::size_t j = 0;
      for (; j + 4 <= atoms_; j += 4) {
        Eigen::Array4d a0 = Eigen::Array4d::Zero(), a1 = a0, a2 = a0, a3 = a0;
        for (std::size_t i = 0; i < m_; ++i) {
          const Eigen::Array4d row = Eigen::Map<const Eigen::Array4d>(dirs_t_.data() + i * atoms_ + j);
          a0 += yb[0][i] * row;
          a1 += yb[1][i] * row;
          a2 += yb[2][i] * row;
          a3 += yb[3][i] * row;
        }
        const auto jj = static_cast<Eigen::Index>(j);
        acc.block<4, 1>(jj, 0) = a0;
        acc.block<4, 1>(jj, 1) = a1;
        acc.block<4, 1>(jj, 2) = a2;
        acc.block<4, 1>(jj, 3) = a3;
      }
      for (; j < atoms_; ++j)
        for (std::size_t p = 0; p < kBlock; ++p) {
          double a = 0;
          for (std::size_t i = 0; i < m_; ++i) a += yb[p][i] * dirs_t_[i * atoms_ + j];
          acc(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(p)) = a;
        }
      const Eigen::Map<const Eigen::ArrayXd> offsets(offsets_.data(), static_cast<Eigen::Index>(atoms_));
      for (std::size_t p = 0; p < nb; ++p) {
        bucket = ((acc.col(static_cast<Eigen::Index>(p)) + offsets) / width_).floor();
        // Tables advance in lockstep so their hash chains overlap.
        std::uint64_t* o = out + (b0 + p) * tables_;
        for (std::size_t t = 0; t < tables_; ++t) o[t] = mix64(t);
        for (std::size_t k = 0; k < key_length_; ++k)
          for (std::size_t t = 0; t < tables_; ++t)
            o[t] = mix64(o[t] ^ static_cast<std::uint64_t>(static_cast<std::int64_t>(
                                    bucket[static_cast<Eigen::Index>(t * key_length_ + k)])));
      }
    }
  }

  void keys(std::span<const double> x, std::uint64_t* out) const {
    std::vector<double> y(m_);
    project(x, y.data());
    keys_projected(y.data(), out);
  }

 private:
  std::size_t d_, m_, tables_, key_length_, atoms_;
  double width_;
  std::vector<double> proj_t_;  // d x m, row-major
  std::vector<double> dirs_t_;  // m x atoms, row-major
  std::vector<double> offsets_;
};

// Oblivious multi-answer (c,r)-LSH index over a shared base dataset, with
// point insertion and deletion. Ids are 1-based.
template <class Hasher>
class LshIndex {
 public:
  using Dataset = typename Hasher::Dataset;
  using PointView = typename Dataset::PointView;
  using Point = typename Dataset::Point;
  using HasherType = Hasher;

  static LshParams parameters(std::size_t n, std::size_t d, double c, double r,
                              const LshConfig& cfg = {}) {
    return Hasher::parameters(n, d, c, r, cfg);
  }

  // Builds over every base point whose id is not flagged in `excluded`
  // (indexed by id; may be shorter than the dataset).
  LshIndex(std::shared_ptr<const Dataset> data, double c, double r, RandomSeed seed,
           const LshConfig& cfg = {}, const std::vector<char>* excluded = nullptr)
      : data_(std::move(data)),
        params_(parameters(data_->size(), data_->dim(), c, r, cfg)),
        seed_(seed),
        hasher_(make_hasher(params_, data_->dim(), seed)),
        tables_(params_.tables),
        live_(data_->size() + 1, 0) {
    const std::size_t n = data_->size();
    const std::size_t L = params_.tables;
    tables_.reserve(n);
    const auto skip = [&](PointId id) { return excluded && id < excluded->size() && (*excluded)[id]; };
    std::vector<std::uint64_t> all_keys;
    if constexpr (Hasher::kProjects) {
      const std::size_t m = hasher_.projected_dim();
      base_projection_.assign(n * m, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        if (!skip(static_cast<PointId>(i + 1))) hasher_.project(data_->point(i), base_projection_.data() + i * m);
      all_keys.resize(n * L);
      hasher_.keys_projected_block(base_projection_.data(), n, all_keys.data());
    }
    std::vector<std::uint64_t> own(L);
    for (std::size_t i = 0; i < n; ++i) {
      const auto id = static_cast<PointId>(i + 1);
      if (skip(id)) continue;
      const std::uint64_t* keys = own.data();
      if constexpr (Hasher::kProjects) keys = all_keys.data() + i * L;
      else hasher_.keys(data_->point(i), own.data());
      for (std::size_t t = 0; t < L; ++t) tables_.append(t, keys[t], id);
      live_[id] = 1;
      ++size_;
    }
    tables_.seal();
  }

  const LshParams& params() const { return params_; }
  RandomSeed seed() const { return seed_; }
  const Hasher& hasher() const { return hasher_; }
  const Dataset& dataset() const { return *data_; }
  std::size_t size() const { return size_; }
  std::size_t dim() const { return data_->dim(); }

  bool contains(PointId id) const { return id < live_.size() && live_[id]; }

  PointView point(PointId id) const {
    if (auto it = extra_.find(id); it != extra_.end()) return PointView(it->second);
    if (id == 0 || id > data_->size()) throw NotFoundError("lsh: unknown id");
    return data_->by_id(id);
  }

  // Every examined candidate within c*r of q, in probe order.
  std::vector<Neighbor> query_all(PointView q, std::optional<std::uint64_t> budget = {},
                                  LshQueryStats* stats = nullptr) const {
    if (q.size() != data_->point_width()) throw ParameterError("lsh: query dimension mismatch");
    std::vector<Neighbor> out;
    if (size_ == 0) return out;
    const std::uint64_t cap = budget.value_or(params_.probe_budget);
    const double radius = params_.c * params_.r;
    std::vector<std::uint64_t> keys(params_.tables);
    hasher_.keys(q, keys.data());
    std::unordered_set<PointId> seen;
    std::uint64_t examined = 0;
    std::uint64_t probed = 0;
    for (std::size_t t = 0; t < params_.tables && examined < cap; ++t) {
      ++probed;
      for (const auto& e : tables_.bucket(t, keys[t])) {
        if (e.id == 0 || !seen.insert(e.id).second) continue;
        if (examined == cap) break;
        ++examined;
        const double dist = data_->distance(q, point(e.id));
        if (dist <= radius) out.push_back({e.id, dist});
      }
    }
    if (stats) {
      stats->buckets_probed += probed;
      stats->candidates_examined += examined;
    }
    return out;
  }

  void insert(PointView p, PointId id) {
    if (id == 0) throw ParameterError("lsh: id 0 is reserved");
    if (p.size() != data_->point_width()) throw ParameterError("lsh: point dimension mismatch");
    if (contains(id)) throw ParameterError("lsh: id already present");
    const bool is_base = id <= data_->size() && std::equal(p.begin(), p.end(), data_->by_id(id).begin());
    if (is_base) extra_.erase(id);
    else extra_[id] = Point(p.begin(), p.end());
    std::vector<std::uint64_t> keys(params_.tables);
    if constexpr (Hasher::kProjects) {
      std::vector<double> y(hasher_.projected_dim());
      hasher_.project(p, y.data());
      hasher_.keys_projected(y.data(), keys.data());
      if (is_base) std::copy(y.begin(), y.end(), base_projection_.begin() + (id - 1) * y.size());
      else extra_projection_[id] = std::move(y);
    } else {
      hasher_.keys(p, keys.data());
    }
    for (std::size_t t = 0; t < params_.tables; ++t) tables_.insert(t, keys[t], id);
    if (id >= live_.size()) live_.resize(id + 1, 0);
    live_[id] = 1;
    ++size_;
  }

  void remove(PointId id) {
    if (!contains(id)) throw NotFoundError("lsh: id not present");
    std::vector<std::uint64_t> keys(params_.tables);
    if constexpr (Hasher::kProjects) hasher_.keys_projected(stored_projection(id), keys.data());
    else hasher_.keys(point(id), keys.data());
    erase_keys(id, keys);
  }

  // Removes ids whose projections were computed by the caller (one row of
  // `projected` per id); equivalent to remove() for each id.
  void remove_projected(std::span<const PointId> ids, const double* projected) {
    static_assert(Hasher::kProjects);
    const std::size_t m = hasher_.projected_dim();
    std::vector<std::uint64_t> keys(params_.tables);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!contains(ids[i])) throw NotFoundError("lsh: id not present");
      hasher_.keys_projected(projected + i * m, keys.data());
      erase_keys(ids[i], keys);
    }
  }

  const double* stored_projection(PointId id) const {
    static_assert(Hasher::kProjects);
    if (auto it = extra_projection_.find(id); it != extra_projection_.end()) return it->second.data();
    return base_projection_.data() + (id - 1) * hasher_.projected_dim();
  }

  // Exhaustive scan: does id appear in any bucket?
  bool in_any_bucket(PointId id) const {
    for (std::size_t t = 0; t < params_.tables; ++t)
      for (const auto& e : tables_.live_entries(t))
        if (e.id == id) return true;
    return false;
  }

  std::vector<std::vector<std::pair<std::uint64_t, PointId>>> snapshot() const {
    std::vector<std::vector<std::pair<std::uint64_t, PointId>>> out(params_.tables);
    for (std::size_t t = 0; t < params_.tables; ++t)
      for (const auto& e : tables_.live_entries(t)) out[t].emplace_back(e.key, e.id);
    return out;
  }

 private:
  static Hasher make_hasher(const LshParams& p, std::size_t d, RandomSeed seed) {
    Rng rng(seed);
    return Hasher(p, d, rng);
  }

  void erase_keys(PointId id, const std::vector<std::uint64_t>& keys) {
    for (std::size_t t = 0; t < params_.tables; ++t)
      if (!tables_.erase(t, keys[t], id)) throw NotFoundError("lsh: bucket entry missing");
    live_[id] = 0;
    --size_;
    extra_projection_.erase(id);
  }

  std::shared_ptr<const Dataset> data_;
  LshParams params_;
  RandomSeed seed_;
  Hasher hasher_;
  BucketTables tables_;
  std::vector<char> live_;
  std::size_t size_ = 0;
  std::unordered_map<PointId, Point> extra_;
  std::vector<double> base_projection_;
  std::unordered_map<PointId, std::vector<double>> extra_projection_;
};

using HammingLsh = LshIndex<BitSamplingHasher>;
using L2Lsh = LshIndex<PStableHasher>;

}  // namespace advsearch
