#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "advsearch/dataset.hpp"
#include "advsearch/errors.hpp"
#include "advsearch/lsh.hpp"
#include "advsearch/mechanisms.hpp"
#include "advsearch/random.hpp"

namespace advsearch {

struct AnnConfig {
  double c = 2.0;
  double r = 1.0;
  std::uint64_t s_bound = 1;
  std::uint64_t T = 1;
  double beta = 0.01;
  double C_l = 4.0;
  std::uint64_t theta = 0;            // 0 selects ceil(sqrt(k * d))
  std::size_t cache_capacity = 64;    // resident copies
  LshConfig lsh;
};

struct AnnAnswer {
  std::optional<PointId> id;
  double distance = 0.0;

  bool is_null() const { return !id.has_value(); }
  friend bool operator==(const AnnAnswer&, const AnnAnswer&) = default;
};

struct AnnStats {
  std::uint64_t queries = 0;
  std::uint64_t copies_consulted = 0;
  std::uint64_t last_copies_consulted = 0;
  std::uint64_t candidates_examined = 0;
  std::uint64_t last_support_size = 0;
  std::uint64_t max_support_size = 0;
  std::uint64_t noise_batches = 0;
  std::uint64_t head_branches = 0;
  std::uint64_t flush_events = 0;
  std::uint64_t materializations = 0;
  std::uint64_t evictions = 0;
  std::uint64_t sync_deletions = 0;
  std::uint64_t post_check_nulls = 0;
};

// DP-selection wrapper over k independently seeded oblivious LSH copies.
//
// Copy i is fully determined by derive_seed(master, i). Only a bounded number
// of copies is resident at a time; an evicted copy keeps its deletion cursor
// and is rebuilt from its seed on the next use, minus the deletions it had
// already applied. When k fits in the cache every copy is built up front.
template <class Lsh>
class AdaptiveAnnIndex {
 public:
  using Dataset = typename Lsh::Dataset;
  using PointView = typename Dataset::PointView;

  static constexpr double kEpsDp = 0.5;

  AdaptiveAnnIndex(std::shared_ptr<const Dataset> data, const AnnConfig& cfg, RandomSeed master)
      : data_(std::move(data)), cfg_(cfg), master_(master) {
    if (!data_ || data_->size() == 0) throw ParameterError("adaptive_ann: empty dataset");
    if (cfg_.cache_capacity == 0) throw ParameterError("adaptive_ann: cache capacity must be positive");
    dp_ = ann_parameters(cfg_.s_bound, data_->size(), cfg_.T, cfg_.beta, kEpsDp, cfg_.C_l);
    if (dp_.l > dp_.k) throw ParameterError("adaptive_ann: l exceeds k");
    if (dp_.k > std::numeric_limits<std::uint32_t>::max())
      throw ParameterError("adaptive_ann: k too large");
    theta_ = cfg_.theta ? cfg_.theta
                        : static_cast<std::uint64_t>(std::ceil(std::sqrt(
                              static_cast<double>(dp_.k) * static_cast<double>(data_->dim()))));
    // Validates (c, r) against the dataset before any copy is built.
    params_ = Lsh::parameters(data_->size(), data_->dim(), cfg_.c, cfg_.r, cfg_.lsh);
    cursor_.assign(dp_.k, 0);
    deleted_.assign(data_->size() + 1, 0);
    if (dp_.k <= cfg_.cache_capacity)
      for (std::uint64_t i = 0; i < dp_.k; ++i) acquire(i);
  }

  const DpParams& dp() const { return dp_; }
  const AnnConfig& config() const { return cfg_; }
  const LshParams& lsh_params() const { return params_; }
  std::uint64_t theta() const { return theta_; }
  RandomSeed master_seed() const { return master_; }
  RandomSeed copy_seed(std::uint64_t i) const { return derive_seed(master_, i); }
  std::uint64_t queries_answered() const { return queries_; }
  const AnnStats& stats() const { return stats_; }
  const Dataset& dataset() const { return *data_; }

  const std::vector<PointId>& deletion_list() const { return deletions_; }
  std::uint64_t cursor(std::uint64_t i) const { return cursor_.at(i); }
  std::size_t pending_deletions() const { return deletions_.size() - flushed_; }
  bool is_deleted(PointId id) const { return id < deleted_.size() && deleted_[id]; }
  bool is_resident(std::uint64_t i) const { return resident_.count(i) != 0; }
  std::size_t resident_count() const { return resident_.size(); }

  // Summed characteristic vectors of the most recent query.
  const std::optional<SparseCounts>& last_counts() const { return last_counts_; }

  AnnAnswer query(PointView v, Rng& rng) {
    if (queries_ >= dp_.T) throw BudgetError("adaptive_ann: query budget T exhausted");
    if (v.size() != data_->point_width()) throw ParameterError("adaptive_ann: query dimension mismatch");

    SparseCounts counts(data_->size());
    LshQueryStats lstats;
    for (std::uint64_t j = 0; j < dp_.l; ++j) {
      const std::uint64_t i = rng.uniform_index(dp_.k);
      Lsh& copy = acquire(i);
      sync(i, copy);
      for (const auto& nb : copy.query_all(v, std::nullopt, &lstats)) counts.add(nb.id);
    }
    SparseArgmaxDiagnostics diag;
    const auto winner = static_cast<PointId>(sparse_noisy_argmax(counts, kEpsDp, rng, &diag));

    AnnAnswer ans;
    if (!is_deleted(winner)) {
      const double dist = data_->distance(v, data_->by_id(winner));
      if (dist <= params_.c * params_.r) ans = {winner, dist};
    }
    if (ans.is_null()) ++stats_.post_check_nulls;

    ++queries_;
    ++stats_.queries;
    stats_.copies_consulted += dp_.l;
    stats_.last_copies_consulted = dp_.l;
    stats_.candidates_examined += lstats.candidates_examined;
    stats_.last_support_size = counts.support_size();
    stats_.max_support_size = std::max<std::uint64_t>(stats_.max_support_size, counts.support_size());
    stats_.noise_batches += diag.batches;
    stats_.head_branches += diag.head_branches;
    last_counts_ = std::move(counts);
    return ans;
  }

  void delete_lazy(PointId id) {
    if (id == 0 || id > data_->size()) throw NotFoundError("adaptive_ann: unknown id");
    if (deleted_[id]) throw NotFoundError("adaptive_ann: id already deleted");
    deleted_[id] = 1;
    deletions_.push_back(id);
    if (pending_deletions() >= theta_) flush_block();
  }

  void flush_block() {
    if (pending_deletions() == 0) return;
    const auto end = static_cast<std::uint32_t>(deletions_.size());
    for (auto& [i, slot] : resident_) {
      const std::uint32_t from = cursor_[i];
      if (from == end) continue;
      std::span<const PointId> ids(deletions_.data() + from, end - from);
      if constexpr (Lsh::HasherType::kProjects) {
        const std::size_t m = slot.index->hasher().projected_dim();
        const std::size_t d = data_->dim();
        std::vector<double> block(ids.size() * d);
        for (std::size_t j = 0; j < ids.size(); ++j) {
          const auto p = data_->by_id(ids[j]);
          std::copy(p.begin(), p.end(), block.begin() + j * d);
        }
        std::vector<double> projected(ids.size() * m);
        slot.index->hasher().project_block(block.data(), ids.size(), projected.data());
        slot.index->remove_projected(ids, projected.data());
      } else {
        for (PointId id : ids) slot.index->remove(id);
      }
    }
    std::fill(cursor_.begin(), cursor_.end(), end);
    flushed_ = end;
    ++stats_.flush_events;
  }

  // Restores a persisted query count; the budget survives save/load.
  void resume_budget(std::uint64_t used) {
    if (used > dp_.T) throw ParameterError("adaptive_ann: saved query count exceeds T");
    queries_ = used;
  }

  // Copy i brought up to date (materialized if needed); for tests and tools.
  const Lsh& copy(std::uint64_t i) {
    Lsh& c = acquire(i);
    sync(i, c);
    return c;
  }

 private:
  struct Resident {
    std::unique_ptr<Lsh> index;
    std::uint64_t last_use;
  };

  Lsh& acquire(std::uint64_t i) {
    if (auto it = resident_.find(i); it != resident_.end()) {
      it->second.last_use = ++clock_;
      return *it->second.index;
    }
    if (resident_.size() >= cfg_.cache_capacity) {
      auto victim = std::min_element(resident_.begin(), resident_.end(), [](const auto& a, const auto& b) {
        return a.second.last_use < b.second.last_use;
      });
      resident_.erase(victim);
      ++stats_.evictions;
    }
    std::vector<char> excluded(data_->size() + 1, 0);
    for (std::uint32_t j = 0; j < cursor_[i]; ++j) excluded[deletions_[j]] = 1;
    auto index = std::make_unique<Lsh>(data_, cfg_.c, cfg_.r, copy_seed(i), cfg_.lsh, &excluded);
    ++stats_.materializations;
    auto& slot = resident_[i];
    slot.index = std::move(index);
    slot.last_use = ++clock_;
    return *slot.index;
  }

  void sync(std::uint64_t i, Lsh& copy) {
    const auto end = static_cast<std::uint32_t>(deletions_.size());
    for (std::uint32_t j = cursor_[i]; j < end; ++j) {
      copy.remove(deletions_[j]);
      ++stats_.sync_deletions;
    }
    cursor_[i] = end;
  }

  std::shared_ptr<const Dataset> data_;
  AnnConfig cfg_;
  RandomSeed master_;
  DpParams dp_;
  LshParams params_;
  std::uint64_t theta_ = 1;
  std::uint64_t queries_ = 0;
  std::vector<PointId> deletions_;
  std::vector<char> deleted_;
  std::vector<std::uint32_t> cursor_;
  std::size_t flushed_ = 0;
  std::unordered_map<std::uint64_t, Resident> resident_;
  std::uint64_t clock_ = 0;
  std::optional<SparseCounts> last_counts_;
  AnnStats stats_;
};

using HammingAnnIndex = AdaptiveAnnIndex<HammingLsh>;
using L2AnnIndex = AdaptiveAnnIndex<L2Lsh>;

struct MatchRecord {
  std::size_t arrival;
  std::optional<PointId> id;
  double distance = 0.0;
};

// Online greedy matching: each arrival takes whatever the index returns, and
// the matched point is deleted before the next arrival.
template <class Index, class Arrivals>
std::vector<MatchRecord> greedy_match(Index& index, const Arrivals& arrivals, Rng& rng) {
  if (arrivals.size() + index.queries_answered() > index.dp().T)
    throw ParameterError("greedy_match: stream longer than the query budget");
  std::vector<MatchRecord> out;
  out.reserve(arrivals.size());
  for (std::size_t a = 0; a < arrivals.size(); ++a) {
    const AnnAnswer ans = index.query(arrivals.point(a), rng);
    out.push_back({a, ans.id, ans.distance});
    if (ans.id) index.delete_lazy(*ans.id);
  }
  return out;
}

// Max over points of the number of other points within 2cr. O(n^2 d).
template <class Dataset>
std::uint64_t verify_sparsity(const Dataset& data, double c, double r) {
  const double radius = 2.0 * c * r;
  std::vector<std::uint64_t> near(data.size(), 0);
  for (std::size_t i = 0; i < data.size(); ++i)
    for (std::size_t j = i + 1; j < data.size(); ++j)
      if (data.distance(data.point(i), data.point(j)) <= radius) {
        ++near[i];
        ++near[j];
      }
  return near.empty() ? 0 : *std::max_element(near.begin(), near.end());
}

}  // namespace advsearch
