#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <unordered_map>

#include <json.hpp>

#include "qcert/constraint_space.hpp"
#include "qcert/hamiltonian.hpp"
#include "qcert/relaxation.hpp"

namespace qcert {

inline constexpr double kTieTolerance = 1e-7;

/// Running references for the reward: best/worst bound and the cheapest and
/// costliest parameter counts at which the best bound was seen.
struct RewardLedger {
  double beta_max = -std::numeric_limits<double>::infinity();
  double beta_min = std::numeric_limits<double>::infinity();
  long p_best = 0;
  long p_worst = 0;
  double d = 2.0;
  double tie_tol = kTieTolerance;

  bool empty() const { return !(beta_max >= beta_min); }

  // Strict improvements reset the cost window; ties widen it.
  void update(double beta, long p) {
    if (!std::isfinite(beta)) return;
    if (empty()) {
      beta_max = beta_min = beta;
      p_best = p_worst = p;
      return;
    }
    if (beta > beta_max + tie_tol) {
      beta_max = beta;
      p_best = p_worst = p;
    } else if (beta >= beta_max - tie_tol) {
      beta_max = std::max(beta_max, beta);
      p_best = std::min(p_best, p);
      p_worst = std::max(p_worst, p);
    }
    beta_min = std::min(beta_min, beta);
  }

  nlohmann::json to_json() const {
    return {{"beta_max", beta_max}, {"beta_min", beta_min}, {"p_best", p_best}, {"p_worst", p_worst}, {"d", d}};
  }
};

/// Reward in [0,1] of a bound beta at cost p against the ledger.
inline double reward(double beta, long p, const RewardLedger& L) {
  if (!std::isfinite(beta) || L.empty() || p <= 0) return 0.0;
  const double prefactor = static_cast<double>(L.p_best) / static_cast<double>(L.p_worst);
  double r;
  if (L.beta_max - L.beta_min <= L.tie_tol || beta >= L.beta_max - L.tie_tol) {
    r = prefactor * static_cast<double>(L.p_worst) / static_cast<double>(p);
  } else {
    const double x = std::clamp((beta - L.beta_min) / (L.beta_max - L.beta_min), 0.0, 1.0);
    r = prefactor * std::pow(x, L.d);
  }
  return std::clamp(r, 0.0, 1.0);
}

/// What the environment remembers about a solved state.
struct CachedBound {
  double beta = -std::numeric_limits<double>::infinity();
  long p = 0;
  SolveStatus status = SolveStatus::Failed;
  bool ok() const { return status != SolveStatus::Failed && std::isfinite(beta); }
};

/// Memo of bounds for one (Hamiltonian, relaxation options) pair, keyed by the
/// canonical text of the constraint set. Safe to share between threads.
class BoundCache {
 public:
  BoundCache(LocalHamiltonian h, RelaxationOptions opts) : h_(std::move(h)), opts_(opts) {}

  std::optional<CachedBound> find(const std::string& key) const {
    std::shared_lock lock(mu_);
    auto it = map_.find(key);
    if (it == map_.end()) return std::nullopt;
    return it->second;
  }

  /// Returns the bound and whether it came from the cache.
  std::pair<CachedBound, bool> get_or_compute(const ConstraintSet& c) {
    const std::string key = c.to_string();
    if (auto hit = find(key)) {
      hits_.fetch_add(1);
      return {*hit, true};
    }
    CachedBound v = compute(c);
    misses_.fetch_add(1);
    std::unique_lock lock(mu_);
    auto [it, inserted] = map_.emplace(key, v);
    return {it->second, false};
  }

  CachedBound compute(const ConstraintSet& c) const {
    const BoundResult r = solve_bound(h_, c, opts_);
    CachedBound v;
    v.p = r.p;
    v.status = r.status;
    v.beta = r.status == SolveStatus::Failed ? -std::numeric_limits<double>::infinity() : r.beta;
    return v;
  }

  std::size_t size() const {
    std::shared_lock lock(mu_);
    return map_.size();
  }
  std::size_t hits() const { return hits_.load(); }
  std::size_t misses() const { return misses_.load(); }
  const LocalHamiltonian& hamiltonian() const { return h_; }
  const RelaxationOptions& options() const { return opts_; }

 private:
  LocalHamiltonian h_;
  RelaxationOptions opts_;
  mutable std::shared_mutex mu_;
  std::unordered_map<std::string, CachedBound> map_;
  std::atomic<std::size_t> hits_{0}, misses_{0};
};

struct EpisodeConfig {
  int length = 5;
  double d = 2.0;
  bool use_cache = true;

  void validate() const {
    if (length < 1) throw ValidationError("episode length must be >= 1");
    if (!(d > 0.0)) throw ValidationError("reward exponent d must be positive");
  }
};

/// Episode length rule: 0.7 n for the half budget, 1.2 n for the full budget.
inline int episode_length_for(BudgetPreset preset, int n) {
  const double f = preset == BudgetPreset::HalfThreeBody ? 0.7 : 1.2;
  return std::max(1, static_cast<int>(std::lround(f * n)));
}

struct StepRecord {
  BitState before, after;
  ActionSpec action;
  std::size_t action_index = 0;
  double beta = -std::numeric_limits<double>::infinity();
  long p = 0;
  double reward = 0.0;
  double reference_reward = std::numeric_limits<double>::quiet_NaN();
  bool cache_hit = false;
  bool first_visit = false;

  nlohmann::json to_json() const {
    nlohmann::json j{{"before", bits_to_string(before)},
                     {"after", bits_to_string(after)},
                     {"action", to_string(action)},
                     {"action_index", action_index},
                     {"beta", std::isfinite(beta) ? nlohmann::json(beta) : nlohmann::json(nullptr)},
                     {"p", p},
                     {"reward", reward},
                     {"cache_hit", cache_hit},
                     {"first_visit", first_visit}};
    if (!std::isnan(reference_reward)) j["reference_reward"] = reference_reward;
    return j;
  }
};

/// One bound evaluation, in the order the agent requested it.
struct VisitRecord {
  std::string key;
  double beta = -std::numeric_limits<double>::infinity();
  long p = 0;
  double reference_reward = std::numeric_limits<double>::quiet_NaN();
  bool first_visit = false;
};

/// The search MDP over constraint sets. One instance per agent trajectory.
class Environment {
 public:
  Environment(CandidatePool pool, std::shared_ptr<BoundCache> cache, EpisodeConfig cfg)
      : pool_(std::move(pool)), cache_(std::move(cache)), cfg_(cfg), state_(pool_.n) {
    cfg_.validate();
    if (!cache_) throw ValidationError("environment needs a bound cache");
    if (cache_->hamiltonian().n != pool_.n) throw ValidationError("pool and Hamiltonian sizes differ");
    ledger_.d = cfg_.d;
  }

  const CandidatePool& pool() const { return pool_; }
  const EpisodeConfig& config() const { return cfg_; }
  const ConstraintSet& state() const { return state_; }
  BitState bits() const { return encode(state_, pool_); }
  const RewardLedger& ledger() const { return ledger_; }
  RewardLedger& ledger() { return ledger_; }
  std::size_t num_actions() const { return pool_.size() + 1; }
  std::size_t unique_states() const { return visited_.size(); }
  const std::shared_ptr<BoundCache>& cache() const { return cache_; }

  /// Scoring against a fixed full-knowledge ledger, reported alongside the
  /// running reward.
  void set_reference(std::optional<RewardLedger> ref) { reference_ = std::move(ref); }
  const std::optional<RewardLedger>& reference() const { return reference_; }

  std::vector<std::uint8_t> mask() const { return valid_action_mask(state_, pool_); }

  /// Bound for an arbitrary state; updates the ledger and the visit set.
  std::pair<CachedBound, bool> evaluate(const ConstraintSet& c) {
    std::pair<CachedBound, bool> out;
    if (cfg_.use_cache) {
      out = cache_->get_or_compute(c);
    } else {
      out = {cache_->compute(c), false};
    }
    std::string key = c.to_string();
    last_first_visit_ = visited_.insert(key).second;
    if (out.first.ok()) ledger_.update(out.first.beta, out.first.p);
    if (log_visits_) visits_.push_back({std::move(key), out.first.beta, out.first.p, reference_score(out.first), last_first_visit_});
    return out;
  }

  double score(const CachedBound& b) const { return b.ok() ? reward(b.beta, b.p, ledger_) : 0.0; }
  double reference_score(const CachedBound& b) const {
    return reference_ && b.ok() ? reward(b.beta, b.p, *reference_) : std::numeric_limits<double>::quiet_NaN();
  }

  /// Back to the minimal set. The ledger and visit set persist.
  const ConstraintSet& reset() {
    state_ = ConstraintSet(pool_.n);
    current_ = evaluate(state_).first;
    return state_;
  }

  StepRecord step(const ActionSpec& a) {
    StepRecord rec;
    rec.before = encode(state_, pool_);
    rec.action = a;
    rec.action_index = action_index(a, pool_);
    state_ = apply_action(state_, a, pool_);
    const auto [b, hit] = evaluate(state_);
    current_ = b;
    rec.after = encode(state_, pool_);
    rec.beta = b.beta;
    rec.p = b.p;
    rec.cache_hit = hit;
    rec.first_visit = last_first_visit_;
    rec.reward = score(b);
    rec.reference_reward = reference_score(b);
    return rec;
  }

  StepRecord step_index(std::size_t index) { return step(action_from_index(state_, index, pool_)); }

  const CachedBound& current() const { return current_; }
  const std::vector<VisitRecord>& visits() const { return visits_; }
  void set_visit_logging(bool on) { log_visits_ = on; }

 private:
  CandidatePool pool_;
  std::shared_ptr<BoundCache> cache_;
  EpisodeConfig cfg_;
  ConstraintSet state_;
  CachedBound current_;
  RewardLedger ledger_;
  std::optional<RewardLedger> reference_;
  std::set<std::string> visited_;
  bool last_first_visit_ = false;
  bool log_visits_ = true;
  std::vector<VisitRecord> visits_;
};

/// Distinct states evaluated up to and including the first one whose
/// reference reward reaches `threshold`. Revisits do not count.
inline std::optional<std::size_t> first_visits_to_threshold(const std::vector<VisitRecord>& log, double threshold) {
  std::set<std::string> seen;
  for (const auto& v : log) {
    seen.insert(v.key);
    if (!std::isnan(v.reference_reward) && v.reference_reward >= threshold) return seen.size();
  }
  return std::nullopt;
}

}  // namespace qcert
