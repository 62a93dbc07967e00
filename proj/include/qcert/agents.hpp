#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "qcert/constraint_space.hpp"
#include "qcert/environment.hpp"
#include "qcert/qnetwork.hpp"

namespace qcert {

/// Training diverged (non-finite loss or weights).
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExplorationSchedule {
  double eps0 = 0.9;
  double floor = 0.1;
  double delta = 0.5;

  double epsilon(int episode) const { return std::max(floor, std::pow(delta, episode) * eps0); }

  void validate() const {
    if (!(delta > 0.0 && delta < 1.0)) throw ValidationError("exploration decay must lie in (0,1)");
    if (!(floor >= 0.0 && floor <= eps0 && eps0 <= 1.0)) throw ValidationError("need 0 <= floor <= eps0 <= 1");
  }
};

/// Faster decay for small systems.
inline double exploration_decay_for(int n) { return n <= 7 ? 0.5 : 0.95; }

/// Fixed-capacity ring of experiences with uniform sampling without replacement.
template <class T>
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ValidationError("replay capacity must be positive");
  }

  void push(T item) {
    if (data_.size() < capacity_) {
      data_.push_back(std::move(item));
    } else {
      data_[next_] = std::move(item);
    }
    next_ = (next_ + 1) % capacity_;
  }

  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }

  std::vector<const T*> sample(std::size_t k, std::mt19937_64& rng) const {
    if (k > data_.size()) throw ValidationError("sample larger than the buffer fill");
    std::vector<std::size_t> idx(data_.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (std::size_t i = 0; i < k; ++i) {
      std::uniform_int_distribution<std::size_t> u(i, idx.size() - 1);
      std::swap(idx[i], idx[u(rng)]);
    }
    std::vector<const T*> out;
    for (std::size_t i = 0; i < k; ++i) out.push_back(&data_[idx[i]]);
    return out;
  }

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<T> data_;
};

/// Rewards are not stored: they are rescored from (beta, p) against the
/// ledger current at replay time.
struct Transition {
  BitState state;
  int action = 0;
  double beta = -std::numeric_limits<double>::infinity();
  long p = 0;
  BitState next_state;
  std::vector<std::uint8_t> next_mask;
};

inline Vector bits_to_vector(const BitState& b) {
  Vector v(static_cast<Eigen::Index>(b.size()));
  for (std::size_t i = 0; i < b.size(); ++i) v[static_cast<Eigen::Index>(i)] = b[i];
  return v;
}

inline int masked_argmax(const Vector& q, const std::vector<std::uint8_t>& mask) {
  int best = -1;
  for (int i = 0; i < static_cast<int>(q.size()); ++i)
    if (mask[i] && (best < 0 || q[i] > q[best])) best = i;
  return best;
}

/// Greedy masked argmax with probability 1-eps, otherwise uniform over valid actions.
inline int select_action(const QNetwork& net, const BitState& state, const std::vector<std::uint8_t>& mask, double eps, std::mt19937_64& rng) {
  std::vector<int> valid;
  for (int i = 0; i < static_cast<int>(mask.size()); ++i)
    if (mask[i]) valid.push_back(i);
  if (valid.empty()) throw ValidationError("no valid action");
  if (valid.size() == 1) return valid.front();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (u(rng) < eps) {
    std::uniform_int_distribution<std::size_t> pick(0, valid.size() - 1);
    return valid[pick(rng)];
  }
  return masked_argmax(net.forward(bits_to_vector(state)), mask);
}

/// r + γ Q_target(s', argmax_a' Q_online(s', a')).
inline Vector double_dqn_targets(const QNetwork& online, const QNetwork& target, const std::vector<const Transition*>& batch,
                                 const RewardLedger& ledger, double discount) {
  const Eigen::Index B = static_cast<Eigen::Index>(batch.size());
  Matrix next(online.input_size(), B);
  for (Eigen::Index j = 0; j < B; ++j) next.col(j) = bits_to_vector(batch[j]->next_state);
  const Matrix q_online = online.forward(next);
  const Matrix q_target = target.forward(next);
  Vector t(B);
  for (Eigen::Index j = 0; j < B; ++j) {
    const double r = reward(batch[j]->beta, batch[j]->p, ledger);
    double boot = 0.0;
    if (discount != 0.0) {
      const int a = masked_argmax(q_online.col(j), batch[j]->next_mask);
      if (a >= 0) boot = q_target(a, j);
    }
    t[j] = r + discount * boot;
  }
  return t;
}

/// One Adam step on the squared TD error of the batch. Returns the loss.
inline double dqn_train_step(QNetwork& online, const QNetwork& target, Adam& opt, const std::vector<const Transition*>& batch,
                             const RewardLedger& ledger, double discount) {
  if (batch.empty()) throw ValidationError("empty training batch");
  const Vector t = double_dqn_targets(online, target, batch, ledger, discount);
  Matrix in(online.input_size(), static_cast<Eigen::Index>(batch.size()));
  std::vector<int> actions;
  for (std::size_t j = 0; j < batch.size(); ++j) {
    in.col(static_cast<Eigen::Index>(j)) = bits_to_vector(batch[j]->state);
    actions.push_back(batch[j]->action);
  }
  Vector grad;
  const double loss = online.loss_and_gradient(in, actions, t, &grad);
  if (!std::isfinite(loss) || !grad.allFinite())
    throw TrainingError("non-finite loss " + std::to_string(loss) + " on a batch of " + std::to_string(batch.size()) + " transitions");
  Vector params = online.parameters();
  opt.step(params, grad);
  online.set_parameters(params);
  return loss;
}

struct DqnConfig {
  double lr = 5e-3;
  double discount = 0.9;
  int batch_episodes = 20;   // replay batch, in episodes of transitions
  int target_update = 5;     // episodes between target-network syncs
  int episodes = 300;
  std::size_t replay_capacity = 20000;
  ExplorationSchedule exploration;
  std::uint64_t seed = 0;
  double convergence_threshold = 0.95;
  bool stop_on_convergence = false;
  // stop as soon as any visited state reaches the reference threshold
  bool stop_on_reference_visit = false;
  // greedy evaluation episode after each training episode
  bool evaluate = true;
  // the replayed batch is consumed in one epoch of minibatches of this size
  int minibatch = 32;

  void validate() const {
    exploration.validate();
    if (!(lr > 0.0)) throw ValidationError("learning rate must be positive");
    if (!(discount >= 0.0 && discount < 1.0)) throw ValidationError("discount must lie in [0,1)");
    if (minibatch < 1) throw ValidationError("minibatch must be >= 1");
    if (batch_episodes < 1 || target_update < 1 || episodes < 1) throw ValidationError("batch, target update and episodes must be >= 1");
  }
};

struct TrainLog {
  std::vector<double> eval_reward;            // greedy final-state reward, running ledger
  std::vector<double> eval_reference_reward;  // same state under the reference ledger
  std::vector<double> eval_beta;
  std::vector<std::string> eval_state;
  std::vector<double> loss;
  int converged_episode = -1;  // 1-based; -1 if never
  int episodes_run = 0;
  std::vector<StepRecord> steps;
};

class DqnAgent {
 public:
  DqnAgent(int state_size, DqnConfig cfg) : cfg_(cfg), rng_(cfg.seed) {
    cfg_.validate();
    online_ = QNetwork(QNetwork::standard_dims(state_size));
    online_.init_uniform(rng_);
    target_ = online_;
    opt_ = Adam(online_.num_parameters(), cfg_.lr);
  }

  const QNetwork& online() const { return online_; }
  const QNetwork& target() const { return target_; }
  QNetwork& online() { return online_; }
  QNetwork& target() { return target_; }
  const DqnConfig& config() const { return cfg_; }
  int state_size() const { return online_.input_size(); }

  int act(const Environment& env, double eps) { return select_action(online_, env.bits(), env.mask(), eps, rng_); }

  /// Runs `episodes` training episodes, each followed by a greedy evaluation.
  TrainLog train(Environment& env, bool record_steps = false) {
    if (static_cast<int>(env.pool().size()) != state_size()) throw ValidationError("agent and environment state sizes differ");
    const int L = env.config().length;
    const std::size_t batch = static_cast<std::size_t>(cfg_.batch_episodes) * L;
    const std::size_t learn_start = batch / 4;
    ReplayBuffer<Transition> memory(std::max(cfg_.replay_capacity, batch));
    TrainLog log;
    std::size_t seen = 0;
    for (int e = 0; e < cfg_.episodes; ++e) {
      const double eps = cfg_.exploration.epsilon(e);
      env.reset();
      bool hit_reference = reached_reference(env);
      for (int t = 0; t < L; ++t) {
        const BitState s = env.bits();
        const int a = act(env, eps);
        StepRecord rec = env.step_index(static_cast<std::size_t>(a));
        memory.push({s, a, rec.beta, rec.p, rec.after, env.mask()});
        ++seen;
        hit_reference = hit_reference || (!std::isnan(rec.reference_reward) && rec.reference_reward >= cfg_.convergence_threshold);
        if (record_steps) log.steps.push_back(std::move(rec));
      }
      if (seen >= learn_start) {
        const auto sample = memory.sample(std::min(batch, memory.size()), rng_);
        const std::size_t mb = static_cast<std::size_t>(cfg_.minibatch);
        for (std::size_t k = 0; k < sample.size(); k += mb) {
          const std::vector<const Transition*> part(sample.begin() + static_cast<std::ptrdiff_t>(k),
                                                    sample.begin() + static_cast<std::ptrdiff_t>(std::min(sample.size(), k + mb)));
          log.loss.push_back(dqn_train_step(online_, target_, opt_, part, env.ledger(), cfg_.discount));
        }
      }
      if ((e + 1) % cfg_.target_update == 0) target_ = online_;

      log.episodes_run = e + 1;
      if (!cfg_.evaluate) {
        if (cfg_.stop_on_reference_visit && hit_reference) break;
        continue;
      }

      // greedy evaluation
      env.reset();
      for (int t = 0; t < L; ++t) env.step_index(static_cast<std::size_t>(act(env, 0.0)));
      const CachedBound fin = env.current();
      log.eval_reward.push_back(env.score(fin));
      log.eval_reference_reward.push_back(env.reference_score(fin));
      log.eval_beta.push_back(fin.beta);
      log.eval_state.push_back(env.state().to_string());
      if (log.converged_episode < 0 && !std::isnan(log.eval_reference_reward.back()) &&
          log.eval_reference_reward.back() >= cfg_.convergence_threshold)
        log.converged_episode = e + 1;
      if (cfg_.stop_on_convergence && log.converged_episode > 0) break;
      if (cfg_.stop_on_reference_visit && (hit_reference || reached_reference(env))) break;
    }
    return log;
  }

  /// Warm start: copies both networks from `src`.
  void load_from(const DqnAgent& src) {
    if (src.online_.dims() != online_.dims()) throw ValidationError("transfer between networks of different shapes");
    online_ = src.online_;
    target_ = src.target_;
  }

 private:
  bool reached_reference(const Environment& env) const {
    return env.reference() && first_visits_to_threshold(env.visits(), cfg_.convergence_threshold).has_value();
  }

  DqnConfig cfg_;
  std::mt19937_64 rng_;
  QNetwork online_, target_;
  Adam opt_;
};

/// Fresh agent for `env` initialized with the weights of `trained`.
inline DqnAgent transfer(const DqnAgent& trained, const Environment& env, DqnConfig cfg) {
  if (static_cast<int>(env.pool().size()) != trained.state_size())
    throw ValidationError("transfer needs identical state dimensions: " + std::to_string(trained.state_size()) + " vs " + std::to_string(env.pool().size()));
  DqnAgent out(trained.state_size(), cfg);
  out.load_from(trained);
  return out;
}

// ---------------------------------------------------------------------------
// Baselines

struct SearchResult {
  ConstraintSet best{0};
  CachedBound best_bound;
  double best_reward = 0.0;
  std::size_t unique_states = 0;
  std::size_t steps = 0;
  std::size_t accepted = 0;
};

struct SearchOptions {
  std::size_t max_states = 4000;
  std::size_t max_steps = 200000;
  // stop once a state reaches this reference reward (no effect without a reference)
  std::optional<double> stop_threshold;
};

namespace detail {

using Seen = std::map<std::string, std::pair<ConstraintSet, CachedBound>>;

inline void record(Seen& seen, const ConstraintSet& c, const CachedBound& b) { seen.try_emplace(c.to_string(), c, b); }

// Best visited state, scored against the reference when present, else the final ledger.
inline void finalize(const Environment& env, const Seen& seen, SearchResult& r) {
  bool first = true;
  for (const auto& [key, entry] : seen) {
    const auto& [c, b] = entry;
    const double score = env.reference() ? env.reference_score(b) : env.score(b);
    if (first || score > r.best_reward || (score == r.best_reward && b.beta > r.best_bound.beta)) {
      r.best = c;
      r.best_bound = b;
      r.best_reward = score;
      first = false;
    }
  }
  r.unique_states = env.unique_states();
}

inline bool reached(const Environment& env, const CachedBound& b, const SearchOptions& o) {
  return o.stop_threshold && env.reference() && env.reference_score(b) >= *o.stop_threshold;
}

inline std::vector<std::size_t> valid_moves(const ConstraintSet& c, const CandidatePool& pool) {
  const auto mask = valid_action_mask(c, pool);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < pool.size(); ++i)
    if (mask[i]) out.push_back(i);
  return out;
}

}  // namespace detail

/// Breadth-first expansion from the minimal set with shuffled child order.
/// Every state is evaluated once, when first generated.
inline SearchResult bfs_search(Environment& env, const SearchOptions& opts, std::mt19937_64& rng) {
  if (opts.max_states < 1) throw ValidationError("max_states must be >= 1");
  SearchResult r;
  std::set<std::string> seen;
  detail::Seen states;
  std::deque<ConstraintSet> queue;
  const ConstraintSet& init = env.reset();
  seen.insert(init.to_string());
  queue.push_back(init);
  detail::record(states, init, env.current());
  bool stop = detail::reached(env, env.current(), opts);
  while (!stop && !queue.empty() && seen.size() < opts.max_states) {
    const ConstraintSet cur = queue.front();
    queue.pop_front();
    auto moves = detail::valid_moves(cur, env.pool());
    std::shuffle(moves.begin(), moves.end(), rng);
    for (std::size_t i : moves) {
      ConstraintSet next = apply_action(cur, action_from_index(cur, i, env.pool()), env.pool());
      if (!seen.insert(next.to_string()).second) continue;
      const CachedBound b = env.evaluate(next).first;
      ++r.steps;
      detail::record(states, next, b);
      queue.push_back(std::move(next));
      if (detail::reached(env, b, opts)) {
        stop = true;
        break;
      }
      if (seen.size() >= opts.max_states) break;
    }
  }
  detail::finalize(env, states, r);
  return r;
}

inline double metropolis_acceptance(double r_new, double r_old, double T) {
  if (!(T > 0.0)) throw ValidationError("temperature must be positive");
  return std::min(1.0, std::exp((r_new - r_old) / T));
}

struct McConfig {
  double temperature = 0.084;
  void validate() const {
    if (!(temperature > 0.0)) throw ValidationError("temperature must be positive");
  }
};

/// Metropolis random walk over valid add/remove moves. The current state's
/// reward is rescored against the ledger at every proposal.
inline SearchResult mc_search(Environment& env, const McConfig& cfg, const SearchOptions& opts, std::mt19937_64& rng) {
  cfg.validate();
  if (opts.max_states < 1) throw ValidationError("max_states must be >= 1");
  SearchResult r;
  ConstraintSet cur = env.reset();
  CachedBound cur_b = env.current();
  detail::Seen states;
  detail::record(states, cur, cur_b);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  bool stop = detail::reached(env, cur_b, opts);
  while (!stop && env.unique_states() < opts.max_states && r.steps < opts.max_steps) {
    const auto moves = detail::valid_moves(cur, env.pool());
    if (moves.empty()) break;
    std::uniform_int_distribution<std::size_t> pick(0, moves.size() - 1);
    ConstraintSet next = apply_action(cur, action_from_index(cur, moves[pick(rng)], env.pool()), env.pool());
    const CachedBound b = env.evaluate(next).first;
    ++r.steps;
    detail::record(states, next, b);
    if (detail::reached(env, b, opts)) stop = true;
    const double p_acc = metropolis_acceptance(env.score(b), env.score(cur_b), cfg.temperature);
    if (u(rng) < p_acc) {
      cur = std::move(next);
      cur_b = b;
      ++r.accepted;
    }
  }
  detail::finalize(env, states, r);
  return r;
}

}  // namespace qcert
