#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qcert/common.hpp"

namespace qcert {

// Canonical order for subsets: by size, then lexicographic.
inline bool canonical_less(const Subset& a, const Subset& b) {
  if (a.size() != b.size()) return a.size() < b.size();
  return a < b;
}

/// A set C of qubit subsets, each of size >= 2. One-body sets are implicit for
/// every qubit that no stored subset covers.
class ConstraintSet {
 public:
  ConstraintSet() = default;
  explicit ConstraintSet(int n) : n_(n) {}
  ConstraintSet(int n, std::vector<Subset> subsets) : n_(n) {
    for (auto& s : subsets) insert(std::move(s));
  }

  int n() const { return n_; }
  const std::vector<Subset>& subsets() const { return subsets_; }
  bool empty() const { return subsets_.empty(); }
  std::size_t size() const { return subsets_.size(); }

  bool contains(const Subset& s) const {
    return std::binary_search(subsets_.begin(), subsets_.end(), s, canonical_less);
  }

  // Sorts and deduplicates `s`; one-body and empty sets are dropped.
  void insert(Subset s) {
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    if (!s.empty() && (s.front() < 0 || s.back() >= n_))
      throw ValidationError("subset " + subset_to_string(s) + " outside [0," + std::to_string(n_) + ")");
    if (s.size() < 2) return;
    auto it = std::lower_bound(subsets_.begin(), subsets_.end(), s, canonical_less);
    if (it != subsets_.end() && *it == s) return;
    subsets_.insert(it, std::move(s));
  }

  bool erase(const Subset& s) {
    auto it = std::lower_bound(subsets_.begin(), subsets_.end(), s, canonical_less);
    if (it == subsets_.end() || *it != s) return false;
    subsets_.erase(it);
    return true;
  }

  // True if s is contained in some stored subset.
  bool absorbs(const Subset& s) const {
    return std::any_of(subsets_.begin(), subsets_.end(), [&](const Subset& t) { return is_subset(s, t); });
  }

  std::vector<int> uncovered_qubits() const {
    std::vector<char> covered(n_, 0);
    for (const auto& s : subsets_)
      for (int q : s) covered[q] = 1;
    std::vector<int> out;
    for (int q = 0; q < n_; ++q)
      if (!covered[q]) out.push_back(q);
    return out;
  }

  std::string to_string() const {
    std::string out = "[";
    for (std::size_t i = 0; i < subsets_.size(); ++i) {
      if (i) out += ",";
      out += subset_to_string(subsets_[i]);
    }
    return out + "]";
  }

  friend bool operator==(const ConstraintSet& a, const ConstraintSet& b) { return a.n_ == b.n_ && a.subsets_ == b.subsets_; }
  friend bool operator<(const ConstraintSet& a, const ConstraintSet& b) {
    if (a.n_ != b.n_) return a.n_ < b.n_;
    return std::lexicographical_compare(a.subsets_.begin(), a.subsets_.end(), b.subsets_.begin(), b.subsets_.end(), canonical_less);
  }

 private:
  int n_ = 0;
  std::vector<Subset> subsets_;  // canonical order
};

/// Parses the text form "[[0,1,2],[2,3]]".
inline ConstraintSet parse_constraint_set(const std::string& text, int n) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("malformed subset list \"" + text + "\": " + e.what());
  }
  if (!j.is_array()) throw ValidationError("subset list must be a JSON array of arrays: \"" + text + "\"");
  ConstraintSet c(n);
  for (const auto& s : j) {
    if (!s.is_array()) throw ValidationError("subset list entries must be arrays: \"" + text + "\"");
    Subset sub;
    for (const auto& q : s) {
      if (!q.is_number_integer()) throw ValidationError("qubit indices must be integers: \"" + text + "\"");
      sub.push_back(q.get<int>());
    }
    c.insert(std::move(sub));
  }
  return c;
}

/// Drops every subset contained in another one.
inline ConstraintSet simplify(const ConstraintSet& c) {
  ConstraintSet out(c.n());
  const auto& subs = c.subsets();
  for (std::size_t i = 0; i < subs.size(); ++i) {
    bool dominated = false;
    for (std::size_t j = 0; j < subs.size() && !dominated; ++j)
      dominated = i != j && subs[j].size() > subs[i].size() && is_subset(subs[i], subs[j]);
    if (!dominated) out.insert(subs[i]);
  }
  return out;
}

// Free real parameters of a Hermitian unit-trace matrix on k qubits.
inline long rdm_parameters(std::size_t k) { return (1L << (2 * k)) - 1; }

/// Parameter count p: Σ (4^|S| - 1) over simplified subsets plus 3 for every
/// qubit left to its implicit one-body RDM.
inline long cost(const ConstraintSet& c) {
  const ConstraintSet s = simplify(c);
  long p = 0;
  for (const auto& sub : s.subsets()) p += rdm_parameters(sub.size());
  p += 3L * static_cast<long>(s.uncovered_qubits().size());
  return p;
}

/// C ⪯ C' iff every S in C sits inside some S' in C'.
inline bool partial_order_leq(const ConstraintSet& c1, const ConstraintSet& c2) {
  if (c1.n() != c2.n()) throw ValidationError("partial order needs equal system sizes");
  return std::all_of(c1.subsets().begin(), c1.subsets().end(), [&](const Subset& s) { return c2.absorbs(s); });
}

enum class Geometry { Chain, Ring, AllSubsets };

inline Geometry parse_geometry(const std::string& s) {
  if (s == "chain") return Geometry::Chain;
  if (s == "ring") return Geometry::Ring;
  if (s == "all" || s == "all_subsets") return Geometry::AllSubsets;
  throw ValidationError("unknown geometry \"" + s + "\" (chain|ring|all)");
}

/// Named budgets for the XX experiments. HalfThreeBody allows ⌊n/2⌋ three-body
/// RDMs plus one two-body RDM per six sites; AllThreeBody allows n three-body RDMs.
enum class BudgetPreset { HalfThreeBody, AllThreeBody };

inline long budget_for(BudgetPreset preset, int n) {
  switch (preset) {
    case BudgetPreset::HalfThreeBody: return (n / 2) * rdm_parameters(3) + ((n + 5) / 6) * rdm_parameters(2);
    case BudgetPreset::AllThreeBody: return n * rdm_parameters(3);
  }
  return 0;
}

inline std::optional<BudgetPreset> parse_budget_preset(const std::string& s) {
  if (s == "half" || s == "half_three_body") return BudgetPreset::HalfThreeBody;
  if (s == "all" || s == "all_three_body") return BudgetPreset::AllThreeBody;
  return std::nullopt;
}

/// The candidate subsets the agent may activate; their order defines the
/// one-hot state encoding.
struct CandidatePool {
  int n = 0;
  long budget = 0;
  Geometry geometry = Geometry::Ring;
  int max_body = 3;
  std::vector<Subset> candidates;

  std::size_t size() const { return candidates.size(); }

  std::optional<std::size_t> index_of(const Subset& s) const {
    auto it = std::lower_bound(candidates.begin(), candidates.end(), s, canonical_less);
    if (it == candidates.end() || *it != s) return std::nullopt;
    return static_cast<std::size_t>(it - candidates.begin());
  }
};

namespace detail {

inline void combinations(int n, int k, int start, Subset& cur, std::vector<Subset>& out) {
  if (static_cast<int>(cur.size()) == k) {
    out.push_back(cur);
    return;
  }
  for (int q = start; q < n; ++q) {
    cur.push_back(q);
    combinations(n, k, q + 1, cur, out);
    cur.pop_back();
  }
}

}  // namespace detail

inline CandidatePool candidate_pool(int n, long budget, Geometry geometry, int max_body) {
  if (n < 2) throw ValidationError("candidate pool needs n >= 2");
  if (max_body < 2 || max_body > 4) throw ValidationError("max_body must be in [2,4]");
  CandidatePool pool{n, budget, geometry, max_body, {}};
  std::vector<Subset> raw;
  for (int k = 2; k <= std::min(max_body, n); ++k) {
    if (geometry == Geometry::AllSubsets) {
      Subset cur;
      detail::combinations(n, k, 0, cur, raw);
      continue;
    }
    const int starts = geometry == Geometry::Ring && k < n ? n : n - k + 1;
    for (int i = 0; i < starts; ++i) {
      Subset s;
      for (int d = 0; d < k; ++d) s.push_back((i + d) % n);
      std::sort(s.begin(), s.end());
      raw.push_back(std::move(s));
    }
  }
  std::sort(raw.begin(), raw.end(), canonical_less);
  raw.erase(std::unique(raw.begin(), raw.end()), raw.end());
  for (auto& s : raw)
    if (rdm_parameters(s.size()) <= budget) pool.candidates.push_back(std::move(s));
  if (pool.candidates.empty())
    throw ValidationError("empty candidate pool: budget " + std::to_string(budget) + " is below the cheapest two-body RDM (15)");
  return pool;
}

/// One-hot state vector over the pool; all zeros is the minimal set.
using BitState = std::vector<std::uint8_t>;

inline BitState encode(const ConstraintSet& c, const CandidatePool& pool) {
  BitState bits(pool.size(), 0);
  for (const auto& s : c.subsets()) {
    auto idx = pool.index_of(s);
    if (!idx) throw ValidationError("constraint " + subset_to_string(s) + " is not in the candidate pool");
    bits[*idx] = 1;
  }
  return bits;
}

inline ConstraintSet decode(const BitState& bits, const CandidatePool& pool) {
  if (bits.size() != pool.size()) throw ValidationError("state vector length does not match pool");
  ConstraintSet c(pool.n);
  for (std::size_t i = 0; i < bits.size(); ++i)
    if (bits[i]) c.insert(pool.candidates[i]);
  return c;
}

inline std::string bits_to_string(const BitState& bits) {
  std::string s(bits.size(), '0');
  for (std::size_t i = 0; i < bits.size(); ++i)
    if (bits[i]) s[i] = '1';
  return s;
}

enum class ActionKind { Add, Remove, Stay };

struct ActionSpec {
  ActionKind kind = ActionKind::Stay;
  std::size_t target = 0;  // candidate index, unused for Stay

  static ActionSpec add(std::size_t i) { return {ActionKind::Add, i}; }
  static ActionSpec remove(std::size_t i) { return {ActionKind::Remove, i}; }
  static ActionSpec stay() { return {ActionKind::Stay, 0}; }

  friend bool operator==(const ActionSpec&, const ActionSpec&) = default;
};

inline std::string to_string(const ActionSpec& a) {
  switch (a.kind) {
    case ActionKind::Add: return "add:" + std::to_string(a.target);
    case ActionKind::Remove: return "remove:" + std::to_string(a.target);
    case ActionKind::Stay: return "stay";
  }
  return "?";
}

namespace detail {

// Removing S activates its (|S|-1)-subsets that belong to the pool.
inline ConstraintSet remove_and_split(const ConstraintSet& c, const Subset& s, const CandidatePool& pool) {
  ConstraintSet out = c;
  out.erase(s);
  if (s.size() > 2) {
    for (std::size_t drop = 0; drop < s.size(); ++drop) {
      Subset sub;
      for (std::size_t k = 0; k < s.size(); ++k)
        if (k != drop) sub.push_back(s[k]);
      if (pool.index_of(sub) && !out.absorbs(sub)) out.insert(sub);
    }
  }
  return simplify(out);
}

}  // namespace detail

/// Deterministic transition. States are kept simplified: adding a subset that
/// is already absorbed is not a valid move.
inline ConstraintSet apply_action(const ConstraintSet& state, const ActionSpec& a, const CandidatePool& pool) {
  const ConstraintSet c = simplify(state);
  if (a.kind == ActionKind::Stay) return c;
  if (a.target >= pool.size()) throw ValidationError("action targets candidate " + std::to_string(a.target) + " outside the pool");
  const Subset& s = pool.candidates[a.target];
  if (a.kind == ActionKind::Add) {
    if (c.absorbs(s)) throw ValidationError("cannot add " + subset_to_string(s) + ": already active or absorbed");
    ConstraintSet next = c;
    next.insert(s);
    next = simplify(next);
    if (cost(next) > pool.budget)
      throw ValidationError("adding " + subset_to_string(s) + " exceeds the budget " + std::to_string(pool.budget));
    return next;
  }
  if (!c.contains(s)) throw ValidationError("cannot remove inactive constraint " + subset_to_string(s));
  ConstraintSet next = detail::remove_and_split(c, s, pool);
  if (cost(next) > pool.budget)
    throw ValidationError("removing " + subset_to_string(s) + " exceeds the budget " + std::to_string(pool.budget));
  return next;
}

/// Action index j < pool.size() toggles candidate j; index pool.size() is Stay.
inline ActionSpec action_from_index(const ConstraintSet& c, std::size_t index, const CandidatePool& pool) {
  if (index == pool.size()) return ActionSpec::stay();
  return c.contains(pool.candidates[index]) ? ActionSpec::remove(index) : ActionSpec::add(index);
}

inline std::size_t action_index(const ActionSpec& a, const CandidatePool& pool) {
  return a.kind == ActionKind::Stay ? pool.size() : a.target;
}

/// Mask of length pool.size()+1 marking the actions that keep the state inside
/// the budget.
inline std::vector<std::uint8_t> valid_action_mask(const ConstraintSet& state, const CandidatePool& pool) {
  const ConstraintSet c = simplify(state);
  std::vector<std::uint8_t> mask(pool.size() + 1, 0);
  mask[pool.size()] = 1;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const Subset& s = pool.candidates[i];
    if (c.contains(s)) {
      mask[i] = cost(detail::remove_and_split(c, s, pool)) <= pool.budget;
    } else if (!c.absorbs(s)) {
      ConstraintSet next = c;
      next.insert(s);
      mask[i] = cost(simplify(next)) <= pool.budget;
    }
  }
  return mask;
}

/// Every state reachable from the minimal set through valid actions.
inline std::vector<ConstraintSet> enumerate_reachable(const CandidatePool& pool, std::size_t limit = 1'000'000) {
  std::map<ConstraintSet, bool> seen;
  std::vector<ConstraintSet> order{ConstraintSet(pool.n)};
  seen[order.front()] = true;
  for (std::size_t head = 0; head < order.size(); ++head) {
    const ConstraintSet cur = order[head];
    const auto mask = valid_action_mask(cur, pool);
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (!mask[i]) continue;
      ConstraintSet next = apply_action(cur, action_from_index(cur, i, pool), pool);
      if (seen.emplace(next, true).second) {
        order.push_back(std::move(next));
        if (order.size() > limit) throw ValidationError("reachable state space exceeds " + std::to_string(limit));
      }
    }
  }
  return order;
}

}  // namespace qcert
