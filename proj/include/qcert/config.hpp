#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qcert/agents.hpp"
#include "qcert/constraint_space.hpp"
#include "qcert/hamiltonian.hpp"
#include "qcert/relaxation.hpp"

namespace qcert {

using Json = nlohmann::json;

inline std::size_t line_of_offset(const std::string& text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

/// Parses a JSON document; syntax errors report the line.
inline Json parse_json_text(const std::string& text, const std::string& origin = "config") {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ValidationError(origin + ":" + std::to_string(line_of_offset(text, e.byte)) + ": " + e.what());
  }
}

inline Json load_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open config file " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_json_text(ss.str(), path);
}

namespace detail {

template <class T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("field \"") + key + "\": " + e.what());
  }
}

inline std::vector<double> scalar_or_list(const Json& j, const char* key, int n, double fallback) {
  if (!j.contains(key)) return std::vector<double>(n, fallback);
  const Json& v = j.at(key);
  if (v.is_number()) return std::vector<double>(n, v.get<double>());
  if (v.is_string() && v.get<std::string>() == "i_mod_3") {
    std::vector<double> out(n);
    for (int i = 0; i < n; ++i) out[i] = i % 3;
    return out;
  }
  if (!v.is_array()) throw ValidationError(std::string("field \"") + key + "\" must be a number, a list or \"i_mod_3\"");
  std::vector<double> out;
  for (const auto& x : v) {
    if (!x.is_number()) throw ValidationError(std::string("field \"") + key + "\" has a non-numeric entry");
    out.push_back(x.get<double>());
  }
  if (static_cast<int>(out.size()) != n)
    throw ValidationError(std::string("field \"") + key + "\" has " + std::to_string(out.size()) + " entries, expected " + std::to_string(n));
  return out;
}

}  // namespace detail

/// Hamiltonian section:
///   {"type": "xx", "n": 6, "periodic": true, "J": 1 | [..] | "i_mod_3", "B": 1 | [..]}
///   {"type": "zz_graph", "n": 3, "edges": [[0,1],..], "J": 1 | [..], "B": 0 | [..]}
///   {"type": "custom", "n": 3, "terms": [{"ops": "X0 Y1", "coeff": 0.5}, ..]}
inline LocalHamiltonian parse_hamiltonian(const Json& j) {
  if (!j.is_object()) throw ValidationError("model must be an object");
  const std::string type = detail::get_or<std::string>(j, "type", "xx");
  if (!j.contains("n")) throw ValidationError("model.n is required");
  const int n = detail::get_or<int>(j, "n", 0);
  if (n < 2) throw ValidationError("model.n must be >= 2");
  if (type == "xx") {
    const bool periodic = detail::get_or<bool>(j, "periodic", true);
    return build_xx(n, detail::scalar_or_list(j, "J", n, 1.0), detail::scalar_or_list(j, "B", n, 1.0), periodic);
  }
  if (type == "zz_graph") {
    std::vector<std::pair<int, int>> edges;
    for (const auto& e : j.at("edges")) {
      if (!e.is_array() || e.size() != 2) throw ValidationError("model.edges entries must be pairs");
      edges.emplace_back(e[0].get<int>(), e[1].get<int>());
    }
    std::vector<double> J;
    if (!j.contains("J") || j.at("J").is_number()) {
      J.assign(edges.size(), detail::get_or<double>(j, "J", 1.0));
    } else {
      J = j.at("J").get<std::vector<double>>();
    }
    return build_zz_graph(n, edges, J, detail::scalar_or_list(j, "B", n, 0.0));
  }
  if (type == "custom") {
    std::vector<PauliString> strings;
    for (const auto& t : j.at("terms")) strings.push_back(parse_pauli_string(t.at("ops").get<std::string>(), t.at("coeff").get<double>()));
    return build_custom(n, strings);
  }
  throw ValidationError("unknown model.type \"" + type + "\" (xx | zz_graph | custom)");
}

inline RelaxationOptions parse_relaxation_options(const Json& root) {
  RelaxationOptions o;
  if (!root.contains("relaxation")) return o;
  const Json& j = root.at("relaxation");
  o.compat_mode = parse_compat_mode(detail::get_or<std::string>(j, "compat_mode", "pairwise"));
  o.ppt = detail::get_or<bool>(j, "ppt", false);
  o.tol.feas = detail::get_or<double>(j, "feas_tol", o.tol.feas);
  o.tol.gap = detail::get_or<double>(j, "gap_tol", o.tol.gap);
  o.max_iter = detail::get_or<int>(j, "max_iter", o.max_iter);
  o.validate();
  return o;
}

struct PoolSpec {
  std::optional<BudgetPreset> preset = BudgetPreset::HalfThreeBody;
  long explicit_budget = 0;
  Geometry geometry = Geometry::Ring;
  int max_body = 3;

  long budget(int n) const { return preset ? budget_for(*preset, n) : explicit_budget; }
  CandidatePool pool(int n) const { return candidate_pool(n, budget(n), geometry, max_body); }
};

inline PoolSpec parse_pool_spec(const Json& root) {
  PoolSpec s;
  if (root.contains("budget")) {
    const Json& b = root.at("budget");
    if (b.is_number_integer()) {
      s.preset.reset();
      s.explicit_budget = b.get<long>();
      if (s.explicit_budget <= 0) throw ValidationError("budget must be positive");
    } else if (b.is_string()) {
      s.preset = parse_budget_preset(b.get<std::string>());
      if (!s.preset) throw ValidationError("unknown budget preset \"" + b.get<std::string>() + "\" (half | all | integer)");
    } else {
      throw ValidationError("budget must be \"half\", \"all\" or an integer");
    }
  }
  s.geometry = parse_geometry(detail::get_or<std::string>(root, "geometry", "ring"));
  s.max_body = detail::get_or<int>(root, "max_body", 3);
  return s;
}

inline std::vector<std::uint64_t> parse_seeds(const Json& root, std::uint64_t base, std::size_t fallback_count) {
  std::vector<std::uint64_t> seeds;
  if (root.contains("seeds")) {
    seeds = root.at("seeds").get<std::vector<std::uint64_t>>();
  } else {
    const std::size_t k = detail::get_or<std::size_t>(root, "num_seeds", fallback_count);
    for (std::size_t i = 0; i < k; ++i) seeds.push_back(base + i);
  }
  if (seeds.empty()) throw ValidationError("seed list must be nonempty");
  return seeds;
}

inline std::vector<double> parse_grid(const Json& root, const char* key, std::vector<double> fallback) {
  std::vector<double> g = root.contains(key) ? root.at(key).get<std::vector<double>>() : std::move(fallback);
  for (double x : g)
    if (!std::isfinite(x)) throw ValidationError(std::string(key) + " values must be finite");
  if (g.empty()) throw ValidationError(std::string(key) + " must be nonempty");
  return g;
}

inline DqnConfig parse_dqn_config(const Json& root, int n) {
  DqnConfig c;
  const Json j = root.contains("dqn") ? root.at("dqn") : Json::object();
  c.lr = detail::get_or<double>(j, "lr", c.lr);
  c.discount = detail::get_or<double>(j, "discount", c.discount);
  c.batch_episodes = detail::get_or<int>(j, "batch_episodes", c.batch_episodes);
  c.minibatch = detail::get_or<int>(j, "minibatch", c.minibatch);
  c.target_update = detail::get_or<int>(j, "target_update", c.target_update);
  c.episodes = detail::get_or<int>(j, "episodes", c.episodes);
  c.replay_capacity = detail::get_or<std::size_t>(j, "replay_capacity", c.replay_capacity);
  c.exploration.delta = detail::get_or<double>(j, "delta", exploration_decay_for(n));
  c.convergence_threshold = detail::get_or<double>(j, "convergence_threshold", c.convergence_threshold);
  c.validate();
  return c;
}

}  // namespace qcert
