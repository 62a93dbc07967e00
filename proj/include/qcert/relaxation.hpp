#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "qcert/common.hpp"
#include "qcert/constraint_space.hpp"
#include "qcert/hamiltonian.hpp"
#include "qcert/sdp_solver.hpp"

namespace qcert {

enum class CompatMode { PairwiseIntersections, AllSubsetIntersections };

inline CompatMode parse_compat_mode(const std::string& s) {
  if (s == "pairwise") return CompatMode::PairwiseIntersections;
  if (s == "all_subsets") return CompatMode::AllSubsetIntersections;
  throw ValidationError("unknown compat_mode \"" + s + "\" (expected pairwise | all_subsets)");
}

struct RelaxationOptions {
  CompatMode compat_mode = CompatMode::PairwiseIntersections;
  bool ppt = false;
  // Tighter than the bare solver defaults: bounds are compared at 1e-7 downstream.
  Tolerances tol{1e-9, 1e-9};
  int max_iter = 200;
  std::ostream* trace_csv = nullptr;

  void validate() const {
    if (!(tol.feas > 0.0) || !(tol.gap > 0.0)) throw ValidationError("solver tolerances must be positive");
    if (max_iter < 1) throw ValidationError("max_iter must be >= 1");
  }
};

enum class BlockKind { Marginal, Implicit, PartialTranspose };

/// An SDP together with what its blocks mean.
struct CompiledRelaxation {
  SdpProblem problem;
  std::vector<Subset> block_support;
  std::vector<BlockKind> block_kind;
  std::vector<double> trace_bound;  // Tr X_b on the feasible set
  double unsupported_offset = 0.0;
  bool real_mode = true;
  int num_variable_blocks() const { return problem.num_blocks(); }
};

// ---------------------------------------------------------------------------
// Pauli operators as sparse matrices on a block.

struct PauliEntry {
  int row, col;
  Complex value;
};

// Nonzeros of ⊗_j ops[j], ops[0] acting on the most significant bit.
inline std::vector<PauliEntry> pauli_entries(const std::vector<Pauli>& ops) {
  const int k = static_cast<int>(ops.size());
  const int dim = 1 << k;
  int flip = 0;
  for (int j = 0; j < k; ++j)
    if (ops[j] == Pauli::X || ops[j] == Pauli::Y) flip |= 1 << (k - 1 - j);
  std::vector<PauliEntry> out;
  out.reserve(dim);
  for (int x = 0; x < dim; ++x) {
    Complex phase = 1.0;
    for (int j = 0; j < k; ++j) {
      const int bit = (x >> (k - 1 - j)) & 1;
      switch (ops[j]) {
        case Pauli::Y: phase *= bit ? Complex(0, -1) : Complex(0, 1); break;
        case Pauli::Z: if (bit) phase = -phase; break;
        default: break;
      }
    }
    out.push_back({x ^ flip, x, phase});
  }
  return out;
}

inline int count_y(const std::vector<Pauli>& ops) {
  return static_cast<int>(std::count(ops.begin(), ops.end(), Pauli::Y));
}

// Symmetric real matrix M with ⟨M, X⟩ = Tr[O ρ] for the block encoding of ρ.
inline SparseSym encode_operator(const std::vector<PauliEntry>& entries, int dim, bool real_mode, double scale = 1.0) {
  std::vector<Eigen::Triplet<double>> t;
  if (real_mode) {
    SparseSym m(dim, dim);
    for (const auto& e : entries) t.emplace_back(e.row, e.col, scale * e.value.real());
    m.setFromTriplets(t.begin(), t.end());
    return m;
  }
  SparseSym m(2 * dim, 2 * dim);
  for (const auto& e : entries) {
    const double re = 0.5 * scale * e.value.real(), im = 0.5 * scale * e.value.imag();
    if (re != 0.0) {
      t.emplace_back(e.row, e.col, re);
      t.emplace_back(dim + e.row, dim + e.col, re);
    }
    if (im != 0.0) {
      t.emplace_back(dim + e.row, e.col, im);
      t.emplace_back(e.row, dim + e.col, -im);
    }
  }
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

inline Matrix encode_dense(const CMatrix& op, bool real_mode) {
  if (real_mode) return op.real();
  const Eigen::Index d = op.rows();
  Matrix m(2 * d, 2 * d);
  m.topLeftCorner(d, d) = op.real();
  m.bottomRightCorner(d, d) = op.real();
  m.bottomLeftCorner(d, d) = op.imag();
  m.topRightCorner(d, d) = -op.imag();
  return 0.5 * m;
}

// Inverse of the block encoding: recover ρ from a primal block.
inline CMatrix decode_block(const Matrix& x, bool real_mode) {
  if (real_mode) return x.cast<Complex>();
  const Eigen::Index d = x.rows() / 2;
  CMatrix rho(d, d);
  const Matrix re = 0.5 * (x.topLeftCorner(d, d) + x.bottomRightCorner(d, d));
  const Matrix im = 0.5 * (x.bottomLeftCorner(d, d) - x.topRightCorner(d, d));
  rho.real() = re;
  rho.imag() = im;
  return rho;
}

// ---------------------------------------------------------------------------
// Partial trace.

/// Coefficients of ρ_S ↦ Tr_{S∖R}[ρ_S] acting on column-major vec(ρ_S).
/// Rows index vec of the 2^|R| output, columns vec of the 2^|S| input.
inline Eigen::SparseMatrix<double> partial_trace_map(const Subset& S, const Subset& R) {
  if (R.empty()) throw ValidationError("partial_trace_map: R must be nonempty");
  if (!is_subset(R, S)) throw ValidationError("partial_trace_map: " + subset_to_string(R) + " is not a subset of " + subset_to_string(S));
  const SubsystemIndex idx(R, S);
  const std::uint64_t dS = 1ULL << S.size(), dR = 1ULL << R.size();
  std::vector<Eigen::Triplet<double>> t;
  for (std::uint64_t r = 0; r < dS; ++r)
    for (std::uint64_t c = 0; c < dS; ++c)
      if (idx.rest(r) == idx.rest(c)) t.emplace_back(static_cast<int>(idx.extract(r) + idx.extract(c) * dR), static_cast<int>(r + c * dS), 1.0);
  Eigen::SparseMatrix<double> m(static_cast<int>(dR * dR), static_cast<int>(dS * dS));
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

/// Tr_{S∖R}[ρ] for ρ on S.
inline CMatrix partial_trace(const CMatrix& rho, const Subset& S, const Subset& R) {
  if (!is_subset(R, S)) throw ValidationError("partial_trace: R is not a subset of S");
  const std::uint64_t dS = 1ULL << S.size(), dR = 1ULL << R.size();
  if (static_cast<std::uint64_t>(rho.rows()) != dS) throw ValidationError("partial_trace: dimension mismatch");
  const SubsystemIndex idx(R, S);
  CMatrix out = CMatrix::Zero(static_cast<Eigen::Index>(dR), static_cast<Eigen::Index>(dR));
  for (std::uint64_t r = 0; r < dS; ++r)
    for (std::uint64_t c = 0; c < dS; ++c)
      if (idx.rest(r) == idx.rest(c)) out(static_cast<Eigen::Index>(idx.extract(r)), static_cast<Eigen::Index>(idx.extract(c))) += rho(r, c);
  return out;
}

// ---------------------------------------------------------------------------
// Standard constraint sets of the hierarchy.

/// β₁: one marginal per distinct multi-qubit term support.
inline ConstraintSet level1_constraints(const LocalHamiltonian& h) {
  ConstraintSet c(h.n);
  for (const auto& t : h.terms)
    if (t.support.size() >= 2) c.insert(t.support);
  return simplify(c);
}

/// β₂: one marginal per union of intersecting term supports.
inline ConstraintSet level2_constraints(const LocalHamiltonian& h) {
  ConstraintSet c(h.n);
  for (std::size_t i = 0; i < h.terms.size(); ++i)
    for (std::size_t j = i + 1; j < h.terms.size(); ++j) {
      const auto& a = h.terms[i].support;
      const auto& b = h.terms[j].support;
      if (intersect(a, b).empty()) continue;
      Subset u;
      std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(u));
      if (u.size() >= 2) c.insert(u);
    }
  const ConstraintSet level1 = level1_constraints(h);
  for (const auto& s : level1.subsets()) c.insert(s);
  return simplify(c);
}

// ---------------------------------------------------------------------------

namespace detail {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) { return parent[x] == x ? x : parent[x] = find(parent[x]); }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

inline std::vector<Subset> nonempty_subsets(const Subset& s) {
  std::vector<Subset> out;
  const int k = static_cast<int>(s.size());
  for (int mask = 1; mask < (1 << k); ++mask) {
    Subset r;
    for (int j = 0; j < k; ++j)
      if (mask & (1 << j)) r.push_back(s[j]);
    out.push_back(r);
  }
  return out;
}

// Every Pauli string acting nontrivially on each qubit of R (|R| factors).
inline std::vector<std::vector<Pauli>> full_support_paulis(std::size_t k) {
  std::vector<std::vector<Pauli>> out{{}};
  for (std::size_t j = 0; j < k; ++j) {
    std::vector<std::vector<Pauli>> next;
    for (const auto& v : out)
      for (Pauli p : {Pauli::X, Pauli::Y, Pauli::Z}) {
        auto w = v;
        w.push_back(p);
        next.push_back(w);
      }
    out = std::move(next);
  }
  return out;
}

// Ops on `target` for a string given on `support` ⊆ target.
inline std::vector<Pauli> lift_ops(const std::vector<Pauli>& ops, const Subset& support, const Subset& target) {
  std::vector<Pauli> out(target.size(), Pauli::I);
  std::size_t j = 0;
  for (std::size_t t = 0; t < target.size() && j < support.size(); ++t)
    if (target[t] == support[j]) out[t] = ops[j++];
  return out;
}

inline std::vector<std::vector<Pauli>> all_paulis(std::size_t k) {
  std::vector<std::vector<Pauli>> out{{}};
  for (std::size_t j = 0; j < k; ++j) {
    std::vector<std::vector<Pauli>> next;
    for (const auto& v : out)
      for (Pauli p : {Pauli::I, Pauli::X, Pauli::Y, Pauli::Z}) {
        auto w = v;
        w.push_back(p);
        next.push_back(w);
      }
    out = std::move(next);
  }
  return out;
}

}  // namespace detail

inline constexpr int kMaxBlockDim = 512;

/// Builds the marginal-compatibility SDP for (h, c).
inline CompiledRelaxation compile_relaxation(const LocalHamiltonian& h, const ConstraintSet& c_in, const RelaxationOptions& opts = {}) {
  h.validate();
  opts.validate();
  if (c_in.n() != h.n) throw ValidationError("constraint set size " + std::to_string(c_in.n()) + " does not match Hamiltonian size " + std::to_string(h.n));
  const ConstraintSet c = simplify(c_in);
  CompiledRelaxation out;
  out.real_mode = h.is_real();
  const bool real = out.real_mode;
  const int mult = real ? 1 : 2;

  std::vector<Subset> blocks = c.subsets();
  for (const auto& s : blocks)
    if (mult * (1 << s.size()) > kMaxBlockDim)
      throw ValidationError("block " + subset_to_string(s) + " exceeds the maximum block dimension " + std::to_string(kMaxBlockDim));
  const std::size_t n_marginal = blocks.size();

  // term assignment
  std::vector<int> owner(h.terms.size(), -1);
  std::vector<bool> implicit_needed(h.n, false);
  const auto uncovered = c.uncovered_qubits();
  for (std::size_t t = 0; t < h.terms.size(); ++t) {
    const auto& supp = h.terms[t].support;
    int best = -1;
    for (std::size_t b = 0; b < n_marginal; ++b)
      if (is_subset(supp, blocks[b]) && (best < 0 || std::lexicographical_compare(blocks[b].begin(), blocks[b].end(), blocks[best].begin(), blocks[best].end())))
        best = static_cast<int>(b);
    owner[t] = best;
    if (best < 0 && supp.size() == 1 && std::binary_search(uncovered.begin(), uncovered.end(), supp[0])) implicit_needed[supp[0]] = true;
  }
  std::vector<int> implicit_block(h.n, -1);
  for (int q = 0; q < h.n; ++q)
    if (implicit_needed[q]) {
      implicit_block[q] = static_cast<int>(blocks.size());
      blocks.push_back({q});
    }
  for (std::size_t t = 0; t < h.terms.size(); ++t)
    if (owner[t] < 0 && h.terms[t].support.size() == 1 && implicit_block[h.terms[t].support[0]] >= 0) owner[t] = implicit_block[h.terms[t].support[0]];

  SdpProblem& p = out.problem;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const int d = mult * (1 << blocks[b].size());
    p.block_dims.push_back(d);
    p.objective.push_back(Matrix::Zero(d, d));
    out.block_support.push_back(blocks[b]);
    out.block_kind.push_back(b < n_marginal ? BlockKind::Marginal : BlockKind::Implicit);
    out.trace_bound.push_back(mult);
  }
  for (std::size_t t = 0; t < h.terms.size(); ++t) {
    if (owner[t] < 0) {
      out.unsupported_offset += term_min_eigenvalue(h.terms[t]);
      continue;
    }
    const Subset& S = blocks[owner[t]];
    p.objective[owner[t]] += encode_dense(embed_operator(h.terms[t].matrix, h.terms[t].support, S), real);
  }
  for (auto& m : p.objective) m = (0.5 * (m + m.transpose())).eval();

  auto pauli_on = [&](int b, const std::vector<Pauli>& ops_on_block, double scale = 1.0) {
    return encode_operator(pauli_entries(ops_on_block), 1 << blocks[b].size(), real, scale);
  };

  // unit trace
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    SdpConstraint con;
    con.rhs = 1.0;
    con.parts.emplace_back(static_cast<int>(b), pauli_on(static_cast<int>(b), std::vector<Pauli>(blocks[b].size(), Pauli::I)));
    p.constraints.push_back(std::move(con));
  }

  // compatibility: per Pauli string, blocks linked by a shared support
  std::map<std::vector<std::uint8_t>, std::pair<std::vector<Pauli>, Subset>> strings;
  std::map<std::vector<std::uint8_t>, detail::UnionFind> links;
  auto link = [&](const Subset& R, int a, int b) {
    for (const auto& ops : detail::full_support_paulis(R.size())) {
      if (real && count_y(ops) % 2 != 0) continue;
      std::vector<std::uint8_t> key(h.n, 0);
      for (std::size_t j = 0; j < R.size(); ++j) key[R[j]] = static_cast<std::uint8_t>(ops[j]);
      strings.emplace(key, std::make_pair(ops, R));
      auto it = links.try_emplace(key, static_cast<int>(n_marginal)).first;
      it->second.unite(a, b);
    }
  };
  for (std::size_t a = 0; a < n_marginal; ++a)
    for (std::size_t b = a + 1; b < n_marginal; ++b) {
      const Subset I = intersect(blocks[a], blocks[b]);
      if (I.empty()) continue;
      // Strings supported inside I; the all-subsets mode enumerates them per R ⊆ I.
      if (opts.compat_mode == CompatMode::PairwiseIntersections) {
        for (const auto& R : detail::nonempty_subsets(I)) link(R, static_cast<int>(a), static_cast<int>(b));
      } else {
        for (const auto& R : detail::nonempty_subsets(I))
          for (const auto& Rs : detail::nonempty_subsets(R)) link(Rs, static_cast<int>(a), static_cast<int>(b));
      }
    }
  for (auto& [key, uf] : links) {
    const auto& [ops, R] = strings.at(key);
    std::map<int, std::vector<int>> comps;
    for (int b = 0; b < static_cast<int>(n_marginal); ++b)
      if (is_subset(R, blocks[b])) comps[uf.find(b)].push_back(b);
    for (const auto& [root, members] : comps) {
      for (std::size_t j = 1; j < members.size(); ++j) {
        SdpConstraint con;
        con.parts.emplace_back(members[0], pauli_on(members[0], detail::lift_ops(ops, R, blocks[members[0]])));
        con.parts.emplace_back(members[j], pauli_on(members[j], detail::lift_ops(ops, R, blocks[members[j]]), -1.0));
        p.constraints.push_back(std::move(con));
      }
    }
  }

  // positive partial transpose of every marginal across every bipartition
  if (opts.ppt) {
    for (std::size_t b = 0; b < n_marginal; ++b) {
      const Subset& S = blocks[b];
      const int k = static_cast<int>(S.size());
      for (int mask = 1; mask < (1 << k) - 1; ++mask) {
        if (!(mask & 1)) continue;  // A and S∖A give transposed, isospectral matrices
        const int y_block = p.num_blocks();
        const int d = mult * (1 << k);
        p.block_dims.push_back(d);
        p.objective.push_back(Matrix::Zero(d, d));
        out.block_support.push_back(S);
        out.block_kind.push_back(BlockKind::PartialTranspose);
        out.trace_bound.push_back(mult);
        for (const auto& ops : detail::all_paulis(k)) {
          if (real && count_y(ops) % 2 != 0) continue;
          int flips = 0;
          for (int j = 0; j < k; ++j)
            if ((mask & (1 << j)) && ops[j] == Pauli::Y) ++flips;
          SdpConstraint con;
          con.parts.emplace_back(y_block, pauli_on(static_cast<int>(b), ops));
          con.parts.emplace_back(static_cast<int>(b), pauli_on(static_cast<int>(b), ops, flips % 2 ? 1.0 : -1.0));
          p.constraints.push_back(std::move(con));
        }
      }
    }
  }
  return out;
}

inline SdpProblem compile(const LocalHamiltonian& h, const ConstraintSet& c, const RelaxationOptions& opts = {}) {
  return compile_relaxation(h, c, opts).problem;
}

/// True iff C - Σ y_i A_i ⪰ -eps on every block.
inline bool verify_certificate(const SdpProblem& prob, const Vector& y, double eps) {
  if (y.size() != prob.num_constraints()) return false;
  const auto z = dual_slack(prob, y);
  return std::all_of(z.begin(), z.end(), [&](const Matrix& m) { return min_eig_check(m, eps); });
}

/// Lower bound on min ⟨C, X⟩ valid for any y, from the exact dual slack and
/// the fixed block traces.
inline double certified_dual_bound(const CompiledRelaxation& rel, const Vector& y, double* min_eig = nullptr) {
  const auto& prob = rel.problem;
  Vector b(prob.num_constraints());
  for (int i = 0; i < prob.num_constraints(); ++i) b[i] = prob.constraints[i].rhs;
  double bound = b.dot(y);
  double worst = std::numeric_limits<double>::infinity();
  const auto z = dual_slack(prob, y);
  for (std::size_t k = 0; k < z.size(); ++k) {
    const double lmin = min_eigenvalue(z[k]);
    worst = std::min(worst, lmin);
    if (lmin < 0.0) bound += lmin * rel.trace_bound[k];
  }
  if (min_eig) *min_eig = worst;
  return bound;
}

struct BoundResult {
  double beta = -std::numeric_limits<double>::infinity();
  long p = 0;
  SolveStatus status = SolveStatus::Failed;
  bool dual_certified = false;
  double unsupported_offset = 0.0;
  double primal_value = std::numeric_limits<double>::quiet_NaN();  // primal objective + offset
  double dual_min_eig = 0.0;
  int iterations = 0;
  double seconds = 0.0;
  std::string stop_reason;
  std::string error;
};

/// β_C, reported from the dual side only.
inline BoundResult solve_bound(const LocalHamiltonian& h, const ConstraintSet& c, const RelaxationOptions& opts = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  BoundResult r;
  r.p = cost(c);
  const CompiledRelaxation rel = compile_relaxation(h, c, opts);
  r.unsupported_offset = rel.unsupported_offset;
  if (rel.problem.num_blocks() == 0) {
    r.beta = rel.unsupported_offset;
    r.primal_value = r.beta;
    r.status = SolveStatus::Optimal;
    r.dual_certified = true;
  } else {
    try {
      SolverOptions so;
      so.tol = opts.tol;
      so.max_iter = opts.max_iter;
      so.trace_csv = opts.trace_csv;
      const SdpSolution sol = solve(rel.problem, so);
      r.status = sol.status;
      r.iterations = sol.iterations;
      r.stop_reason = sol.stop_reason;
      r.primal_value = sol.primal_obj + rel.unsupported_offset;
      r.beta = certified_dual_bound(rel, sol.y, &r.dual_min_eig) + rel.unsupported_offset;
      r.dual_certified = r.dual_min_eig >= -opts.tol.feas && std::isfinite(r.beta);
    } catch (const SolverError& e) {
      r.status = SolveStatus::Failed;
      r.error = e.what();
    }
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

}  // namespace qcert
