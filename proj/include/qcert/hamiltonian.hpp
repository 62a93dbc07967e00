#pragma once

#include <algorithm>
#include <cctype>
#include <limits>
#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>

#include "qcert/common.hpp"

namespace qcert {

enum class Pauli : std::uint8_t { I = 0, X = 1, Y = 2, Z = 3 };

inline Eigen::Matrix2cd pauli_matrix(Pauli p) {
  const Complex i(0.0, 1.0);
  Eigen::Matrix2cd m;
  switch (p) {
    case Pauli::I: m << 1, 0, 0, 1; break;
    case Pauli::X: m << 0, 1, 1, 0; break;
    case Pauli::Y: m << 0, -i, i, 0; break;
    case Pauli::Z: m << 1, 0, 0, -1; break;
  }
  return m;
}

inline char pauli_char(Pauli p) { return "IXYZ"[static_cast<int>(p)]; }

/// A weighted tensor product of Pauli matrices. Identity sites are not stored.
struct PauliString {
  std::map<int, Pauli> site_ops;
  double coefficient = 1.0;

  Subset support() const {
    Subset s;
    for (const auto& [q, op] : site_ops) s.push_back(q);
    return s;
  }
};

// Parses "X0 Y2 Z3" (whitespace separated, one letter plus a site index).
inline PauliString parse_pauli_string(const std::string& text, double coefficient) {
  PauliString ps;
  ps.coefficient = coefficient;
  std::size_t pos = 0;
  while (pos < text.size()) {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    if (pos == text.size()) break;
    const char letter = static_cast<char>(std::toupper(static_cast<unsigned char>(text[pos])));
    Pauli op;
    switch (letter) {
      case 'X': op = Pauli::X; break;
      case 'Y': op = Pauli::Y; break;
      case 'Z': op = Pauli::Z; break;
      case 'I': op = Pauli::I; break;
      default: throw ValidationError("bad Pauli letter '" + std::string(1, text[pos]) + "' in \"" + text + "\"");
    }
    ++pos;
    std::size_t end = pos;
    while (end < text.size() && std::isdigit(static_cast<unsigned char>(text[end]))) ++end;
    if (end == pos) throw ValidationError("missing site index in Pauli string \"" + text + "\"");
    const int site = std::stoi(text.substr(pos, end - pos));
    pos = end;
    if (ps.site_ops.count(site)) throw ValidationError("site " + std::to_string(site) + " repeated in \"" + text + "\"");
    if (op != Pauli::I) ps.site_ops[site] = op;
  }
  return ps;
}

// Kronecker product of single-qubit operators; ops[0] is the leftmost factor.
inline CMatrix kron_paulis(const std::vector<Pauli>& ops) {
  CMatrix m = CMatrix::Identity(1, 1);
  for (Pauli p : ops) {
    const Eigen::Matrix2cd s = pauli_matrix(p);
    CMatrix next(m.rows() * 2, m.cols() * 2);
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) next.block<2, 2>(2 * r, 2 * c) = m(r, c) * s;
    m = std::move(next);
  }
  return m;
}

// Matrix of a Pauli string on `support` (sorted). Sites of `support` absent from
// the string act as identity.
inline CMatrix pauli_string_matrix(const PauliString& ps, const Subset& support) {
  std::vector<Pauli> ops;
  ops.reserve(support.size());
  for (int q : support) {
    auto it = ps.site_ops.find(q);
    ops.push_back(it == ps.site_ops.end() ? Pauli::I : it->second);
  }
  return ps.coefficient * kron_paulis(ops);
}

// Index bookkeeping for embedding an operator on `sub` into the Hilbert space
// of `target` (both sorted, sub ⊆ target). Qubit target[0] is the most
// significant bit of a basis index.
class SubsystemIndex {
 public:
  SubsystemIndex(const Subset& sub, const Subset& target) : nsub_(static_cast<int>(sub.size())), ntarget_(static_cast<int>(target.size())) {
    if (!is_subset(sub, target)) throw ValidationError("support " + subset_to_string(sub) + " is not inside " + subset_to_string(target));
    for (int q : sub) {
      const auto it = std::lower_bound(target.begin(), target.end(), q);
      bit_of_.push_back(ntarget_ - 1 - static_cast<int>(it - target.begin()));
    }
    for (int b : bit_of_) sub_mask_ |= (std::uint64_t{1} << b);
  }

  std::uint64_t extract(std::uint64_t full) const {
    std::uint64_t out = 0;
    for (int k = 0; k < nsub_; ++k)
      if (full >> bit_of_[k] & 1) out |= std::uint64_t{1} << (nsub_ - 1 - k);
    return out;
  }

  std::uint64_t scatter(std::uint64_t local) const {
    std::uint64_t out = 0;
    for (int k = 0; k < nsub_; ++k)
      if (local >> (nsub_ - 1 - k) & 1) out |= std::uint64_t{1} << bit_of_[k];
    return out;
  }

  std::uint64_t rest(std::uint64_t full) const { return full & ~sub_mask_; }
  int target_qubits() const { return ntarget_; }

 private:
  int nsub_;
  int ntarget_;
  std::vector<int> bit_of_;
  std::uint64_t sub_mask_ = 0;
};

// M ⊗ 1 with the factors interleaved according to the qubit labels.
inline CMatrix embed_operator(const CMatrix& m, const Subset& sub, const Subset& target) {
  const SubsystemIndex idx(sub, target);
  const std::uint64_t dim = std::uint64_t{1} << target.size();
  CMatrix out = CMatrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  for (std::uint64_t col = 0; col < dim; ++col) {
    const std::uint64_t a = idx.extract(col);
    const std::uint64_t base = idx.rest(col);
    for (Eigen::Index ap = 0; ap < m.rows(); ++ap) {
      const Complex v = m(ap, static_cast<Eigen::Index>(a));
      if (v != Complex(0.0, 0.0)) out(static_cast<Eigen::Index>(base | idx.scatter(ap)), static_cast<Eigen::Index>(col)) += v;
    }
  }
  return out;
}

/// One Hamiltonian term H_i: a Hermitian operator on a small sorted support.
struct LocalTerm {
  Subset support;
  CMatrix matrix;

  static LocalTerm from_paulis(const Subset& support, const std::vector<PauliString>& strings) {
    LocalTerm t;
    t.support = support;
    const auto dim = Eigen::Index{1} << support.size();
    t.matrix = CMatrix::Zero(dim, dim);
    for (const auto& ps : strings) {
      for (const auto& [q, op] : ps.site_ops)
        if (!std::binary_search(support.begin(), support.end(), q))
          throw ValidationError("Pauli string acts outside term support " + subset_to_string(support));
      t.matrix += pauli_string_matrix(ps, support);
    }
    return t;
  }

  bool is_real() const { return matrix.imag().cwiseAbs().maxCoeff() == 0.0; }

  double hermiticity_error() const { return (matrix - matrix.adjoint()).cwiseAbs().maxCoeff(); }
};

/// H = Σ_i H_i acting on n qubits.
struct LocalHamiltonian {
  int n = 0;
  std::vector<LocalTerm> terms;

  bool is_real() const {
    return std::all_of(terms.begin(), terms.end(), [](const LocalTerm& t) { return t.is_real(); });
  }

  void validate() const {
    if (n < 1) throw ValidationError("Hamiltonian needs at least one qubit");
    for (const auto& t : terms) {
      if (t.support.empty()) throw ValidationError("term with empty support");
      if (!std::is_sorted(t.support.begin(), t.support.end()) ||
          std::adjacent_find(t.support.begin(), t.support.end()) != t.support.end())
        throw ValidationError("term support must be sorted and distinct");
      if (t.support.front() < 0 || t.support.back() >= n)
        throw ValidationError("term support " + subset_to_string(t.support) + " outside [0," + std::to_string(n) + ")");
      if (t.matrix.rows() != (Eigen::Index{1} << t.support.size()))
        throw ValidationError("term matrix dimension does not match support");
      if (t.hermiticity_error() > 1e-12) throw ValidationError("term on " + subset_to_string(t.support) + " is not Hermitian");
    }
  }
};

/// Heisenberg XX chain with transverse field:
/// H = Σ J_i (X_i X_{i+1} + Y_i Y_{i+1}) + Σ B_i Z_i.
/// Couplings and fields are kept as separate 2-site and 1-site terms.
inline LocalHamiltonian build_xx(int n, const std::vector<double>& J, const std::vector<double>& B, bool periodic) {
  if (n < 2) throw ValidationError("XX chain needs n >= 2");
  if (static_cast<int>(J.size()) != n || static_cast<int>(B.size()) != n)
    throw ValidationError("XX chain: J and B must both have length n = " + std::to_string(n));
  LocalHamiltonian h;
  h.n = n;
  const int bonds = periodic ? n : n - 1;
  for (int i = 0; i < bonds; ++i) {
    const int a = i, b = (i + 1) % n;
    PauliString xx{{{a, Pauli::X}, {b, Pauli::X}}, J[i]};
    PauliString yy{{{a, Pauli::Y}, {b, Pauli::Y}}, J[i]};
    h.terms.push_back(LocalTerm::from_paulis({std::min(a, b), std::max(a, b)}, {xx, yy}));
  }
  for (int i = 0; i < n; ++i) h.terms.push_back(LocalTerm::from_paulis({i}, {PauliString{{{i, Pauli::Z}}, B[i]}}));
  return h;
}

inline LocalHamiltonian build_xx(int n, double J, double B, bool periodic = true) {
  return build_xx(n, std::vector<double>(n, J), std::vector<double>(n, B), periodic);
}

// Couplings J_i = i mod 3 with uniform field: decoupled interacting triplets.
inline LocalHamiltonian build_xx_triplets(int n, double B = 1.0) {
  std::vector<double> J(n);
  for (int i = 0; i < n; ++i) J[i] = static_cast<double>(i % 3);
  return build_xx(n, J, std::vector<double>(n, B), true);
}

/// Σ_{(i,j)∈edges} J_e Z_i Z_j + Σ B_i Z_i.
inline LocalHamiltonian build_zz_graph(int n, const std::vector<std::pair<int, int>>& edges, const std::vector<double>& J,
                                       const std::vector<double>& B = {}) {
  if (J.size() != edges.size()) throw ValidationError("zz_graph: one coupling per edge required");
  if (!B.empty() && static_cast<int>(B.size()) != n) throw ValidationError("zz_graph: B must have length n");
  LocalHamiltonian h;
  h.n = n;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    auto [a, b] = edges[e];
    if (a == b || a < 0 || b < 0 || a >= n || b >= n) throw ValidationError("zz_graph: bad edge");
    PauliString zz{{{a, Pauli::Z}, {b, Pauli::Z}}, J[e]};
    h.terms.push_back(LocalTerm::from_paulis({std::min(a, b), std::max(a, b)}, {zz}));
  }
  for (int i = 0; i < static_cast<int>(B.size()); ++i)
    h.terms.push_back(LocalTerm::from_paulis({i}, {PauliString{{{i, Pauli::Z}}, B[i]}}));
  h.validate();
  return h;
}

// Groups explicit Pauli strings into one LocalTerm per distinct support.
inline LocalHamiltonian build_custom(int n, const std::vector<PauliString>& strings) {
  std::map<Subset, std::vector<PauliString>> by_support;
  for (const auto& ps : strings) {
    if (ps.site_ops.empty()) continue;  // constant shift, no support
    by_support[ps.support()].push_back(ps);
  }
  LocalHamiltonian h;
  h.n = n;
  for (const auto& [support, group] : by_support) h.terms.push_back(LocalTerm::from_paulis(support, group));
  h.validate();
  return h;
}

inline constexpr int kMaxDenseTermQubits = 4;

/// Smallest eigenvalue of a single term, the fallback for terms that no
/// constraint supports.
inline double term_min_eigenvalue(const LocalTerm& t) {
  if (static_cast<int>(t.support.size()) > kMaxDenseTermQubits)
    throw ValidationError("term support too large for dense eigendecomposition: " + subset_to_string(t.support));
  Eigen::SelfAdjointEigenSolver<CMatrix> es(t.matrix, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

inline Eigen::SparseMatrix<Complex> assemble_sparse(const LocalHamiltonian& h) {
  const std::uint64_t dim = std::uint64_t{1} << h.n;
  Subset all(h.n);
  for (int q = 0; q < h.n; ++q) all[q] = q;
  std::vector<Eigen::Triplet<Complex>> trips;
  for (const auto& t : h.terms) {
    const SubsystemIndex idx(t.support, all);
    for (std::uint64_t col = 0; col < dim; ++col) {
      const std::uint64_t a = idx.extract(col);
      const std::uint64_t base = idx.rest(col);
      for (Eigen::Index ap = 0; ap < t.matrix.rows(); ++ap) {
        const Complex v = t.matrix(ap, static_cast<Eigen::Index>(a));
        if (v != Complex(0.0, 0.0))
          trips.emplace_back(static_cast<int>(base | idx.scatter(ap)), static_cast<int>(col), v);
      }
    }
  }
  Eigen::SparseMatrix<Complex> H(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  H.setFromTriplets(trips.begin(), trips.end());
  return H;
}

// Lowest eigenvalue by Lanczos with full reorthogonalization.
inline double lanczos_min_eigenvalue(const Eigen::SparseMatrix<Complex>& H, int max_steps = 400, double tol = 1e-13) {
  const Eigen::Index dim = H.rows();
  std::mt19937_64 rng(12345);
  std::normal_distribution<double> nd;
  CVector v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) v[i] = Complex(nd(rng), nd(rng));
  v.normalize();
  std::vector<CVector> basis{v};
  std::vector<double> alpha, beta;
  double previous = std::numeric_limits<double>::infinity();
  const int steps = static_cast<int>(std::min<Eigen::Index>(max_steps, dim));
  for (int k = 0; k < steps; ++k) {
    CVector w = H * basis.back();
    alpha.push_back(basis.back().dot(w).real());
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& b : basis) w -= b.dot(w) * b;
    const double bnorm = w.norm();
    const auto m = static_cast<Eigen::Index>(alpha.size());
    Matrix T = Matrix::Zero(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
      T(i, i) = alpha[i];
      if (i + 1 < m) T(i, i + 1) = T(i + 1, i) = beta[i];
    }
    const double current = Eigen::SelfAdjointEigenSolver<Matrix>(T, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
    if (bnorm < 1e-12 || std::abs(current - previous) < tol * std::max(1.0, std::abs(current))) return current;
    previous = current;
    beta.push_back(bnorm);
    basis.push_back(w / bnorm);
  }
  return previous;
}

inline constexpr int kMaxExactQubits = 12;

/// Ground-state energy of the full 2^n Hamiltonian (dense up to 10 qubits,
/// Lanczos above).
inline double exact_ground_energy(const LocalHamiltonian& h) {
  if (h.n > kMaxExactQubits) throw ValidationError("exact diagonalization limited to n <= 12");
  h.validate();
  const auto H = assemble_sparse(h);
  if (h.n <= 10) {
    const CMatrix dense(H);
    return Eigen::SelfAdjointEigenSolver<CMatrix>(dense, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
  }
  return lanczos_min_eigenvalue(H);
}

// Σ_i min σ(H_i): the value of the trivial relaxation.
inline double sum_of_term_minima(const LocalHamiltonian& h) {
  double s = 0.0;
  for (const auto& t : h.terms) s += term_min_eigenvalue(t);
  return s;
}

}  // namespace qcert
