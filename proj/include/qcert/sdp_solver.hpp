#pragma once

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <Eigen/Sparse>

#include "qcert/common.hpp"

namespace qcert {

using SparseSym = Eigen::SparseMatrix<double>;

/// Linear constraint ⟨A, X⟩ = rhs. A is block diagonal; only the blocks it
/// touches are stored, each as a full (both triangles) symmetric sparse matrix.
struct SdpConstraint {
  std::vector<std::pair<int, SparseSym>> parts;
  double rhs = 0.0;
};

/// min ⟨C, X⟩  s.t. ⟨A_i, X⟩ = b_i, X ⪰ 0, with X block diagonal.
struct SdpProblem {
  std::vector<int> block_dims;
  std::vector<Matrix> objective;  // one symmetric matrix per block
  std::vector<SdpConstraint> constraints;

  int num_blocks() const { return static_cast<int>(block_dims.size()); }
  int num_constraints() const { return static_cast<int>(constraints.size()); }

  void validate() const {
    if (objective.size() != block_dims.size()) throw ValidationError("SDP: one objective block per variable block required");
    if (constraints.empty()) throw ValidationError("SDP: at least one constraint required");
    for (std::size_t b = 0; b < block_dims.size(); ++b) {
      if (block_dims[b] < 1 || block_dims[b] > 512) throw ValidationError("SDP: block dimension must be in [1,512]");
      if (objective[b].rows() != block_dims[b] || objective[b].cols() != block_dims[b])
        throw ValidationError("SDP: objective block " + std::to_string(b) + " has wrong shape");
      if ((objective[b] - objective[b].transpose()).cwiseAbs().maxCoeff() > 1e-12)
        throw ValidationError("SDP: objective block " + std::to_string(b) + " is not symmetric");
    }
    for (std::size_t i = 0; i < constraints.size(); ++i) {
      for (const auto& [b, a] : constraints[i].parts) {
        if (b < 0 || b >= num_blocks()) throw ValidationError("SDP: constraint " + std::to_string(i) + " references a missing block");
        if (a.rows() != block_dims[b] || a.cols() != block_dims[b])
          throw ValidationError("SDP: constraint " + std::to_string(i) + " has a wrongly shaped block");
        const SparseSym diff = a - SparseSym(a.transpose());
        for (int k = 0; k < diff.outerSize(); ++k)
          for (SparseSym::InnerIterator it(diff, k); it; ++it)
            if (std::abs(it.value()) > 1e-12) throw ValidationError("SDP: constraint " + std::to_string(i) + " is not symmetric");
      }
    }
  }
};

struct Tolerances {
  double feas = 1e-8;
  double gap = 1e-7;
};

struct SolverOptions {
  Tolerances tol;
  int max_iter = 200;
  bool prescan = true;
  std::ostream* trace_csv = nullptr;  // iteration trace when non-null
};

enum class SolveStatus { Optimal, NearOptimal, Failed };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::NearOptimal: return "near_optimal";
    case SolveStatus::Failed: return "failed";
  }
  return "?";
}

struct IterationRecord {
  int iter = 0;
  double mu = 0, primal_res = 0, dual_res = 0, gap = 0, primal_obj = 0, dual_obj = 0;
};

struct SdpSolution {
  std::vector<Matrix> X;
  std::vector<Matrix> Z;
  Vector y;
  double primal_obj = 0.0;
  double dual_obj = 0.0;
  double gap = 0.0;  // primal_obj - dual_obj
  double primal_res = 0.0;
  double dual_res = 0.0;
  int iterations = 0;
  SolveStatus status = SolveStatus::Failed;
  std::string stop_reason;
  std::vector<IterationRecord> history;
};

using BlockMatrices = std::vector<Matrix>;

inline double inner(const BlockMatrices& a, const BlockMatrices& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k].cwiseProduct(b[k]).sum();
  return s;
}

inline double frobenius(const BlockMatrices& a) { return std::sqrt(inner(a, a)); }

inline double sparse_inner(const SparseSym& a, const Matrix& m) {
  double s = 0.0;
  for (int k = 0; k < a.outerSize(); ++k)
    for (SparseSym::InnerIterator it(a, k); it; ++it) s += it.value() * m(it.row(), it.col());
  return s;
}

/// A(X)_i = ⟨A_i, X⟩.
inline Vector apply_constraints(const SdpProblem& p, const BlockMatrices& X) {
  Vector out(p.num_constraints());
  for (int i = 0; i < p.num_constraints(); ++i) {
    double s = 0.0;
    for (const auto& [b, a] : p.constraints[i].parts) s += sparse_inner(a, X[b]);
    out[i] = s;
  }
  return out;
}

/// Σ_i y_i A_i.
inline BlockMatrices apply_adjoint(const SdpProblem& p, const Vector& y) {
  BlockMatrices out;
  for (int d : p.block_dims) out.push_back(Matrix::Zero(d, d));
  for (int i = 0; i < p.num_constraints(); ++i) {
    if (y[i] == 0.0) continue;
    for (const auto& [b, a] : p.constraints[i].parts) out[b] += y[i] * Matrix(a);
  }
  return out;
}

/// Z = C - Σ y_i A_i, evaluated exactly from the problem data.
inline BlockMatrices dual_slack(const SdpProblem& p, const Vector& y) {
  BlockMatrices z = apply_adjoint(p, y);
  for (std::size_t b = 0; b < z.size(); ++b) z[b] = p.objective[b] - z[b];
  return z;
}

inline double min_eigenvalue(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
  return es.eigenvalues().minCoeff();
}

/// λ_min(M) >= -eps. Falls back to a shifted Cholesky when the eigensolver fails.
inline bool min_eig_check(const Matrix& m, double eps) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  if (es.info() == Eigen::Success) return es.eigenvalues().minCoeff() >= -eps;
  Eigen::LLT<Matrix> llt(m + eps * Matrix::Identity(m.rows(), m.cols()));
  return llt.info() == Eigen::Success;
}

namespace detail {

// Largest α with M + αΔ ⪰ 0, given the Cholesky factor L of M.
inline double max_step(const Matrix& L, const Matrix& delta) {
  const auto tri = L.triangularView<Eigen::Lower>();
  Matrix t = tri.solve(delta);
  t = tri.solve(Matrix(t.transpose()));
  t = (0.5 * (t + t.transpose())).eval();
  const double lmin = min_eigenvalue(t);
  if (lmin >= 0.0) return std::numeric_limits<double>::infinity();
  return -1.0 / lmin;
}

struct NtScaling {
  Matrix G;      // W = G Gᵀ
  Matrix Ginv;
  Matrix W;
  Vector sigma;  // scaled point G⁻¹XG⁻ᵀ = GᵀZG = diag(sigma)
  Matrix Lx, Lz;
};

inline bool nt_scaling(const Matrix& X, const Matrix& Z, NtScaling& out) {
  Eigen::LLT<Matrix> cx(X), cz(Z);
  if (cx.info() != Eigen::Success || cz.info() != Eigen::Success) return false;
  out.Lx = cx.matrixL();
  out.Lz = cz.matrixL();
  Eigen::JacobiSVD<Matrix> svd(out.Lz.transpose() * out.Lx, Eigen::ComputeFullU | Eigen::ComputeFullV);
  out.sigma = svd.singularValues();
  if (out.sigma.minCoeff() <= 0.0) return false;
  const Vector isq = out.sigma.cwiseSqrt().cwiseInverse();
  out.G = out.Lx * svd.matrixV() * isq.asDiagonal();
  const Matrix LxInv = out.Lx.triangularView<Eigen::Lower>().solve(Matrix::Identity(X.rows(), X.cols()));
  out.Ginv = out.sigma.cwiseSqrt().asDiagonal() * svd.matrixV().transpose() * LxInv;
  out.W = out.G * out.G.transpose();
  out.W = (0.5 * (out.W + out.W.transpose())).eval();
  return true;
}

struct Prescan {
  std::vector<int> kept;  // original indices of retained rows
};

// Drops exact duplicate rows and rejects any other linear dependence.
inline Prescan prescan_constraints(const SdpProblem& p) {
  const int m = p.num_constraints();
  std::vector<int> offsets(p.num_blocks() + 1, 0);
  for (int b = 0; b < p.num_blocks(); ++b) offsets[b + 1] = offsets[b] + p.block_dims[b] * p.block_dims[b];
  std::vector<Eigen::Triplet<double>> trips;
  for (int i = 0; i < m; ++i)
    for (const auto& [b, a] : p.constraints[i].parts)
      for (int k = 0; k < a.outerSize(); ++k)
        for (SparseSym::InnerIterator it(a, k); it; ++it)
          if (it.value() != 0.0) trips.emplace_back(i, offsets[b] + static_cast<int>(it.row()) * p.block_dims[b] + static_cast<int>(it.col()), it.value());
  Eigen::SparseMatrix<double, Eigen::RowMajor> rows(m, offsets.back());
  rows.setFromTriplets(trips.begin(), trips.end());
  rows.makeCompressed();

  // exact duplicates
  std::map<std::vector<std::pair<int, double>>, int> seen;
  Prescan out;
  for (int i = 0; i < m; ++i) {
    std::vector<std::pair<int, double>> key;
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(rows, i); it; ++it) key.emplace_back(static_cast<int>(it.col()), it.value());
    if (key.empty()) throw SolverError("constraint row " + std::to_string(i) + " is identically zero");
    auto [pos, inserted] = seen.emplace(key, i);
    if (!inserted) {
      if (std::abs(p.constraints[pos->second].rhs - p.constraints[i].rhs) > 1e-12)
        throw SolverError("constraint rows " + std::to_string(pos->second) + " and " + std::to_string(i) + " are identical with different right-hand sides");
      continue;
    }
    out.kept.push_back(i);
  }

  // pivoted Cholesky on the normalized Gram matrix of the kept rows
  const int r = static_cast<int>(out.kept.size());
  Eigen::SparseMatrix<double, Eigen::RowMajor> sub(r, offsets.back());
  {
    std::vector<Eigen::Triplet<double>> st;
    for (int k = 0; k < r; ++k)
      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(rows, out.kept[k]); it; ++it) st.emplace_back(k, static_cast<int>(it.col()), it.value());
    sub.setFromTriplets(st.begin(), st.end());
  }
  Matrix gram = Matrix(sub * sub.transpose());
  const Vector d = gram.diagonal().cwiseSqrt().cwiseInverse();
  gram = d.asDiagonal() * gram * d.asDiagonal();
  std::vector<int> perm(r);
  for (int k = 0; k < r; ++k) perm[k] = k;
  Matrix L = Matrix::Zero(r, r);
  Vector diag = gram.diagonal();
  std::vector<int> dependent;
  for (int k = 0; k < r; ++k) {
    int best = k;
    for (int j = k + 1; j < r; ++j)
      if (diag[perm[j]] > diag[perm[best]]) best = j;
    std::swap(perm[k], perm[best]);
    const int pk = perm[k];
    if (diag[pk] < 1e-10) {
      for (int j = k; j < r; ++j) dependent.push_back(out.kept[perm[j]]);
      break;
    }
    const double lkk = std::sqrt(diag[pk]);
    L(pk, k) = lkk;
    for (int j = k + 1; j < r; ++j) {
      const int pj = perm[j];
      double s = gram(pj, pk);
      for (int t = 0; t < k; ++t) s -= L(pj, t) * L(pk, t);
      L(pj, k) = s / lkk;
      diag[pj] -= L(pj, k) * L(pj, k);
    }
  }
  if (!dependent.empty()) {
    std::sort(dependent.begin(), dependent.end());
    std::string msg = "rank-deficient constraint system; dependent rows:";
    for (int i : dependent) msg += " " + std::to_string(i);
    throw SolverError(msg);
  }
  return out;
}

}  // namespace detail

/// Primal–dual path-following interior-point method with Nesterov–Todd
/// scaling and a Mehrotra predictor–corrector. Infeasible start from scaled
/// identities, y = 0.
inline SdpSolution solve(const SdpProblem& problem_in, const SolverOptions& opts = {}) {
  problem_in.validate();
  std::vector<int> kept;
  SdpProblem reduced;
  const SdpProblem* pp = &problem_in;
  if (opts.prescan) {
    kept = detail::prescan_constraints(problem_in).kept;
    if (static_cast<int>(kept.size()) != problem_in.num_constraints()) {
      reduced.block_dims = problem_in.block_dims;
      reduced.objective = problem_in.objective;
      for (int i : kept) reduced.constraints.push_back(problem_in.constraints[i]);
      pp = &reduced;
    } else {
      kept.clear();
    }
  }
  const SdpProblem& p = *pp;
  const int nb = p.num_blocks();
  const int m = p.num_constraints();
  int N = 0;
  for (int d : p.block_dims) N += d;

  Vector b(m);
  for (int i = 0; i < m; ++i) b[i] = p.constraints[i].rhs;
  const double bnorm = b.norm();
  const double cnorm = frobenius(p.objective);

  // constraints touching each block
  std::vector<std::vector<std::pair<int, const SparseSym*>>> touching(nb);
  for (int i = 0; i < m; ++i)
    for (const auto& [blk, a] : p.constraints[i].parts) touching[blk].emplace_back(i, &a);

  BlockMatrices X(nb), Z(nb);
  for (int blk = 0; blk < nb; ++blk) {
    const double d = p.block_dims[blk];
    double amax = 0.0, ratio = 0.0;
    for (const auto& [i, a] : touching[blk]) {
      const double an = a->norm();
      amax = std::max(amax, an);
      ratio = std::max(ratio, (1.0 + std::abs(b[i])) / (1.0 + an));
    }
    const double xi = std::max({10.0, std::sqrt(d), d * ratio});
    const double eta = std::max({10.0, std::sqrt(d), amax, p.objective[blk].norm()});
    X[blk] = xi * Matrix::Identity(p.block_dims[blk], p.block_dims[blk]);
    Z[blk] = eta * Matrix::Identity(p.block_dims[blk], p.block_dims[blk]);
  }
  Vector y = Vector::Zero(m);

  SdpSolution sol;
  BlockMatrices bestX = X, bestZ = Z;
  Vector besty = y;
  double best_merit = std::numeric_limits<double>::infinity();
  IterationRecord best_rec;
  bool converged = false;

  if (opts.trace_csv) *opts.trace_csv << "iter,mu,primal_res,dual_res,gap,primal_obj,dual_obj\n";

  std::vector<detail::NtScaling> nt(nb);
  for (int iter = 0; iter <= opts.max_iter; ++iter) {
    const Vector rp = b - apply_constraints(p, X);
    BlockMatrices Rd = apply_adjoint(p, y);
    for (int blk = 0; blk < nb; ++blk) Rd[blk] = p.objective[blk] - Z[blk] - Rd[blk];
    IterationRecord rec;
    rec.iter = iter;
    rec.primal_obj = inner(p.objective, X);
    rec.dual_obj = b.dot(y);
    rec.gap = rec.primal_obj - rec.dual_obj;
    rec.mu = inner(X, Z) / N;
    rec.primal_res = rp.norm() / (1.0 + bnorm);
    rec.dual_res = frobenius(Rd) / (1.0 + cnorm);
    sol.history.push_back(rec);
    if (opts.trace_csv)
      *opts.trace_csv << rec.iter << "," << rec.mu << "," << rec.primal_res << "," << rec.dual_res << "," << rec.gap << ","
                      << rec.primal_obj << "," << rec.dual_obj << "\n";

    const double rel_gap = std::abs(rec.gap) / (1.0 + std::abs(rec.primal_obj) + std::abs(rec.dual_obj));
    const double merit = std::max({rec.primal_res, rec.dual_res, rel_gap});
    if (merit < best_merit) {
      best_merit = merit;
      bestX = X;
      bestZ = Z;
      besty = y;
      best_rec = rec;
    }
    if (rec.primal_res <= opts.tol.feas && rec.dual_res <= opts.tol.feas && std::abs(rec.gap) <= opts.tol.gap) {
      converged = true;
      sol.stop_reason = "converged";
      break;
    }
    if (iter == opts.max_iter) {
      sol.stop_reason = "iteration limit";
      break;
    }

    bool ok = true;
    for (int blk = 0; blk < nb && ok; ++blk) ok = detail::nt_scaling(X[blk], Z[blk], nt[blk]);
    if (!ok) {
      sol.stop_reason = "iterate lost positive definiteness";
      break;
    }

    // Schur complement M_ij = ⟨A_i, W A_j W⟩
    Matrix M = Matrix::Zero(m, m);
    for (int blk = 0; blk < nb; ++blk) {
      const Matrix& W = nt[blk].W;
      for (std::size_t jj = 0; jj < touching[blk].size(); ++jj) {
        const auto [j, aj] = touching[blk][jj];
        const Matrix B = (W * (*aj)) * W;
        for (std::size_t ii = 0; ii <= jj; ++ii) {
          const auto [i, ai] = touching[blk][ii];
          const double v = sparse_inner(*ai, B);
          M(i, j) += v;
          if (i != j) M(j, i) += v;
        }
      }
    }
    Eigen::LLT<Matrix> schur(M);
    if (schur.info() != Eigen::Success) {
      // ill-conditioned near the optimum: shift the diagonal and refine below
      const double scale = std::max(M.diagonal().cwiseAbs().maxCoeff(), 1e-300);
      for (double shift = 1e-15; shift <= 1e-6; shift *= 10.0) {
        schur.compute(M + shift * scale * Matrix::Identity(m, m));
        if (schur.info() == Eigen::Success) break;
      }
      if (schur.info() != Eigen::Success) {
        sol.stop_reason = "singular Schur complement";
        break;
      }
    }
    auto solve_schur = [&](const Vector& r) -> Vector {
      Vector x = schur.solve(r);
      for (int k = 0; k < 2; ++k) x += schur.solve(r - M * x);
      return x;
    };

    // direction for a given complementarity right-hand side Rc (ΔX + WΔZW = Rc)
    auto direction = [&](const BlockMatrices& Rc, BlockMatrices& dX, Vector& dy, BlockMatrices& dZ) {
      BlockMatrices tmp(nb);
      for (int blk = 0; blk < nb; ++blk) tmp[blk] = Rc[blk] - nt[blk].W * Rd[blk] * nt[blk].W;
      dy = solve_schur(rp - apply_constraints(p, tmp));
      dZ = apply_adjoint(p, dy);
      dX.resize(nb);
      for (int blk = 0; blk < nb; ++blk) {
        dZ[blk] = Rd[blk] - dZ[blk];
        dX[blk] = Rc[blk] - nt[blk].W * dZ[blk] * nt[blk].W;
        dX[blk] = (0.5 * (dX[blk] + dX[blk].transpose())).eval();
      }
    };
    auto step_limits = [&](const BlockMatrices& dX, const BlockMatrices& dZ, double& ap, double& ad) {
      ap = ad = std::numeric_limits<double>::infinity();
      for (int blk = 0; blk < nb; ++blk) {
        ap = std::min(ap, detail::max_step(nt[blk].Lx, dX[blk]));
        ad = std::min(ad, detail::max_step(nt[blk].Lz, dZ[blk]));
      }
    };

    // predictor
    BlockMatrices Rc(nb), dXa, dZa, dX, dZ;
    Vector dya, dy;
    for (int blk = 0; blk < nb; ++blk) Rc[blk] = -X[blk];
    direction(Rc, dXa, dya, dZa);
    double apa, ada;
    step_limits(dXa, dZa, apa, ada);
    apa = std::min(1.0, apa);
    ada = std::min(1.0, ada);
    double mu_aff = 0.0;
    for (int blk = 0; blk < nb; ++blk) mu_aff += (X[blk] + apa * dXa[blk]).cwiseProduct(Z[blk] + ada * dZa[blk]).sum();
    mu_aff /= N;
    const double sigma = std::clamp(std::pow(std::max(mu_aff, 0.0) / rec.mu, 3.0), 0.0, 1.0);

    // corrector with the second-order term in the scaled space
    for (int blk = 0; blk < nb; ++blk) {
      const auto& s = nt[blk];
      const Matrix dxs = s.Ginv * dXa[blk] * s.Ginv.transpose();
      const Matrix dzs = s.G.transpose() * dZa[blk] * s.G;
      Matrix rhs = -0.5 * (dxs * dzs + dzs * dxs);
      rhs.diagonal().array() += sigma * rec.mu;
      rhs.diagonal().array() -= s.sigma.array().square();
      Matrix D(rhs.rows(), rhs.cols());
      for (Eigen::Index r = 0; r < rhs.rows(); ++r)
        for (Eigen::Index c = 0; c < rhs.cols(); ++c) D(r, c) = 2.0 * rhs(r, c) / (s.sigma[r] + s.sigma[c]);
      Rc[blk] = s.G * D * s.G.transpose();
      Rc[blk] = (0.5 * (Rc[blk] + Rc[blk].transpose())).eval();
    }
    direction(Rc, dX, dy, dZ);
    double ap, ad;
    step_limits(dX, dZ, ap, ad);
    const double tau = 0.9 + 0.09 * std::min({1.0, apa, ada});
    ap = std::min(1.0, tau * ap);
    ad = std::min(1.0, tau * ad);
    if (ap < 1e-12 && ad < 1e-12) {
      sol.stop_reason = "step length vanished";
      break;
    }
    for (int blk = 0; blk < nb; ++blk) {
      X[blk] += ap * dX[blk];
      Z[blk] += ad * dZ[blk];
      X[blk] = (0.5 * (X[blk] + X[blk].transpose())).eval();
      Z[blk] = (0.5 * (Z[blk] + Z[blk].transpose())).eval();
    }
    y += ad * dy;
    sol.iterations = iter + 1;
  }

  if (converged) {
    bestX = X;
    bestZ = Z;
    besty = y;
    best_rec = sol.history.back();
  }
  sol.X = std::move(bestX);
  sol.Z = std::move(bestZ);
  sol.primal_obj = best_rec.primal_obj;
  sol.dual_obj = best_rec.dual_obj;
  sol.gap = best_rec.gap;
  sol.primal_res = best_rec.primal_res;
  sol.dual_res = best_rec.dual_res;
  if (converged) {
    sol.status = SolveStatus::Optimal;
  } else {
    const double rel_gap = std::abs(sol.gap) / (1.0 + std::abs(sol.primal_obj) + std::abs(sol.dual_obj));
    sol.status = (std::max(sol.primal_res, sol.dual_res) <= 1e-6 && rel_gap <= 1e-6) ? SolveStatus::NearOptimal : SolveStatus::Failed;
  }
  if (kept.empty()) {
    sol.y = std::move(besty);
  } else {
    sol.y = Vector::Zero(problem_in.num_constraints());
    for (std::size_t k = 0; k < kept.size(); ++k) sol.y[kept[k]] = besty[static_cast<Eigen::Index>(k)];
  }
  return sol;
}

// ---------------------------------------------------------------------------
// Canonical plain-text dump. Indices are 0-based; only the upper triangle
// (row <= col) of each symmetric block is written.
//
//   qcert-sdp 1
//   blocks <nb>
//   <d_0> ... <d_{nb-1}>
//   constraints <m>
//   objective
//   <block> <row> <col> <value>
//   end
//   constraint <i> <rhs>
//   <block> <row> <col> <value>
//   end
// ---------------------------------------------------------------------------

inline void write_dump(std::ostream& os, const SdpProblem& p) {
  os.precision(17);
  os << "qcert-sdp 1\n" << "blocks " << p.num_blocks() << "\n";
  for (int b = 0; b < p.num_blocks(); ++b) os << (b ? " " : "") << p.block_dims[b];
  os << "\nconstraints " << p.num_constraints() << "\nobjective\n";
  for (int b = 0; b < p.num_blocks(); ++b)
    for (int r = 0; r < p.block_dims[b]; ++r)
      for (int c = r; c < p.block_dims[b]; ++c)
        if (p.objective[b](r, c) != 0.0) os << b << " " << r << " " << c << " " << p.objective[b](r, c) << "\n";
  os << "end\n";
  for (int i = 0; i < p.num_constraints(); ++i) {
    os << "constraint " << i << " " << p.constraints[i].rhs << "\n";
    for (const auto& [b, a] : p.constraints[i].parts)
      for (int k = 0; k < a.outerSize(); ++k)
        for (SparseSym::InnerIterator it(a, k); it; ++it)
          if (it.row() <= it.col() && it.value() != 0.0) os << b << " " << it.row() << " " << it.col() << " " << it.value() << "\n";
    os << "end\n";
  }
}

inline SdpProblem read_dump(std::istream& is) {
  auto fail = [](const std::string& what) { throw ValidationError("SDP dump: " + what); };
  std::string tag;
  int version = 0;
  if (!(is >> tag >> version) || tag != "qcert-sdp" || version != 1) fail("bad header");
  int nb = 0, m = 0;
  if (!(is >> tag >> nb) || tag != "blocks" || nb < 1) fail("bad block count");
  SdpProblem p;
  p.block_dims.resize(nb);
  for (int& d : p.block_dims)
    if (!(is >> d) || d < 1) fail("bad block dimension");
  if (!(is >> tag >> m) || tag != "constraints" || m < 1) fail("bad constraint count");
  for (int d : p.block_dims) p.objective.push_back(Matrix::Zero(d, d));

  using Entry = std::tuple<int, int, int, double>;
  auto read_entries = [&](std::vector<Entry>& out) {
    std::string line;
    std::getline(is, line);
    while (std::getline(is, line)) {
      if (line == "end") return;
      std::istringstream ls(line);
      Entry e;
      if (!(ls >> std::get<0>(e) >> std::get<1>(e) >> std::get<2>(e) >> std::get<3>(e))) fail("bad entry \"" + line + "\"");
      const auto [b, r, c, v] = e;
      if (b < 0 || b >= nb || r < 0 || c < 0 || r >= p.block_dims[b] || c >= p.block_dims[b]) fail("entry out of range \"" + line + "\"");
      out.push_back(e);
    }
    fail("missing end");
  };

  if (!(is >> tag) || tag != "objective") fail("missing objective");
  std::vector<Entry> entries;
  read_entries(entries);
  for (const auto& [b, r, c, v] : entries) {
    p.objective[b](r, c) = v;
    p.objective[b](c, r) = v;
  }
  for (int i = 0; i < m; ++i) {
    int idx = 0;
    double rhs = 0.0;
    if (!(is >> tag >> idx >> rhs) || tag != "constraint" || idx != i) fail("bad constraint header " + std::to_string(i));
    entries.clear();
    read_entries(entries);
    std::map<int, std::vector<Eigen::Triplet<double>>> by_block;
    for (const auto& [b, r, c, v] : entries) {
      by_block[b].emplace_back(r, c, v);
      if (r != c) by_block[b].emplace_back(c, r, v);
    }
    SdpConstraint con;
    con.rhs = rhs;
    for (auto& [b, trips] : by_block) {
      SparseSym a(p.block_dims[b], p.block_dims[b]);
      a.setFromTriplets(trips.begin(), trips.end());
      con.parts.emplace_back(b, std::move(a));
    }
    p.constraints.push_back(std::move(con));
  }
  return p;
}

}  // namespace qcert
