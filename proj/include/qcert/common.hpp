#pragma once

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace qcert {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

/// Sorted list of distinct qubit indices.
using Subset = std::vector<int>;

// Input that violates a documented precondition (bad config, bad subset,
// dimension mismatch). The CLI maps it to exit code 2.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Numerical failure inside the SDP machinery. The CLI maps it to exit code 3.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline bool is_subset(const Subset& inner, const Subset& outer) {
  std::size_t j = 0;
  for (int q : inner) {
    while (j < outer.size() && outer[j] < q) ++j;
    if (j == outer.size() || outer[j] != q) return false;
    ++j;
  }
  return true;
}

inline Subset intersect(const Subset& a, const Subset& b) {
  Subset out;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] < b[j]) {
      ++i;
    } else if (b[j] < a[i]) {
      ++j;
    } else {
      out.push_back(a[i]);
      ++i;
      ++j;
    }
  }
  return out;
}

inline std::string subset_to_string(const Subset& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

}  // namespace qcert
