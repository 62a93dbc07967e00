#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "qcert/common.hpp"

namespace qcert {

/// Fully connected network with ReLU between layers and a linear output.
class QNetwork {
 public:
  QNetwork() = default;

  explicit QNetwork(std::vector<int> dims) : dims_(std::move(dims)) {
    if (dims_.size() < 2) throw ValidationError("network needs at least an input and an output layer");
    for (int d : dims_)
      if (d < 1) throw ValidationError("layer sizes must be positive");
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      W_.push_back(Matrix::Zero(dims_[l + 1], dims_[l]));
      b_.push_back(Vector::Zero(dims_[l + 1]));
    }
  }

  /// Layer sizes [s, 3s, 2a, 2a, a] for s state bits and a = s + 1 actions.
  static std::vector<int> standard_dims(int s) {
    const int a = s + 1;
    return {s, 3 * s, 2 * a, 2 * a, a};
  }

  void init_uniform(std::mt19937_64& rng) {
    for (std::size_t l = 0; l < W_.size(); ++l) {
      const double r = 1.0 / std::sqrt(static_cast<double>(W_[l].cols()));
      std::uniform_real_distribution<double> u(-r, r);
      for (Eigen::Index k = 0; k < W_[l].size(); ++k) W_[l].data()[k] = u(rng);
      for (Eigen::Index k = 0; k < b_[l].size(); ++k) b_[l][k] = u(rng);
    }
  }

  const std::vector<int>& dims() const { return dims_; }
  int input_size() const { return dims_.front(); }
  int output_size() const { return dims_.back(); }
  std::size_t num_layers() const { return W_.size(); }
  Matrix& weight(std::size_t l) { return W_[l]; }
  Vector& bias(std::size_t l) { return b_[l]; }
  const Matrix& weight(std::size_t l) const { return W_[l]; }
  const Vector& bias(std::size_t l) const { return b_[l]; }

  /// Columns of `in` are samples.
  Matrix forward(const Matrix& in) const {
    Matrix a = in;
    for (std::size_t l = 0; l < W_.size(); ++l) {
      Matrix z = (W_[l] * a).colwise() + b_[l];
      a = l + 1 < W_.size() ? Matrix(z.cwiseMax(0.0)) : z;
    }
    return a;
  }

  Vector forward(const Vector& x) const { return forward(Matrix(x)).col(0); }

  std::size_t num_parameters() const {
    std::size_t k = 0;
    for (std::size_t l = 0; l < W_.size(); ++l) k += W_[l].size() + b_[l].size();
    return k;
  }

  /// Weights then bias per layer, column-major.
  Vector parameters() const {
    Vector out(static_cast<Eigen::Index>(num_parameters()));
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < W_.size(); ++l) {
      out.segment(k, W_[l].size()) = Eigen::Map<const Vector>(W_[l].data(), W_[l].size());
      k += W_[l].size();
      out.segment(k, b_[l].size()) = b_[l];
      k += b_[l].size();
    }
    return out;
  }

  void set_parameters(const Vector& p) {
    if (static_cast<std::size_t>(p.size()) != num_parameters()) throw ValidationError("parameter vector has the wrong length");
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < W_.size(); ++l) {
      Eigen::Map<Vector>(W_[l].data(), W_[l].size()) = p.segment(k, W_[l].size());
      k += W_[l].size();
      b_[l] = p.segment(k, b_[l].size());
      k += b_[l].size();
    }
  }

  /// L = 1/(2B) Σ_j (Q(x_j)[a_j] - t_j)² and its gradient, by backpropagation.
  double loss_and_gradient(const Matrix& in, const std::vector<int>& actions, const Vector& targets, Vector* grad) const {
    const Eigen::Index B = in.cols();
    std::vector<Matrix> acts{in}, pre;
    for (std::size_t l = 0; l < W_.size(); ++l) {
      Matrix z = (W_[l] * acts.back()).colwise() + b_[l];
      pre.push_back(z);
      acts.push_back(l + 1 < W_.size() ? Matrix(z.cwiseMax(0.0)) : z);
    }
    Matrix delta = Matrix::Zero(output_size(), B);
    double loss = 0.0;
    for (Eigen::Index j = 0; j < B; ++j) {
      const double e = acts.back()(actions[j], j) - targets[j];
      loss += 0.5 * e * e;
      delta(actions[j], j) = e / static_cast<double>(B);
    }
    loss /= static_cast<double>(B);
    if (!grad) return loss;

    std::vector<Matrix> gW(W_.size());
    std::vector<Vector> gb(W_.size());
    for (std::size_t l = W_.size(); l-- > 0;) {
      gW[l] = delta * acts[l].transpose();
      gb[l] = delta.rowwise().sum();
      if (l > 0) {
        delta = W_[l].transpose() * delta;
        delta = delta.cwiseProduct(Matrix((pre[l - 1].array() > 0.0).cast<double>()));
      }
    }
    grad->resize(static_cast<Eigen::Index>(num_parameters()));
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < W_.size(); ++l) {
      grad->segment(k, gW[l].size()) = Eigen::Map<const Vector>(gW[l].data(), gW[l].size());
      k += gW[l].size();
      grad->segment(k, gb[l].size()) = gb[l];
      k += gb[l].size();
    }
    return loss;
  }

  bool finite() const { return parameters().allFinite(); }

 private:
  std::vector<int> dims_;
  std::vector<Matrix> W_;
  std::vector<Vector> b_;
};

/// Adaptive moment estimation over a flat parameter vector.
class Adam {
 public:
  explicit Adam(std::size_t n = 0, double lr = 5e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps), m_(Vector::Zero(static_cast<Eigen::Index>(n))), v_(m_) {}

  void step(Vector& params, const Vector& grad) {
    if (m_.size() != params.size()) {
      m_ = Vector::Zero(params.size());
      v_ = m_;
      t_ = 0;
    }
    ++t_;
    m_ = b1_ * m_ + (1.0 - b1_) * grad;
    v_ = b2_ * v_ + (1.0 - b2_) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(b1_, t_), c2 = 1.0 - std::pow(b2_, t_);
    params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
  }

  double learning_rate() const { return lr_; }

 private:
  double lr_, b1_, b2_, eps_;
  Vector m_, v_;
  long t_ = 0;
};

// ---------------------------------------------------------------------------
// Weight files: "QCRTWGT1", u64 header length, JSON header, then float64
// parameters in parameters() order, little-endian.

inline constexpr char kWeightMagic[8] = {'Q', 'C', 'R', 'T', 'W', 'G', 'T', '1'};

inline void save_weights(const std::string& path, const QNetwork& net, nlohmann::json header = {}) {
  header["format_version"] = 1;
  header["dims"] = net.dims();
  header["num_parameters"] = net.num_parameters();
  const std::string text = header.dump();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("cannot write weights to " + path);
  os.write(kWeightMagic, sizeof(kWeightMagic));
  const std::uint64_t len = text.size();
  os.write(reinterpret_cast<const char*>(&len), sizeof(len));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  const Vector p = net.parameters();
  os.write(reinterpret_cast<const char*>(p.data()), static_cast<std::streamsize>(p.size() * sizeof(double)));
  if (!os) throw ValidationError("failed writing weights to " + path);
}

inline QNetwork load_weights(const std::string& path, nlohmann::json* header_out = nullptr) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open weights file " + path);
  char magic[8];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kWeightMagic, sizeof(magic)) != 0) throw ValidationError(path + ": not a weights file");
  std::uint64_t len = 0;
  if (!is.read(reinterpret_cast<char*>(&len), sizeof(len)) || len > (1u << 24)) throw ValidationError(path + ": bad header length");
  std::string text(len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(len))) throw ValidationError(path + ": truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path + ": bad header: " + e.what());
  }
  if (header.value("format_version", 0) != 1) throw ValidationError(path + ": unsupported format version");
  QNetwork net(header.at("dims").get<std::vector<int>>());
  Vector p(static_cast<Eigen::Index>(net.num_parameters()));
  if (!is.read(reinterpret_cast<char*>(p.data()), static_cast<std::streamsize>(p.size() * sizeof(double)))) throw ValidationError(path + ": truncated parameters");
  net.set_parameters(p);
  if (header_out) *header_out = header;
  return net;
}

}  // namespace qcert
