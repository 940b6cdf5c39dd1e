#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <vector>

#include "eit/mesh.hpp"

namespace eit {

// Deterministic draws on top of mt19937_64. The distributions are spelled out
// here rather than taken from <random> because the standard leaves their
// algorithms implementation-defined and study outputs must be reproducible
// bit-for-bit across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform();  // [0, 1)
  double normal();   // standard Gaussian, Box-Muller pair-cached

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// stable per-draw sub-seed so parallel or resumed studies see the same streams
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// peaks = offset + shared * beta + independent * upsilon_m, beta shared per
// draw, upsilon_m per electrode, both uniform on [0, 1)
struct ContactDrawLaw {
  double offset = 10.0;
  double shared = 600.0;
  double independent = 380.0;
};

Eigen::VectorXd draw_contacts(const ContactDrawLaw& law, int electrode_count, Rng& rng);

struct FieldLaw {
  double log_mean = -1.6094379124341003;  // log 0.2
  double corr_length = 0.02;              // meters
  double pointwise_std = 0.5;             // of the log field
};

// Log-normal field on a node subset: kappa Gaussian with squared-exponential
// covariance over node positions, field = exp(kappa). Nodes outside the
// region keep whatever the target vector already holds.
class GaussianFieldSampler {
 public:
  GaussianFieldSampler(const Mesh& mesh, std::vector<int> region_nodes, FieldLaw law);

  void draw(Eigen::VectorXd& field, Rng& rng) const;
  const std::vector<int>& region() const { return region_; }

 private:
  std::vector<int> region_;
  FieldLaw law_;
  Eigen::MatrixXd factor_;  // lower Cholesky factor of the covariance
};

// Gamma_E = s^2 I with s a fraction of the spread of reference data; the
// whitening factor C = I/s is kept implicitly through s.
struct NoiseModel {
  double s = 0.0;
  double fraction = 0.0;

  Eigen::VectorXd whiten(const Eigen::VectorXd& v) const { return v / s; }
  Eigen::VectorXd sample(Eigen::Index length, Rng& rng) const;
};

NoiseModel make_noise(const Eigen::MatrixXd& data_for_scale, double fraction = 0.005);

}  // namespace eit
