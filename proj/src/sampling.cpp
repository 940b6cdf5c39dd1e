#include "eit/sampling.hpp"

#include <cmath>

#include "eit/errors.hpp"

namespace eit {

double Rng::uniform() {
  return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Box-Muller on open-interval uniforms
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double mag = std::sqrt(-2.0 * std::log(u1));
  const double ang = 2.0 * 3.14159265358979323846 * u2;
  spare_ = mag * std::sin(ang);
  has_spare_ = true;
  return mag * std::cos(ang);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over the combined word
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

Eigen::VectorXd draw_contacts(const ContactDrawLaw& law, int electrode_count, Rng& rng) {
  if (electrode_count < 1) throw ContractError("contact draw needs at least one electrode");
  if (law.offset < 0.0 || law.shared < 0.0 || law.independent < 0.0)
    throw ConfigError("contact draw scales must be nonnegative");
  const double beta = rng.uniform();
  Eigen::VectorXd peaks(electrode_count);
  for (int m = 0; m < electrode_count; ++m)
    peaks[m] = law.offset + law.shared * beta + law.independent * rng.uniform();
  return peaks;
}

GaussianFieldSampler::GaussianFieldSampler(const Mesh& mesh, std::vector<int> region_nodes,
                                           FieldLaw law)
    : region_(std::move(region_nodes)), law_(law) {
  if (region_.empty()) throw ContractError("field sampler needs a nonempty node region");
  if (!(law_.corr_length > 0.0)) throw ConfigError("correlation length must be positive");
  if (law_.pointwise_std < 0.0) throw ConfigError("pointwise std must be nonnegative");
  const Eigen::Index k = static_cast<Eigen::Index>(region_.size());
  for (int node : region_)
    if (node < 0 || node >= mesh.node_count())
      throw ContractError(msg("region node ", node, " out of range"));
  factor_.setZero(k, k);
  if (law_.pointwise_std == 0.0) return;

  const double var = law_.pointwise_std * law_.pointwise_std;
  const double inv2l2 = 1.0 / (2.0 * law_.corr_length * law_.corr_length);
  Eigen::MatrixXd cov(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const Eigen::Vector3d xi = mesh.nodes.row(region_[static_cast<size_t>(i)]);
    for (Eigen::Index j = 0; j <= i; ++j) {
      const Eigen::Vector3d xj = mesh.nodes.row(region_[static_cast<size_t>(j)]);
      const double c = var * std::exp(-(xi - xj).squaredNorm() * inv2l2);
      cov(i, j) = c;
      cov(j, i) = c;
    }
  }
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    cov.diagonal().array() += 1e-10 * var;
    llt.compute(cov);
    if (llt.info() != Eigen::Success)
      throw NumericError(msg("covariance factorization failed for ", k,
                             " region nodes even after diagonal jitter"));
  }
  factor_ = llt.matrixL();
}

void GaussianFieldSampler::draw(Eigen::VectorXd& field, Rng& rng) const {
  const Eigen::Index k = static_cast<Eigen::Index>(region_.size());
  Eigen::VectorXd z(k);
  for (Eigen::Index i = 0; i < k; ++i) z[i] = rng.normal();
  const Eigen::VectorXd kappa =
      (factor_ * z).array() + law_.log_mean;
  for (Eigen::Index i = 0; i < k; ++i)
    field[region_[static_cast<size_t>(i)]] = std::exp(kappa[i]);
}

Eigen::VectorXd NoiseModel::sample(Eigen::Index length, Rng& rng) const {
  Eigen::VectorXd e(length);
  for (Eigen::Index i = 0; i < length; ++i) e[i] = s * rng.normal();
  return e;
}

NoiseModel make_noise(const Eigen::MatrixXd& data_for_scale, double fraction) {
  if (!(fraction > 0.0)) throw DomainError("noise fraction must be positive");
  const double spread = data_for_scale.maxCoeff() - data_for_scale.minCoeff();
  if (!(spread > 0.0)) throw DomainError("reference data are constant; noise scale undefined");
  NoiseModel nm;
  nm.fraction = fraction;
  nm.s = fraction * spread;
  return nm;
}

}  // namespace eit
