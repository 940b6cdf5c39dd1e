#include "eit/regularization.hpp"

#include <cmath>

#include "eit/errors.hpp"

namespace eit {

namespace {

Eigen::VectorXd gradient_norms(const Mesh& mesh, const std::vector<TetGeometry>& geom,
                               const Eigen::VectorXd& w) {
  if (w.size() != mesh.node_count())
    throw ContractError(msg("field has ", w.size(), " entries for ", mesh.node_count(),
                            " nodes"));
  Eigen::VectorXd norms(mesh.tet_count());
  for (Eigen::Index t = 0; t < mesh.tet_count(); ++t) {
    const auto row = mesh.tets.row(t);
    const TetGeometry& g = geom[static_cast<size_t>(t)];
    Eigen::Vector3d grad = Eigen::Vector3d::Zero();
    for (int k = 0; k < 4; ++k) grad += w[row[k]] * g.grad.col(k);
    norms[t] = grad.norm();
  }
  return norms;
}

}  // namespace

Eigen::SparseMatrix<double> theta_matrix(const Mesh& mesh,
                                         const std::vector<TetGeometry>& geom,
                                         const Eigen::VectorXd& w,
                                         const RegularizerState& state) {
  if (!(state.T > 0.0)) throw ConfigError("smoothing parameter T must be positive");
  if (!(state.epsilon > 0.0)) throw ConfigError("epsilon shift must be positive");
  const Eigen::VectorXd norms = gradient_norms(mesh, geom, w);
  Eigen::VectorXd weights(norms.size());
  // hypot keeps the w = 0 weight equal to 1/T without rounding detours
  for (Eigen::Index t = 0; t < norms.size(); ++t)
    weights[t] = 1.0 / std::hypot(norms[t], state.T);
  Eigen::SparseMatrix<double> theta = element_weighted_stiffness(mesh, weights, geom);
  Eigen::SparseMatrix<double> shift(theta.rows(), theta.cols());
  shift.setIdentity();
  theta += state.epsilon * shift;
  return theta;
}

double psi_value(const Mesh& mesh, const std::vector<TetGeometry>& geom,
                 const Eigen::VectorXd& w, const RegularizerState& state) {
  if (!(state.T > 0.0)) throw ConfigError("smoothing parameter T must be positive");
  const Eigen::VectorXd norms = gradient_norms(mesh, geom, w);
  double psi = 0.0;
  for (Eigen::Index t = 0; t < norms.size(); ++t)
    psi += geom[static_cast<size_t>(t)].volume * std::hypot(norms[t], state.T);
  return psi + 0.5 * state.epsilon * w.squaredNorm();
}

double epsilon_heuristic(const Mesh& mesh, const std::vector<TetGeometry>& geom, double T) {
  if (!(T > 0.0)) throw ConfigError("smoothing parameter T must be positive");
  const Eigen::Index n = mesh.node_count();
  const Eigen::SparseMatrix<double> k =
      element_weighted_stiffness(mesh, Eigen::VectorXd::Ones(mesh.tet_count()), geom);

  if (n <= 2000) {
    const Eigen::MatrixXd dense(k);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(dense);
    if (eig.info() != Eigen::Success)
      return 1e-8 * k.diagonal().maxCoeff() / T;
    return eig.eigenvalues()[1] / T;
  }

  // inverse iteration on the shifted matrix, deflating the constant kernel
  const double shift = 1e-8 * k.diagonal().mean();
  Eigen::SparseMatrix<double> ks = k;
  Eigen::SparseMatrix<double> eye(n, n);
  eye.setIdentity();
  ks += shift * eye;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(ks);
  if (ldlt.info() != Eigen::Success) return 1e-8 * k.diagonal().maxCoeff() / T;

  Eigen::VectorXd x(n);
  for (Eigen::Index i = 0; i < n; ++i) x[i] = std::sin(static_cast<double>(i) + 1.0);
  x.array() -= x.mean();
  x.normalize();
  double lambda = 0.0;
  for (int it = 0; it < 200; ++it) {
    Eigen::VectorXd y = ldlt.solve(x);
    y.array() -= y.mean();
    const double norm = y.norm();
    if (!(norm > 0.0)) return 1e-8 * k.diagonal().maxCoeff() / T;
    y /= norm;
    const double next = y.dot(k * y);
    const bool settled = it > 0 && std::abs(next - lambda) <= 1e-12 * std::abs(next);
    lambda = next;
    x = y;
    if (settled) break;
  }
  return lambda / T;
}

}  // namespace eit
