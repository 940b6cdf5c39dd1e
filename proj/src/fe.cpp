#include "eit/fe.hpp"

#include "eit/errors.hpp"
#include "eit/mesh.hpp"

namespace eit {

std::vector<TetGeometry> compute_tet_geometry(const Mesh& mesh) {
  std::vector<TetGeometry> geom(static_cast<size_t>(mesh.tet_count()));
  for (Eigen::Index t = 0; t < mesh.tet_count(); ++t) {
    const auto row = mesh.tets.row(t);
    Eigen::Vector3d p0 = mesh.nodes.row(row[0]);
    Eigen::Matrix3d edges;
    for (int k = 0; k < 3; ++k)
      edges.col(k) = mesh.nodes.row(row[k + 1]).transpose() - p0;
    const double det = edges.determinant();
    const double vol = std::abs(det) / 6.0;
    if (!(vol > 1e-18))
      throw NumericError(msg("degenerate tetrahedron ", t, " (volume ", vol, ")"));
    // Rows of edges^-1 are the gradients of the barycentric coordinates
    // lambda_1..lambda_3; lambda_0 closes the partition of unity.
    Eigen::Matrix3d inv = edges.inverse();
    TetGeometry g;
    g.volume = vol;
    g.grad.col(0) = -(inv.row(0) + inv.row(1) + inv.row(2)).transpose();
    for (int k = 0; k < 3; ++k) g.grad.col(k + 1) = inv.row(k).transpose();
    geom[static_cast<size_t>(t)] = g;
  }
  return geom;
}

const TriangleRule& face_quadrature_rule() {
  static const TriangleRule rule = [] {
    TriangleRule r;
    int q = 0;
    const double s = 1.0 / 7.0;
    for (int a = 0; a < 7; ++a) {
      for (int b = 0; a + b < 7; ++b) {
        // upright sub-triangle with corner (a, b)
        const double l1 = (3 * a + 1) * s / 3.0;
        const double l2 = (3 * b + 1) * s / 3.0;
        r.bary.row(q++) << 1.0 - l1 - l2, l1, l2;
        if (a + b < 6) {  // inverted companion
          const double m1 = (3 * a + 2) * s / 3.0;
          const double m2 = (3 * b + 2) * s / 3.0;
          r.bary.row(q++) << 1.0 - m1 - m2, m1, m2;
        }
      }
    }
    return r;
  }();
  return rule;
}

Eigen::SparseMatrix<double> element_weighted_stiffness(const Mesh& mesh,
                                                       const Eigen::VectorXd& element_weights,
                                                       const std::vector<TetGeometry>& geom) {
  if (element_weights.size() != mesh.tet_count())
    throw ContractError(msg("weight field has ", element_weights.size(), " entries for ",
                            mesh.tet_count(), " tets"));
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<size_t>(mesh.tet_count()) * 16);
  for (Eigen::Index t = 0; t < mesh.tet_count(); ++t) {
    const auto row = mesh.tets.row(t);
    const TetGeometry& g = geom[static_cast<size_t>(t)];
    const double scale = element_weights[t] * g.volume;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        trip.emplace_back(row[i], row[j], scale * g.grad.col(i).dot(g.grad.col(j)));
  }
  Eigen::SparseMatrix<double> K(mesh.node_count(), mesh.node_count());
  K.setFromTriplets(trip.begin(), trip.end());
  return K;
}

Eigen::SparseMatrix<double> stiffness_matrix(const Mesh& mesh,
                                             const Eigen::VectorXd& node_weights,
                                             const std::vector<TetGeometry>& geom) {
  if (node_weights.size() != mesh.node_count())
    throw ContractError(msg("weight field has ", node_weights.size(), " entries for ",
                            mesh.node_count(), " nodes"));
  // the nodal field is linear per element, so its element integral is the
  // vertex mean times the volume
  Eigen::VectorXd ew(mesh.tet_count());
  for (Eigen::Index t = 0; t < mesh.tet_count(); ++t) {
    const auto row = mesh.tets.row(t);
    ew[t] = 0.25 * (node_weights[row[0]] + node_weights[row[1]] + node_weights[row[2]] +
                    node_weights[row[3]]);
  }
  return element_weighted_stiffness(mesh, ew, geom);
}

Eigen::MatrixXd meanfree_basis(int m) {
  if (m < 2) throw ContractError(msg("mean-free basis needs M >= 2, got ", m));
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(m, m - 1);
  for (int k = 0; k < m - 1; ++k) {
    b(k, k) = 1.0;
    b(m - 1, k) = -1.0;
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(b);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(m, m - 1);
  return q;
}

}  // namespace eit
