#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <vector>

namespace eit {

struct Mesh;

// Geometry of one P1 tetrahedron: constant hat-function gradients and volume.
struct TetGeometry {
  double volume;
  Eigen::Matrix<double, 3, 4> grad;
};

// Throws NumericError on degenerate elements (volume <= 1e-18).
std::vector<TetGeometry> compute_tet_geometry(const Mesh& mesh);

// Centroid rule on 49 congruent sub-triangles (7-fold uniform edge
// subdivision of the unit triangle). Rows are barycentric coordinates; every
// point carries weight face_area / 49.
struct TriangleRule {
  Eigen::Matrix<double, 49, 3> bary;
};
const TriangleRule& face_quadrature_rule();

// Stiffness matrix with one fixed weight per tetrahedron.
Eigen::SparseMatrix<double> element_weighted_stiffness(const Mesh& mesh,
                                                       const Eigen::VectorXd& element_weights,
                                                       const std::vector<TetGeometry>& geom);

// Stiffness matrix with a P1 nodal weight field: per element the weight is
// the mean of the four nodal values, which integrates the P1 field exactly.
Eigen::SparseMatrix<double> stiffness_matrix(const Mesh& mesh,
                                             const Eigen::VectorXd& node_weights,
                                             const std::vector<TetGeometry>& geom);

// Orthonormal basis of the mean-free subspace of R^M, built by QR from
// b_k = e_k - e_M. Returns M x (M-1).
Eigen::MatrixXd meanfree_basis(int m);

}  // namespace eit
