#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace eit {

// Orthogonal projector onto the complement of the joint range of a set of
// Jacobian blocks. Applying it to measurement differences removes, to first
// order, the contribution of the projected-out parameter families.
struct ProjectionOperator {
  Eigen::MatrixXd matrix;  // MN x MN, symmetric idempotent
  Eigen::MatrixXd range;   // MN x d orthonormal basis of the removed subspace
  std::string blocks;      // descriptor of the constituent blocks
  int removed = 0;         // d = total columns projected out

  Eigen::VectorXd apply(const Eigen::VectorXd& v) const;
};

// Each block column is normalized before the rank check since different
// parameter families carry different physical units; the projector itself is
// invariant under per-column scaling.
ProjectionOperator build_projection(const std::vector<const Eigen::MatrixXd*>& blocks,
                                    const std::string& descriptor);

// Principal angles between the ranges of two projectors, in degrees,
// ascending; length = min of the two range dimensions. Computed through
// arcsin of singular values, which is accurate for the small angles of
// interest.
std::vector<double> principal_angles(const ProjectionOperator& a,
                                     const ProjectionOperator& b);

// |J - J_ref|_F / |J_ref|_F
double frobenius_discrepancy(const Eigen::MatrixXd& j, const Eigen::MatrixXd& j_ref);

// Measurement differences caused by changing sigma only, the contacts only,
// or both, relative to the background pair.
struct SignalBundle {
  Eigen::VectorXd s_sigma, s_zeta, s_combined;
  // projected[k] holds the three signals through the k-th supplied operator
  struct Projected {
    Eigen::VectorXd s_sigma, s_zeta, s_combined;
  };
  std::vector<Projected> projected;
};

SignalBundle signal_bundle(const Eigen::VectorXd& base, const Eigen::VectorXd& sigma_only,
                           const Eigen::VectorXd& zeta_only, const Eigen::VectorXd& both,
                           const std::vector<const ProjectionOperator*>& projections);

}  // namespace eit
