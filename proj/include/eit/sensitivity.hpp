#pragma once

#include <Eigen/Dense>

#include "eit/forward.hpp"

namespace eit {

// Solutions for a spanning set of mean-free current functionals together with
// the map that expands sampled directional derivatives into full electrode
// vectors. When the drive patterns themselves span the mean-free space their
// solutions are reused and no extra solves happen.
struct AdjointSet {
  Eigen::MatrixXd aux;     // M x K spanning functionals
  ForwardSolution sol;     // forward solutions for aux
  Eigen::MatrixXd expand;  // M x K, derivative = expand * sampled rows
};

AdjointSet build_adjoints(const ForwardSolver& solver, const CurrentPatterns& patterns,
                          const ForwardSolution* reuse = nullptr);

// Rows index the stacked measurement vec(U): row = pattern * M + electrode.
// Columns index mesh nodes; entry = d U_row / d sigma_col.
Eigen::MatrixXd jacobian_sigma(const ForwardSolver& solver, const ForwardSolution& fwd,
                               const AdjointSet& adj);

// Columns index electrodes; entry = d U_row / d peak_col.
Eigen::MatrixXd jacobian_peaks(const ForwardSolver& solver, const ForwardSolution& fwd,
                               const AdjointSet& adj);

// Derivatives with respect to the polar and azimuthal position of each
// electrode center along the tank wall.
struct AngleJacobians {
  Eigen::MatrixXd theta;  // MN x M
  Eigen::MatrixXd phi;    // MN x M
};

AngleJacobians jacobian_angles(const ForwardSolver& solver, const ForwardSolution& fwd,
                               const AdjointSet& adj);

}  // namespace eit
