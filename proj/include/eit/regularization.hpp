#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <vector>

#include "eit/fe.hpp"
#include "eit/mesh.hpp"

namespace eit {

// Smoothed total-variation prior Psi(w) = sum_K V_K sqrt(|grad w|^2 + T^2)
// + (epsilon/2) |w|^2 and its machinery. gamma weighs the prior against the
// data misfit; the defaults follow the one-step and lagged-diffusivity
// experiment settings.
struct RegularizerState {
  double T = 1e-6;
  double epsilon = 0.0;
  double gamma = 1e-2;
};

constexpr double kOneStepGamma = 1e-2;
constexpr double kLaggedGamma = 1e2;

// Theta(w): stiffness weighted by 1 / sqrt(|grad w|_K^2 + T^2) plus the
// epsilon shift. Theta(w) w is the exact gradient of Psi.
Eigen::SparseMatrix<double> theta_matrix(const Mesh& mesh,
                                         const std::vector<TetGeometry>& geom,
                                         const Eigen::VectorXd& w,
                                         const RegularizerState& state);

double psi_value(const Mesh& mesh, const std::vector<TetGeometry>& geom,
                 const Eigen::VectorXd& w, const RegularizerState& state);

// Second-smallest eigenvalue of K/T, the epsilon-free part of Theta(0): the
// smallest positive shift that makes the prior proper. Dense solve on small
// meshes, deflated inverse iteration otherwise.
double epsilon_heuristic(const Mesh& mesh, const std::vector<TetGeometry>& geom, double T);

}  // namespace eit
