#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "eit/mesh.hpp"
#include "eit/projection.hpp"
#include "eit/regularization.hpp"
#include "eit/sampling.hpp"

namespace eit {

// Whitened (optionally projected) linearized measurement model A w ~ b with
// the TV prior. A = B J_sigma and b = B y, where B is the noise whitening
// alone or composed with a projector.
struct LinearizedProblem {
  const Mesh* mesh = nullptr;
  const std::vector<TetGeometry>* geom = nullptr;
  Eigen::MatrixXd a;
  Eigen::VectorXd b;
  RegularizerState reg;
  std::string projection = "none";
  double noise_s = 0.0;
};

// reg.epsilon == 0 requests the spectral heuristic; the resolved value is
// stored back into the returned problem.
LinearizedProblem build_problem(const Mesh& mesh, const std::vector<TetGeometry>& geom,
                                const Eigen::MatrixXd& jac_sigma, const Eigen::VectorXd& y,
                                const NoiseModel& noise, const ProjectionOperator* projection,
                                RegularizerState reg);

struct ReconstructionResult {
  Eigen::VectorXd w;                     // final iterate
  std::vector<Eigen::VectorXd> iterates; // starting guess first
  std::vector<double> objectives;        // objective at each iterate
  double gamma = 0.0, T = 0.0, epsilon = 0.0;
  std::string projection;
};

// w = Theta(0)^-1 A^T (gamma I + A Theta(0)^-1 A^T)^-1 b: one quadratic
// surrogate step through the Woodbury identity (the data-space system is the
// small one).
ReconstructionResult one_step(const LinearizedProblem& problem);

// Fixed-point iteration re-freezing the TV weight at each iterate; the first
// step from w0 = 0 coincides with one_step.
ReconstructionResult lagged_diffusivity(const LinearizedProblem& problem, int n_iter = 10,
                                        const Eigen::VectorXd* start = nullptr);

double objective(const LinearizedProblem& problem, const Eigen::VectorXd& w);

// Dense normal-equations solve (A^T A + gamma Theta(0)) w = A^T b; the
// verification oracle for the Woodbury path. Small meshes only.
Eigen::VectorXd normal_equations_solve(const LinearizedProblem& problem);

}  // namespace eit
