#include "eit/reconstruct.hpp"

#include <Eigen/SparseCholesky>

#include "eit/errors.hpp"
#include "eit/fe.hpp"

namespace eit {

namespace {

// Shared surrogate step: w = Theta^-1 A^T (gamma I + A Theta^-1 A^T)^-1 b.
// Used verbatim by one_step and by every lagged-diffusivity iteration so the
// two agree bit-for-bit on the first step.
Eigen::VectorXd solve_step(const LinearizedProblem& problem,
                           const Eigen::SparseMatrix<double>& theta) {
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> factor(theta);
  if (factor.info() != Eigen::Success)
    throw NumericError("reconstruction step: penalty matrix factorization failed");
  const Eigen::MatrixXd at = problem.a.transpose();
  Eigen::MatrixXd x = factor.solve(at);
  x += factor.solve(at - theta * x);  // one refinement pass on the block solve
  Eigen::MatrixXd s = problem.a * x;
  s = 0.5 * (s + s.transpose()).eval();
  s.diagonal().array() += problem.reg.gamma;
  Eigen::LLT<Eigen::MatrixXd> llt(s);
  if (llt.info() != Eigen::Success)
    throw NumericError("reconstruction step: data-space system is not positive definite");
  const Eigen::VectorXd coef = llt.solve(problem.b);
  return x * coef;
}

void check_problem(const LinearizedProblem& problem) {
  if (problem.mesh == nullptr || problem.geom == nullptr)
    throw ContractError("reconstruction problem is missing its mesh");
  if (problem.a.cols() != problem.mesh->node_count())
    throw ContractError(msg("reconstruction problem: operator has ", problem.a.cols(),
                            " columns for ", problem.mesh->node_count(), " nodes"));
  if (problem.reg.gamma <= 0.0)
    throw ConfigError(msg("regularization weight must be positive, got ", problem.reg.gamma));
}

}  // namespace

LinearizedProblem build_problem(const Mesh& mesh, const std::vector<TetGeometry>& geom,
                                const Eigen::MatrixXd& jac_sigma, const Eigen::VectorXd& y,
                                const NoiseModel& noise, const ProjectionOperator* projection,
                                RegularizerState reg) {
  if (jac_sigma.rows() != y.size())
    throw ContractError(msg("linearized problem: Jacobian has ", jac_sigma.rows(),
                            " rows but the data vector has ", y.size()));
  if (jac_sigma.cols() != mesh.node_count())
    throw ContractError(msg("linearized problem: Jacobian has ", jac_sigma.cols(),
                            " columns for ", mesh.node_count(), " nodes"));
  if (!(noise.s > 0.0))
    throw ConfigError(msg("noise scale must be positive, got ", noise.s));
  if (reg.T <= 0.0)
    throw ConfigError(msg("smoothing parameter T must be positive, got ", reg.T));
  if (reg.gamma <= 0.0)
    throw ConfigError(msg("regularization weight must be positive, got ", reg.gamma));
  if (reg.epsilon < 0.0)
    throw ConfigError(msg("penalty shift must be nonnegative, got ", reg.epsilon));
  if (reg.epsilon == 0.0) reg.epsilon = epsilon_heuristic(mesh, geom, reg.T);

  LinearizedProblem problem;
  problem.mesh = &mesh;
  problem.geom = &geom;
  problem.reg = reg;
  problem.noise_s = noise.s;
  const double inv_s = 1.0 / noise.s;
  if (projection != nullptr) {
    if (projection->matrix.rows() != jac_sigma.rows())
      throw ContractError(msg("linearized problem: projection acts on ",
                              projection->matrix.rows(), " measurements but the Jacobian has ",
                              jac_sigma.rows(), " rows"));
    problem.a = inv_s * (jac_sigma - projection->range * (projection->range.transpose() * jac_sigma));
    problem.b = inv_s * projection->apply(y);
    problem.projection = projection->blocks;
  } else {
    problem.a = inv_s * jac_sigma;
    problem.b = inv_s * y;
  }
  return problem;
}

double objective(const LinearizedProblem& problem, const Eigen::VectorXd& w) {
  check_problem(problem);
  const double misfit = 0.5 * (problem.b - problem.a * w).squaredNorm();
  return misfit + problem.reg.gamma * psi_value(*problem.mesh, *problem.geom, w, problem.reg);
}

ReconstructionResult one_step(const LinearizedProblem& problem) {
  return lagged_diffusivity(problem, 1, nullptr);
}

ReconstructionResult lagged_diffusivity(const LinearizedProblem& problem, int n_iter,
                                        const Eigen::VectorXd* start) {
  check_problem(problem);
  if (n_iter < 1) throw ConfigError(msg("iteration count must be positive, got ", n_iter));

  const Eigen::Index n = problem.a.cols();
  Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
  if (start != nullptr) {
    if (start->size() != n)
      throw ContractError(
          msg("starting guess has ", start->size(), " entries for ", n, " nodes"));
    w = *start;
  }

  ReconstructionResult result;
  result.gamma = problem.reg.gamma;
  result.T = problem.reg.T;
  result.epsilon = problem.reg.epsilon;
  result.projection = problem.projection;
  result.iterates.push_back(w);
  result.objectives.push_back(objective(problem, w));
  for (int j = 0; j < n_iter; ++j) {
    const Eigen::SparseMatrix<double> theta =
        theta_matrix(*problem.mesh, *problem.geom, w, problem.reg);
    w = solve_step(problem, theta);
    result.iterates.push_back(w);
    result.objectives.push_back(objective(problem, w));
  }
  result.w = w;
  return result;
}

Eigen::VectorXd normal_equations_solve(const LinearizedProblem& problem) {
  check_problem(problem);
  const Eigen::Index n = problem.a.cols();
  if (n > 3000)
    throw ContractError(
        msg("dense normal-equations oracle is limited to small meshes, got ", n, " nodes"));
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(n);
  const Eigen::MatrixXd theta =
      Eigen::MatrixXd(theta_matrix(*problem.mesh, *problem.geom, zero, problem.reg));
  Eigen::MatrixXd h = problem.a.transpose() * problem.a + problem.reg.gamma * theta;
  Eigen::LLT<Eigen::MatrixXd> llt(h);
  if (llt.info() != Eigen::Success)
    throw NumericError("normal equations: system is not positive definite");
  return llt.solve(problem.a.transpose() * problem.b);
}

}  // namespace eit
