#include "eit/sensitivity.hpp"

#include <cmath>

#include "eit/errors.hpp"

namespace eit {

AdjointSet build_adjoints(const ForwardSolver& solver, const CurrentPatterns& patterns,
                          const ForwardSolution* reuse) {
  const int m = solver.electrode_count();
  AdjointSet adj;
  if (patterns.currents.cols() == m - 1 && reuse != nullptr) {
    adj.aux = patterns.currents;
    adj.sol = *reuse;
    const Eigen::MatrixXd mix = adj.aux.transpose() * solver.meanfree();
    Eigen::FullPivLU<Eigen::MatrixXd> lu(mix);
    if (!lu.isInvertible())
      throw NumericError("drive patterns do not span the mean-free space");
    adj.expand = solver.meanfree() * lu.inverse();
  } else {
    adj.aux = solver.meanfree();
    adj.sol = solver.solve_basis();
    adj.expand = solver.meanfree();
  }
  return adj;
}

namespace {

// Per-electrode interpolation of (U_m - u) at the band quadrature points for
// every column of a solution set; rows = columns of sol, cols = points.
Eigen::MatrixXd gap_samples(const BandQuadrature& band, int electrode,
                            const ForwardSolution& sol) {
  const Eigen::Index cols = sol.potential.cols();
  Eigen::MatrixXd g(cols, static_cast<Eigen::Index>(band.points.size()));
  for (size_t q = 0; q < band.points.size(); ++q) {
    const auto& p = band.points[q];
    g.col(static_cast<Eigen::Index>(q)) =
        sol.electrode_potential.row(electrode).transpose() -
        p.bary[0] * sol.potential.row(p.node[0]).transpose() -
        p.bary[1] * sol.potential.row(p.node[1]).transpose() -
        p.bary[2] * sol.potential.row(p.node[2]).transpose();
  }
  return g;
}

// vec of expand * (B diag(w) A^T): the sampled bilinear derivative expanded to
// full electrode vectors, stacked pattern-major.
Eigen::VectorXd expand_column(const Eigen::MatrixXd& expand, const Eigen::MatrixXd& b,
                              const Eigen::VectorXd& w, const Eigen::MatrixXd& a) {
  const Eigen::MatrixXd g = b * w.asDiagonal() * a.transpose();
  return (expand * g).reshaped();
}

}  // namespace

Eigen::MatrixXd jacobian_sigma(const ForwardSolver& solver, const ForwardSolution& fwd,
                               const AdjointSet& adj) {
  const Mesh& mesh = solver.mesh();
  const Eigen::Index n = mesh.node_count();
  const Eigen::Index npat = fwd.potential.cols();
  const Eigen::Index naux = adj.sol.potential.cols();
  const int m = solver.electrode_count();
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(m * npat, n);
  const auto& geom = solver.geometry();
  Eigen::MatrixXd uloc(4, npat), vloc(4, naux);
  for (Eigen::Index t = 0; t < mesh.tet_count(); ++t) {
    for (int k = 0; k < 4; ++k) {
      uloc.row(k) = fwd.potential.row(mesh.tets(t, k));
      vloc.row(k) = adj.sol.potential.row(mesh.tets(t, k));
    }
    const auto& g = geom[static_cast<size_t>(t)];
    const Eigen::MatrixXd gu = g.grad * uloc;  // 3 x npat
    const Eigen::MatrixXd gv = g.grad * vloc;  // 3 x naux
    // d(element weight)/d(nodal sigma) = volume/4 for each corner
    const Eigen::VectorXd cell =
        (adj.expand * (gv.transpose() * gu)).reshaped() * (-0.25 * g.volume);
    for (int k = 0; k < 4; ++k) jac.col(mesh.tets(t, k)) += cell;
  }
  return jac;
}

Eigen::MatrixXd jacobian_peaks(const ForwardSolver& solver, const ForwardSolution& fwd,
                               const AdjointSet& adj) {
  const int m = solver.electrode_count();
  const Eigen::Index npat = fwd.potential.cols();
  Eigen::MatrixXd jac(m * npat, m);
  for (int el = 0; el < m; ++el) {
    const BandQuadrature& band = solver.bands()[static_cast<size_t>(el)];
    const Eigen::MatrixXd a = gap_samples(band, el, fwd);
    const Eigen::MatrixXd b = gap_samples(band, el, adj.sol);
    Eigen::VectorXd w(static_cast<Eigen::Index>(band.points.size()));
    for (size_t q = 0; q < band.points.size(); ++q)
      w[static_cast<Eigen::Index>(q)] = -band.points[q].w * band.points[q].shape;
    jac.col(el) = expand_column(adj.expand, b, w, a);
  }
  return jac;
}

AngleJacobians jacobian_angles(const ForwardSolver& solver, const ForwardSolution& fwd,
                               const AdjointSet& adj) {
  const int m = solver.electrode_count();
  const Eigen::Index npat = fwd.potential.cols();
  const ElectrodeLayout& layout = solver.layout();
  AngleJacobians jac;
  jac.theta.resize(m * npat, m);
  jac.phi.resize(m * npat, m);
  for (int el = 0; el < m; ++el) {
    const Electrode& e = layout.electrodes[static_cast<size_t>(el)];
    if (e.tangent_theta.isZero(0.0) && e.tangent_phi.isZero(0.0))
      throw ContractError(msg("electrode ", el, " carries no tangent fields; "
                              "position derivatives are undefined for this layout"));
    const BandQuadrature& band = solver.bands()[static_cast<size_t>(el)];
    const Eigen::MatrixXd a = gap_samples(band, el, fwd);
    const Eigen::MatrixXd b = gap_samples(band, el, adj.sol);
    const Eigen::Index np = static_cast<Eigen::Index>(band.points.size());
    Eigen::VectorXd wt(np), wp(np);
    const double peak = solver.peaks()[el];
    for (Eigen::Index q = 0; q < np; ++q) {
      const auto& p = band.points[static_cast<size_t>(q)];
      // moving the center by dc shifts the in-plane radius by -u . dc; on a
      // cylinder the azimuthal move also rotates the electrode plane, which
      // scales the shift by n . x / n . c
      const double dr_dtheta = -p.u.dot(e.tangent_theta);
      double dr_dphi = -p.u.dot(e.tangent_phi);
      if (layout.is_cylinder)
        dr_dphi *= 1.0 + e.normal.dot(p.x - e.center) / layout.cylinder_radius;
      const double base = -peak * p.w * p.dshape;
      wt[q] = base * dr_dtheta;
      wp[q] = base * dr_dphi;
    }
    jac.theta.col(el) = expand_column(adj.expand, b, wt, a);
    jac.phi.col(el) = expand_column(adj.expand, b, wp, a);
  }
  return jac;
}

}  // namespace eit
