#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <memory>
#include <string>
#include <vector>

#include "eit/fe.hpp"
#include "eit/mesh.hpp"

namespace eit {

// Compactly supported contact bump, equal to 1 at the electrode center and
// identically 0 for r >= R, with all derivatives vanishing at the rim.
struct ContactProfile {
  double tau = 0.4;
  double value(double r, double R) const;
  double slope(double r, double R) const;  // d value / d r, 0 at r = 0 and r >= R
};

// Fixed surface quadrature over the faces that can carry contact weight for
// one electrode. Face membership is decided by vertex distance to the
// electrode axis, so the profile has already decayed to nothing wherever
// membership can flip; integrals over the band move smoothly with the
// electrode position.
struct BandQuadrature {
  struct Point {
    Eigen::Vector3d x;
    Eigen::Vector3d u;  // unit in-plane offset from the electrode axis (zero at r = 0)
    double w = 0.0;     // area weight
    double r = 0.0;     // in-plane distance to the axis
    double shape = 0.0;     // profile value at r
    double dshape = 0.0;    // profile slope at r
    double bary[3] = {0, 0, 0};
    int node[3] = {0, 0, 0};
  };
  std::vector<Point> points;
  double shape_integral = 0.0;  // integral of the profile over the band
};

BandQuadrature band_quadrature(const Mesh& mesh, const Electrode& e,
                               const ContactProfile& profile);

// Current patterns as columns; every column sums to zero.
struct CurrentPatterns {
  Eigen::MatrixXd currents;  // M x N
  std::string kind;
  double amplitude = 0.0;
};

// kind: "adjacent" (N = M/2), "opposite" (N = M/4), "fourier" (N = M-1)
CurrentPatterns make_patterns(int electrode_count, const std::string& kind,
                              double amplitude = 1e-3);

struct ForwardSolution {
  Eigen::MatrixXd potential;            // nodes x N
  Eigen::MatrixXd electrode_potential;  // M x N, columns mean-free
};

// Complete-electrode forward map with the smoothened contact weight
// zeta_m(x) = peak_m * shape(r(x)). Holds the factorization of the reduced
// symmetric positive definite system so repeated solves are cheap.
class ForwardSolver {
 public:
  ForwardSolver(const Mesh& mesh, const ElectrodeLayout& layout,
                ContactProfile profile = {});

  // sigma: nodal conductivity, peaks: per-electrode contact peak; both > 0
  void set_fields(const Eigen::VectorXd& sigma, const Eigen::VectorXd& peaks);

  ForwardSolution solve(const Eigen::MatrixXd& currents) const;
  Eigen::MatrixXd measure(const Eigen::MatrixXd& currents) const;

  // solutions for the mean-free basis itself (used as adjoints)
  ForwardSolution solve_basis() const;

  const Mesh& mesh() const { return mesh_; }
  const Eigen::SparseMatrix<double>& system() const { return system_; }
  const ElectrodeLayout& layout() const { return layout_; }
  const ContactProfile& profile() const { return profile_; }
  const std::vector<TetGeometry>& geometry() const { return geometry_; }
  const std::vector<BandQuadrature>& bands() const { return bands_; }
  const Eigen::MatrixXd& meanfree() const { return meanfree_; }
  const Eigen::VectorXd& sigma() const { return sigma_; }
  const Eigen::VectorXd& peaks() const { return peaks_; }
  int electrode_count() const { return layout_.count(); }

 private:
  Eigen::VectorXd solve_one(const Eigen::VectorXd& rhs) const;

  const Mesh& mesh_;
  ElectrodeLayout layout_;
  ContactProfile profile_;
  std::vector<TetGeometry> geometry_;
  std::vector<BandQuadrature> bands_;
  Eigen::MatrixXd meanfree_;  // M x (M-1)
  Eigen::VectorXd sigma_, peaks_;
  Eigen::SparseMatrix<double> system_;
  std::unique_ptr<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>> ldlt_;
  std::unique_ptr<Eigen::ConjugateGradient<
      Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper,
      Eigen::IncompleteCholesky<double>>> cg_;
  bool use_cg_ = false;
};

// CSV with header pattern,electrode,voltage; pattern-major row order
void save_measurements(const std::string& path, const Eigen::MatrixXd& data);
Eigen::MatrixXd load_measurements(const std::string& path);

}  // namespace eit
