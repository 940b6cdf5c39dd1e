#include "eit/projection.hpp"

#include <algorithm>
#include <cmath>

#include "eit/errors.hpp"

namespace eit {

Eigen::VectorXd ProjectionOperator::apply(const Eigen::VectorXd& v) const {
  if (v.size() != matrix.rows())
    throw ContractError(msg("projector of dimension ", matrix.rows(),
                            " applied to a vector of length ", v.size()));
  // the implicit form stays exact for large MN where the dense product
  // accumulates more roundoff
  return v - range * (range.transpose() * v);
}

ProjectionOperator build_projection(const std::vector<const Eigen::MatrixXd*>& blocks,
                                    const std::string& descriptor) {
  if (blocks.empty()) throw ContractError("projection needs at least one Jacobian block");
  const Eigen::Index rows = blocks.front()->rows();
  Eigen::Index cols = 0;
  for (const auto* b : blocks) {
    if (b->rows() != rows)
      throw ContractError(msg("Jacobian blocks disagree on row count: ", rows, " vs ",
                              b->rows()));
    cols += b->cols();
  }
  if (cols >= rows)
    throw ContractError(msg("cannot project out ", cols, " directions in dimension ", rows));
  Eigen::MatrixXd scaled(rows, cols);
  Eigen::Index at = 0;
  for (const auto* b : blocks)
    for (Eigen::Index j = 0; j < b->cols(); ++j, ++at) {
      const double norm = b->col(j).norm();
      if (!(norm > 0.0) || !b->col(j).allFinite())
        throw NumericError(msg("Jacobian column ", at, " is zero or non-finite; "
                               "its direction is undefined"));
      scaled.col(at) = b->col(j) / norm;
    }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(scaled, Eigen::ComputeThinU);
  const auto& s = svd.singularValues();
  if (!(s[0] > 0.0) || s[cols - 1] < 1e-8 * s[0])
    throw NumericError(msg("concatenated Jacobian blocks are rank deficient: condition ",
                           s[cols - 1] > 0.0 ? s[0] / s[cols - 1]
                                             : std::numeric_limits<double>::infinity(),
                           " after column scaling"));

  ProjectionOperator p;
  p.range = svd.matrixU().leftCols(cols);
  p.matrix = Eigen::MatrixXd::Identity(rows, rows) - p.range * p.range.transpose();
  p.blocks = descriptor;
  p.removed = static_cast<int>(cols);
  return p;
}

std::vector<double> principal_angles(const ProjectionOperator& a,
                                     const ProjectionOperator& b) {
  if (a.matrix.rows() != b.matrix.rows())
    throw ContractError(msg("projectors live in different dimensions: ", a.matrix.rows(),
                            " vs ", b.matrix.rows()));
  const Eigen::Index qa = a.matrix.rows() - a.removed;
  const Eigen::Index qb = b.matrix.rows() - b.removed;
  const Eigen::Index count = std::min(qa, qb);
  // P_a (I - P_b) has rank at most the codimension of range(P_b); its largest
  // singular values are the sines of the principal angles
  const Eigen::MatrixXd cross = a.matrix * b.range;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(cross);
  std::vector<double> angles(static_cast<size_t>(count), 0.0);
  const Eigen::Index nsv = svd.singularValues().size();
  for (Eigen::Index i = 0; i < std::min(nsv, count); ++i) {
    const double s = std::clamp(svd.singularValues()[i], 0.0, 1.0);
    angles[static_cast<size_t>(count - 1 - i)] = std::asin(s) * 180.0 / 3.14159265358979323846;
  }
  std::sort(angles.begin(), angles.end());
  return angles;
}

double frobenius_discrepancy(const Eigen::MatrixXd& j, const Eigen::MatrixXd& j_ref) {
  if (j.rows() != j_ref.rows() || j.cols() != j_ref.cols())
    throw ContractError(msg("discrepancy of ", j.rows(), "x", j.cols(), " against ",
                            j_ref.rows(), "x", j_ref.cols()));
  const double ref = j_ref.norm();
  if (!(ref > 0.0)) throw DomainError("reference Jacobian has zero Frobenius norm");
  return (j - j_ref).norm() / ref;
}

SignalBundle signal_bundle(const Eigen::VectorXd& base, const Eigen::VectorXd& sigma_only,
                           const Eigen::VectorXd& zeta_only, const Eigen::VectorXd& both,
                           const std::vector<const ProjectionOperator*>& projections) {
  if (sigma_only.size() != base.size() || zeta_only.size() != base.size() ||
      both.size() != base.size())
    throw ContractError("signal measurement vectors have mismatched lengths");
  SignalBundle out;
  out.s_sigma = sigma_only - base;
  out.s_zeta = zeta_only - base;
  out.s_combined = both - base;
  for (const ProjectionOperator* p : projections) {
    SignalBundle::Projected proj;
    proj.s_sigma = p->apply(out.s_sigma);
    proj.s_zeta = p->apply(out.s_zeta);
    proj.s_combined = p->apply(out.s_combined);
    out.projected.push_back(std::move(proj));
  }
  return out;
}

}  // namespace eit
