#pragma once

// Complex dense linear algebra used by the optimizer: column-major
// vectorization, Kronecker products, the structured Gram solver behind
// the u-update, a dense reference solver and the unit-modulus projection.
//
// Everything here is templated on the real scalar type and header-only.

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "umwfl/errors.hpp"

namespace umwfl {

template <typename Real>
using ComplexVector = Eigen::Matrix<std::complex<Real>, Eigen::Dynamic, 1>;
template <typename Real>
using ComplexMatrix =
    Eigen::Matrix<std::complex<Real>, Eigen::Dynamic, Eigen::Dynamic>;

using cd = std::complex<double>;
using VectorXcd = ComplexVector<double>;
using MatrixXcd = ComplexMatrix<double>;

/// Stacks the columns of `m` into one vector (column-major vec).
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> vec_of_matrix(
    const Eigen::MatrixBase<Derived>& m) {
  Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> out(m.size());
  Eigen::Index pos = 0;
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) out(pos++) = m(r, c);
  return out;
}

/// Inverse of vec_of_matrix.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>
mat_of_vector(const Eigen::MatrixBase<Derived>& v, Eigen::Index rows,
              Eigen::Index cols) {
  if (rows < 0 || cols < 0 || v.cols() != 1 || rows * cols != v.rows())
    throw DimensionError("mat_of_vector: " + std::to_string(rows) + "x" +
                         std::to_string(cols) + " does not match length " +
                         std::to_string(v.size()));
  Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> out(
      rows, cols);
  Eigen::Index pos = 0;
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) out(r, c) = v(pos++);
  return out;
}

template <typename DerivedA, typename DerivedB>
Eigen::Matrix<typename DerivedA::Scalar, Eigen::Dynamic, Eigen::Dynamic> kron(
    const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  Eigen::Matrix<typename DerivedA::Scalar, Eigen::Dynamic, Eigen::Dynamic> out(
      a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

/// Hermitian positive-definite matrix
///
///   sum_j a_j a_j^H  +  c * (I_N kron g g^H)  +  ridge * I
///
/// of size N^2 x N^2, stored by its factors only.
template <typename Real>
struct StructuredGram {
  std::vector<ComplexVector<Real>> rank_one_terms;
  Real kron_scale = 0;
  ComplexVector<Real> kron_vector;  // g, length N
  Real ridge = 1;

  ComplexMatrix<Real> materialize(Eigen::Index dim) const {
    ComplexMatrix<Real> m = ComplexMatrix<Real>::Identity(dim, dim) * ridge;
    for (const auto& a : rank_one_terms) m += a * a.adjoint();
    if (kron_scale != Real(0)) {
      const Eigen::Index n = kron_vector.size();
      if (n * n != dim)
        throw DimensionError("StructuredGram: kron vector length " +
                             std::to_string(n) + " incompatible with dim " +
                             std::to_string(dim));
      ComplexMatrix<Real> block = kron_scale * kron_vector * kron_vector.adjoint();
      for (Eigen::Index b = 0; b < n; ++b) m.block(b * n, b * n, n, n) += block;
    }
    return m;
  }
};

/// Largest condition number of the Woodbury capacitance accepted by
/// structured_solve.
inline constexpr double kCapacitanceConditionLimit = 1e12;

/// Factorization of a StructuredGram for repeated solves. Construction
/// costs O(K^2 N^2 + K^3); each solve costs O(K N^2). The N^2 x N^2 matrix is
/// never formed: Sherman-Morrison inverts each diagonal block of the
/// Kronecker part and a K-term Woodbury correction adds the rank-one terms.
template <typename Real>
class StructuredGramFactor {
 public:
  StructuredGramFactor(StructuredGram<Real> gram, Eigen::Index dim,
                       double condition_limit = kCapacitanceConditionLimit)
      : gram_(std::move(gram)), dim_(dim) {
    if (!(gram_.ridge > Real(0)))
      throw NumericError("structured_solve: ridge must be positive",
                         double(gram_.ridge));
    if (gram_.kron_scale < Real(0))
      throw NumericError("structured_solve: negative Kronecker scale",
                         double(gram_.kron_scale));
    if (gram_.kron_scale != Real(0) &&
        gram_.kron_vector.size() * gram_.kron_vector.size() != dim_)
      throw DimensionError("structured_solve: kron vector length " +
                           std::to_string(gram_.kron_vector.size()) +
                           " incompatible with dimension " + std::to_string(dim_));
    const auto terms = static_cast<Eigen::Index>(gram_.rank_one_terms.size());
    for (const auto& a : gram_.rank_one_terms)
      if (a.size() != dim_)
        throw DimensionError("structured_solve: rank-one term of length " +
                             std::to_string(a.size()) + ", expected " +
                             std::to_string(dim_));
    if (terms == 0) return;

    terms_.resize(dim_, terms);
    for (Eigen::Index j = 0; j < terms; ++j) terms_.col(j) = gram_.rank_one_terms[j];
    scaled_terms_ = terms_;
    for (Eigen::Index j = 0; j < terms; ++j)
      apply_block_inverse(scaled_terms_.col(j));

    ComplexMatrix<Real> cap = ComplexMatrix<Real>::Identity(terms, terms);
    cap.noalias() += terms_.adjoint() * scaled_terms_;
    cap = (cap + cap.adjoint()).eval() * Real(0.5);

    Eigen::SelfAdjointEigenSolver<ComplexMatrix<Real>> eig(cap, Eigen::EigenvaluesOnly);
    const Real lo = eig.eigenvalues().minCoeff();
    const Real hi = eig.eigenvalues().maxCoeff();
    condition_ = lo > Real(0) ? double(hi / lo) : HUGE_VAL;
    if (!(condition_ <= condition_limit))
      throw NumericError("structured_solve: Woodbury capacitance condition estimate " +
                             std::to_string(condition_) + " exceeds limit",
                         condition_);
    capacitance_.compute(cap);
  }

  template <typename Derived>
  ComplexVector<Real> solve(const Eigen::MatrixBase<Derived>& rhs) const {
    if (rhs.size() != dim_)
      throw DimensionError("structured_solve: rhs length " +
                           std::to_string(rhs.size()) + ", expected " +
                           std::to_string(dim_));
    ComplexVector<Real> x = rhs;
    apply_block_inverse(x);
    if (terms_.cols() == 0) return x;
    const ComplexVector<Real> coeff = capacitance_.solve(terms_.adjoint() * x);
    x.noalias() -= scaled_terms_ * coeff;
    return x;
  }

  Eigen::Index dim() const noexcept { return dim_; }
  /// Condition number of the K x K capacitance (1 when K = 0).
  double capacitance_condition() const noexcept { return condition_; }

 private:
  // (c g g^H + ridge I_N)^{-1} on each length-N block, in place.
  template <typename Derived>
  void apply_block_inverse(Eigen::MatrixBase<Derived>&& x) const {
    apply_block_inverse(x);
  }
  template <typename Derived>
  void apply_block_inverse(Eigen::MatrixBase<Derived>& x) const {
    const Real inv_ridge = Real(1) / gram_.ridge;
    if (gram_.kron_scale == Real(0)) {
      x *= inv_ridge;
      return;
    }
    const auto& g = gram_.kron_vector;
    const Eigen::Index n = g.size();
    const Real beta = gram_.kron_scale / (gram_.ridge + gram_.kron_scale * g.squaredNorm());
    for (Eigen::Index b = 0; b < n; ++b) {
      auto blk = x.segment(b * n, n);
      const std::complex<Real> proj = g.dot(blk);  // g^H blk
      blk = inv_ridge * (blk - beta * proj * g);
    }
  }

  StructuredGram<Real> gram_;
  Eigen::Index dim_;
  ComplexMatrix<Real> terms_;         // A = [a_1 ... a_K]
  ComplexMatrix<Real> scaled_terms_;  // B^{-1} A
  Eigen::LDLT<ComplexMatrix<Real>> capacitance_;
  double condition_ = 1.0;
};

/// Solves G x = rhs for a StructuredGram G. Throws NumericError when the
/// Woodbury capacitance condition estimate exceeds `condition_limit`.
template <typename Real, typename Derived>
ComplexVector<Real> structured_solve(
    const StructuredGram<Real>& g, const Eigen::MatrixBase<Derived>& rhs,
    double condition_limit = kCapacitanceConditionLimit) {
  return StructuredGramFactor<Real>(g, rhs.size(), condition_limit).solve(rhs);
}

/// Reference solve by full-pivot LU.
template <typename DerivedM, typename DerivedV>
Eigen::Matrix<typename DerivedM::Scalar, Eigen::Dynamic, 1> dense_solve(
    const Eigen::MatrixBase<DerivedM>& m, const Eigen::MatrixBase<DerivedV>& rhs) {
  if (m.rows() != m.cols() || m.rows() != rhs.rows())
    throw DimensionError("dense_solve: matrix " + std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()) + " vs rhs length " +
                         std::to_string(rhs.rows()));
  using Mat = Eigen::Matrix<typename DerivedM::Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Eigen::FullPivLU<Mat> lu(m);
  if (!lu.isInvertible())
    throw NumericError("dense_solve: matrix is numerically singular",
                       double(lu.rank()));
  return lu.solve(rhs);
}

/// Entrywise projection onto the unit circle: exp(j*angle(v_l)).
/// Zero entries map to 1.
template <typename Derived>
typename Derived::PlainObject phase_project(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  using Real = typename Scalar::value_type;
  typename Derived::PlainObject out = v.unaryExpr([](const Scalar& x) {
    if (x == Scalar(0)) return Scalar(1, 0);
    return std::polar(Real(1), std::arg(x));
  });
  return out;
}

}  // namespace umwfl
