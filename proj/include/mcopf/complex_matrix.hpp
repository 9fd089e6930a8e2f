#pragma once

#include <Eigen/Dense>
#include <complex>
#include <vector>

namespace mcopf {

using cx = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;

inline constexpr cx J{0.0, 1.0};

// Predicates for dense complex matrices. All tolerances are absolute,
// entrywise for the symmetry checks and on factorization pivots for
// definiteness.
bool is_symmetric(const CMat& m, double tol = 1e-9);
bool is_hermitian(const CMat& m, double tol = 1e-9);

// Hermitian positive definiteness via an unpivoted Cholesky attempt on the
// Hermitian part; fails if any pivot drops below tol.
bool is_positive_definite(const CMat& m, double tol = 1e-10);

// Schur complement Z_kk - Z_ke Z_ee^{-1} Z_ek over the kept indices, where
// e = eliminate. Throws singular_block_error when Z_ee is not invertible.
CMat kron_reduce(const CMat& z, const std::vector<int>& eliminate);

} // namespace mcopf
