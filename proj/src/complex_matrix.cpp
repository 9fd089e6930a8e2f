#include "mcopf/complex_matrix.hpp"

#include "mcopf/errors.hpp"

#include <algorithm>
#include <cmath>

namespace mcopf {

bool is_symmetric(const CMat& m, double tol) {
    if (m.rows() != m.cols()) return false;
    return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol;
}

bool is_hermitian(const CMat& m, double tol) {
    if (m.rows() != m.cols()) return false;
    return (m - m.adjoint()).cwiseAbs().maxCoeff() <= tol;
}

bool is_positive_definite(const CMat& m, double tol) {
    if (m.rows() != m.cols() || m.rows() == 0) return false;
    if (!is_hermitian(m, 1e-9)) return false;
    const Eigen::Index n = m.rows();
    CMat a = 0.5 * (m + m.adjoint());
    // Unpivoted Cholesky; every pivot must stay above tol.
    for (Eigen::Index k = 0; k < n; ++k) {
        double pivot = a(k, k).real();
        if (pivot <= tol) return false;
        double d = std::sqrt(pivot);
        a(k, k) = d;
        for (Eigen::Index r = k + 1; r < n; ++r) a(r, k) /= d;
        for (Eigen::Index c = k + 1; c < n; ++c)
            for (Eigen::Index r = c; r < n; ++r) a(r, c) -= a(r, k) * std::conj(a(c, k));
    }
    return true;
}

CMat kron_reduce(const CMat& z, const std::vector<int>& eliminate) {
    const Eigen::Index n = z.rows();
    if (z.cols() != n) throw contract_error("kron_reduce: matrix must be square");
    std::vector<bool> is_elim(static_cast<size_t>(n), false);
    for (int e : eliminate) {
        if (e < 0 || e >= n) throw contract_error("kron_reduce: index out of range");
        is_elim[static_cast<size_t>(e)] = true;
    }
    std::vector<int> kept;
    for (int k = 0; k < n; ++k)
        if (!is_elim[static_cast<size_t>(k)]) kept.push_back(k);
    const auto ne = static_cast<Eigen::Index>(eliminate.size());
    const auto nk = static_cast<Eigen::Index>(kept.size());

    CMat zkk(nk, nk), zke(nk, ne), zek(ne, nk), zee(ne, ne);
    for (Eigen::Index r = 0; r < nk; ++r)
        for (Eigen::Index c = 0; c < nk; ++c) zkk(r, c) = z(kept[r], kept[c]);
    for (Eigen::Index r = 0; r < nk; ++r)
        for (Eigen::Index c = 0; c < ne; ++c) zke(r, c) = z(kept[r], eliminate[c]);
    for (Eigen::Index r = 0; r < ne; ++r)
        for (Eigen::Index c = 0; c < nk; ++c) zek(r, c) = z(eliminate[r], kept[c]);
    for (Eigen::Index r = 0; r < ne; ++r)
        for (Eigen::Index c = 0; c < ne; ++c) zee(r, c) = z(eliminate[r], eliminate[c]);

    Eigen::FullPivLU<CMat> lu(zee);
    if (!lu.isInvertible())
        throw singular_block_error("kron_reduce: eliminated block is singular");
    return zkk - zke * lu.solve(zek);
}

} // namespace mcopf
