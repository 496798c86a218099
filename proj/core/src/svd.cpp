#include "ucan/svd.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ucan {

std::vector<double> jacobi_singular_values(const Mat& a, double tol, int max_sweeps) {
    // Work on the taller orientation so columns are at least as long as they
    // are numerous; singular values are invariant under transposition.
    const bool flip = a.rows() < a.cols();
    const int m = flip ? a.cols() : a.rows(); // column length
    const int n = flip ? a.rows() : a.cols(); // column count

    // column-major working copy in double
    std::vector<double> cols(std::size_t(m) * n);
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) {
            const double v = a.at(i, j);
            if (flip)
                cols[std::size_t(i) * m + j] = v;
            else
                cols[std::size_t(j) * m + i] = v;
        }

    std::vector<double> sq(n); // cached squared column norms
    auto recompute_norms = [&]() {
        for (int j = 0; j < n; ++j) {
            const double* cj = cols.data() + std::size_t(j) * m;
            double s = 0.0;
            for (int r = 0; r < m; ++r) s += cj[r] * cj[r];
            sq[j] = s;
        }
    };
    recompute_norms();

    double max_resid = 0.0;
    bool converged = false;
    for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
        recompute_norms(); // discard algebraic-update drift once per sweep
        // columns at the double noise floor relative to the largest one are
        // converged zeros; orthogonalising against them is meaningless
        double max_sq = 0.0;
        for (double s : sq) max_sq = std::max(max_sq, s);
        if (max_sq == 0.0) break;
        const double dead = max_sq * 1e-28;
        max_resid = 0.0;
        for (int j = 1; j < n; ++j) {
            for (int i = 0; i < j; ++i) {
                double* ci = cols.data() + std::size_t(i) * m;
                double* cj = cols.data() + std::size_t(j) * m;
                const double aa = sq[i], bb = sq[j];
                if (aa <= dead || bb <= dead) continue;
                double c = 0.0;
                for (int r = 0; r < m; ++r) c += ci[r] * cj[r];
                const double resid = std::abs(c) / std::sqrt(aa * bb);
                max_resid = std::max(max_resid, resid);
                if (resid <= tol) continue;

                // rotation diagonalising [[aa, c], [c, bb]]
                const double zeta = (bb - aa) / (2.0 * c);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double cs = 1.0 / std::sqrt(1.0 + t * t);
                const double sn = cs * t;
                for (int r = 0; r < m; ++r) {
                    const double vi = ci[r], vj = cj[r];
                    ci[r] = cs * vi - sn * vj;
                    cj[r] = sn * vi + cs * vj;
                }
                sq[i] = std::max(aa - t * c, 0.0);
                sq[j] = std::max(bb + t * c, 0.0);
            }
        }
        converged = max_resid <= tol;
    }
    if (!converged)
        throw NumericError("jacobi svd: no convergence after " +
                           std::to_string(max_sweeps) + " sweeps (residual " +
                           std::to_string(max_resid) + ", target " + std::to_string(tol) +
                           ", " + std::to_string(m) + "x" + std::to_string(n) + ")");

    std::vector<double> sigma(n);
    for (int j = 0; j < n; ++j) {
        const double* cj = cols.data() + std::size_t(j) * m;
        double s = 0.0;
        for (int r = 0; r < m; ++r) s += cj[r] * cj[r];
        sigma[j] = std::sqrt(s);
    }
    std::sort(sigma.begin(), sigma.end(), std::greater<double>());
    return sigma;
}

int numerical_rank(const std::vector<double>& singular_values, double tol) {
    if (singular_values.empty()) return 0;
    const double cutoff = tol * singular_values.front();
    if (singular_values.front() == 0.0) return 0;
    int rank = 0;
    for (double s : singular_values)
        if (s > cutoff) ++rank;
    return rank;
}

} // namespace ucan
