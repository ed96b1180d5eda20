// Markov transition analysis: estimation of a row-stochastic transition
// matrix from two dated maps, rescaling of the matrix to a different time
// horizon, per-pixel conditional probability maps and expected category
// areas (pixel quotas) at the target date.
#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <complex>
#include <fstream>
#include <string>
#include <vector>

#include "prospect/errors.hpp"
#include "prospect/grid.hpp"
#include "prospect/rng.hpp"

namespace prospect {

struct TransitionMatrix {
    int k = 0;
    int dt = 0;                  // years spanned by the matrix
    std::vector<double> p;       // k x k row-stochastic probabilities
    std::vector<long> counts;    // k x k observed pixel tallies (estimation only)
    std::vector<int> empty_rows; // categories absent at t0, forced to identity
    bool interpolated = false;   // rescale fell back to linear interpolation
    std::vector<std::string> warnings;

    double prob(int i, int j) const { return p[static_cast<std::size_t>(i) * k + j]; }
    double& prob(int i, int j) { return p[static_cast<std::size_t>(i) * k + j]; }
    long count(int i, int j) const { return counts[static_cast<std::size_t>(i) * k + j]; }

    void check_stochastic(double tol = 1e-12) const {
        for (int i = 0; i < k; ++i) {
            double sum = 0.0;
            for (int j = 0; j < k; ++j) {
                const double v = prob(i, j);
                if (v < -tol || v > 1.0 + tol)
                    throw DataError("transition matrix entry out of [0,1] at row " + std::to_string(i + 1));
                sum += v;
            }
            if (std::abs(sum - 1.0) > 1e-9)
                throw DataError("transition matrix row " + std::to_string(i + 1) + " sums to " + std::to_string(sum));
        }
    }
};

// Per-category probability (or suitability) layers sharing one grid.
struct SuitabilityStack {
    std::vector<int> codes;
    std::vector<ContinuousRaster> layers;

    const ContinuousRaster& layer_for(int code) const {
        for (std::size_t i = 0; i < codes.size(); ++i)
            if (codes[i] == code) return layers[i];
        throw DataError("suitability stack: no layer for code " + std::to_string(code));
    }
};

// Tally of category transitions between two dated maps. Pixels must be
// valid at both dates to count. Categories with no pixel at t0 get an
// identity row (self-persistence) and a warning.
inline TransitionMatrix estimate_transition(const CategoricalRaster& map_t0, const CategoricalRaster& map_t1, int k) {
    align_check({shape_of(map_t0, "map_t0"), shape_of(map_t1, "map_t1")});
    if (map_t0.date >= map_t1.date) throw DataError("estimate_transition: map_t0 must predate map_t1");

    TransitionMatrix tm;
    tm.k = k;
    tm.dt = map_t1.date - map_t0.date;
    tm.p.assign(static_cast<std::size_t>(k) * k, 0.0);
    tm.counts.assign(static_cast<std::size_t>(k) * k, 0);
    for (std::size_t i = 0; i < map_t0.cell_count(); ++i) {
        if (!map_t0.valid_index(i) || !map_t1.valid_index(i)) continue;
        const int a = map_t0.values[i], b = map_t1.values[i];
        if (a < 1 || a > k || b < 1 || b > k) throw DataError("estimate_transition: code outside legend");
        ++tm.counts[static_cast<std::size_t>(a - 1) * k + (b - 1)];
    }
    for (int i = 0; i < k; ++i) {
        long row_sum = 0;
        for (int j = 0; j < k; ++j) row_sum += tm.count(i, j);
        if (row_sum == 0) {
            tm.prob(i, i) = 1.0;
            tm.empty_rows.push_back(i + 1);
            tm.warnings.push_back("category " + std::to_string(i + 1) +
                                  " absent at t0; identity row assumed");
        } else {
            for (int j = 0; j < k; ++j)
                tm.prob(i, j) = static_cast<double>(tm.count(i, j)) / static_cast<double>(row_sum);
        }
    }
    return tm;
}

namespace detail {

inline void clip_and_renormalize(TransitionMatrix& tm) {
    for (int i = 0; i < tm.k; ++i) {
        double sum = 0.0;
        for (int j = 0; j < tm.k; ++j) {
            double& v = tm.prob(i, j);
            if (v < 0.0) v = 0.0;
            sum += v;
        }
        if (sum <= 1e-12) { // degenerate row: fall back to persistence
            for (int j = 0; j < tm.k; ++j) tm.prob(i, j) = (i == j) ? 1.0 : 0.0;
            tm.warnings.push_back("row " + std::to_string(i + 1) + " degenerated during rescale; identity assumed");
        } else {
            for (int j = 0; j < tm.k; ++j) tm.prob(i, j) /= sum;
        }
    }
}

} // namespace detail

// Rescales P (spanning P.dt years) to span target_dt years: P^(target/dt).
// Integer exponents use the exact matrix power. Fractional exponents go
// through the eigendecomposition, taking the real part, clipping negative
// entries at zero and renormalizing rows. If the matrix is defective the
// rescale falls back to per-year linear interpolation between the identity
// and P, flagged on the result.
inline TransitionMatrix rescale_transition(const TransitionMatrix& tm, int target_dt) {
    if (target_dt < 1) throw ConfigError("rescale_transition: target_dt must be >= 1");
    if (tm.dt <= 0) throw DataError("rescale_transition: source matrix has no time span");
    tm.check_stochastic(1e-9);
    const int k = tm.k;
    TransitionMatrix out = tm;
    out.dt = target_dt;
    if (target_dt == tm.dt) return out;

    if (target_dt % tm.dt == 0) {
        const int e = target_dt / tm.dt;
        Eigen::MatrixXd P(k, k);
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) P(i, j) = tm.prob(i, j);
        Eigen::MatrixXd R = Eigen::MatrixXd::Identity(k, k);
        for (int t = 0; t < e; ++t) R = R * P;
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) out.prob(i, j) = R(i, j);
        // Products of stochastic matrices stay stochastic; only rounding is repaired.
        detail::clip_and_renormalize(out);
        return out;
    }

    const double e = static_cast<double>(target_dt) / static_cast<double>(tm.dt);
    Eigen::MatrixXd P(k, k);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) P(i, j) = tm.prob(i, j);

    Eigen::EigenSolver<Eigen::MatrixXd> solver(P);
    bool ok = solver.info() == Eigen::Success;
    Eigen::MatrixXcd result;
    if (ok) {
        const Eigen::MatrixXcd V = solver.eigenvectors();
        const Eigen::VectorXcd lambda = solver.eigenvalues();
        Eigen::FullPivLU<Eigen::MatrixXcd> lu(V);
        if (!lu.isInvertible()) {
            ok = false;
        } else {
            // Reconstruction residual guards against near-defective matrices,
            // where V^{-1} amplifies noise.
            const Eigen::MatrixXcd recon = V * lambda.asDiagonal() * lu.inverse();
            if ((recon.real() - P).cwiseAbs().maxCoeff() > 1e-8 || recon.imag().cwiseAbs().maxCoeff() > 1e-8) {
                ok = false;
            } else {
                Eigen::VectorXcd powered(k);
                for (int i = 0; i < k; ++i) powered(i) = std::pow(lambda(i), std::complex<double>(e, 0.0));
                result = V * powered.asDiagonal() * lu.inverse();
            }
        }
    }

    if (ok) {
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) out.prob(i, j) = result(i, j).real();
    } else {
        // Linear path: P(t) = (1 - t/dt) I + (t/dt) P, evaluated at target_dt.
        out.interpolated = true;
        out.warnings.push_back("eigendecomposition unreliable; linear per-year interpolation used");
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) out.prob(i, j) = (i == j ? 1.0 - e : 0.0) + e * tm.prob(i, j);
    }
    detail::clip_and_renormalize(out);
    return out;
}

// Layer c holds, for every valid pixel x, P[code(x)][c]; nodata passes through.
inline SuitabilityStack conditional_probability_maps(const CategoricalRaster& map_t1, const TransitionMatrix& tm) {
    SuitabilityStack stack;
    for (int c = 0; c < tm.k; ++c) {
        stack.codes.push_back(c + 1);
        stack.layers.emplace_back(map_t1.rows, map_t1.cols, map_t1.cell_size, "p_cat" + std::to_string(c + 1));
    }
    for (std::size_t i = 0; i < map_t1.cell_count(); ++i) {
        if (!map_t1.valid_index(i)) continue;
        const int code = map_t1.values[i];
        if (code < 1 || code > tm.k) throw DataError("conditional_probability_maps: code outside legend");
        for (int c = 0; c < tm.k; ++c) stack.layers[static_cast<std::size_t>(c)].values[i] = tm.prob(code - 1, c);
    }
    return stack;
}

// Rounds non-negative reals to integers preserving their exact total
// (largest-remainder rule; ties go to the lower index).
inline std::vector<long> largest_remainder_round(const std::vector<double>& exact, long total) {
    const std::size_t n = exact.size();
    std::vector<long> out(n, 0);
    std::vector<std::pair<double, std::size_t>> rem(n);
    long assigned = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (exact[i] < 0.0) throw DataError("largest_remainder_round: negative input");
        const double fl = std::floor(exact[i]);
        out[i] = static_cast<long>(fl);
        assigned += out[i];
        rem[i] = {exact[i] - fl, i};
    }
    long left = total - assigned;
    if (left < 0) throw DataError("largest_remainder_round: floor total exceeds target");
    std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::size_t i = 0; left > 0; i = (i + 1) % n, --left) out[rem[i].second] += 1;
    return out;
}

// Markov pixel quotas at the target date: quota[c] = sum_i n_i(map) P[i][c],
// rounded so the quotas add up to the map's valid pixel count exactly.
inline std::vector<long> expected_areas(const CategoricalRaster& map_t1, const TransitionMatrix& tm) {
    const auto counts = map_t1.category_counts(tm.k);
    std::vector<double> exact(static_cast<std::size_t>(tm.k), 0.0);
    long total = 0;
    for (int i = 0; i < tm.k; ++i) {
        total += counts[static_cast<std::size_t>(i)];
        for (int c = 0; c < tm.k; ++c)
            exact[static_cast<std::size_t>(c)] += static_cast<double>(counts[static_cast<std::size_t>(i)]) * tm.prob(i, c);
    }
    return largest_remainder_round(exact, total);
}

// Pure stochastic integration of the conditional probability maps: every
// valid pixel samples its next category from its transition row. Kept as a
// documented baseline; the result is spatially noisy compared to the
// allocation pipeline.
inline CategoricalRaster stochastic_integration(const CategoricalRaster& map_t1, const TransitionMatrix& tm,
                                                std::uint64_t seed) {
    Rng rng(seed);
    CategoricalRaster out = map_t1;
    std::vector<double> row(static_cast<std::size_t>(tm.k));
    for (std::size_t i = 0; i < out.cell_count(); ++i) {
        if (!out.valid_index(i)) continue;
        const int code = map_t1.values[i];
        for (int c = 0; c < tm.k; ++c) row[static_cast<std::size_t>(c)] = tm.prob(code - 1, c);
        const int pick = rng.weighted_index(row);
        out.values[i] = (pick < 0) ? code : pick + 1;
    }
    return out;
}

// CSV serialization: one block of counts, one of probabilities, with
// labelled rows and columns.
inline void write_transition_csv(const TransitionMatrix& tm, const Legend& legend, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "matrix,from";
    for (const auto& c : legend.categories) out << ',' << c.name;
    out << '\n';
    for (int i = 0; i < tm.k; ++i) {
        out << "count," << legend.category(i + 1).name;
        for (int j = 0; j < tm.k; ++j) out << ',' << tm.count(i, j);
        out << '\n';
    }
    for (int i = 0; i < tm.k; ++i) {
        out << "prob," << legend.category(i + 1).name;
        for (int j = 0; j < tm.k; ++j) out << ',' << detail::format_double(tm.prob(i, j));
        out << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

} // namespace prospect
