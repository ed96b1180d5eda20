// Spatial allocation of Markov quotas: multi-objective assignment of pixels
// to competing categories under exact area quotas (MOLA) and the iterative
// contiguity-filter cellular automaton that turns quota releases into a
// final predicted map.
//
// The assignment engine seeds greedily in global score order and then
// cancels positive-gain exchange cycles between categories until no
// improving cycle remains, which makes the full assignment optimal for the
// total-suitability objective (verified against exhaustive search in the
// tests). Conflicted pixels therefore end up with the category that values
// them most, net of quota pressure.
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "prospect/errors.hpp"
#include "prospect/grid.hpp"
#include "prospect/markov.hpp"
#include "prospect/report.hpp"

namespace prospect {

// Fraction of the window currently holding `code`, center included,
// denominator truncated at the grid border.
inline ContinuousRaster contiguity_boost(const CategoricalRaster& map, int code, int window) {
    if (window < 3 || window % 2 == 0) throw ConfigError("contiguity_boost: window must be odd and >= 3");
    const int half = window / 2;
    const int rows = map.rows, cols = map.cols;

    // Summed-area table of the category indicator.
    std::vector<long> sat(static_cast<std::size_t>(rows + 1) * (cols + 1), 0);
    auto sat_at = [&](int r, int c) -> long& { return sat[static_cast<std::size_t>(r) * (cols + 1) + c]; };
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const long v = (map.valid(r, c) && map.at(r, c) == code) ? 1 : 0;
            sat_at(r + 1, c + 1) = v + sat_at(r, c + 1) + sat_at(r + 1, c) - sat_at(r, c);
        }

    ContinuousRaster out(rows, cols, map.cell_size, "boost_cat" + std::to_string(code));
    for (int r = 0; r < rows; ++r) {
        const int r0 = std::max(0, r - half), r1 = std::min(rows - 1, r + half);
        for (int c = 0; c < cols; ++c) {
            const int c0 = std::max(0, c - half), c1 = std::min(cols - 1, c + half);
            const long inside = sat_at(r1 + 1, c1 + 1) - sat_at(r0, c1 + 1) - sat_at(r1 + 1, c0) + sat_at(r0, c0);
            const long denom = static_cast<long>(r1 - r0 + 1) * (c1 - c0 + 1);
            out.at(r, c) = static_cast<double>(inside) / static_cast<double>(denom);
        }
    }
    return out;
}

namespace detail {

struct AllocOutcome {
    std::vector<int> assigned; // per unit: category index, or -1 if untouched
    bool relaxed = false;      // some quota admitted zero-suitability pixels
    long exchange_rounds = 0;
};

// Assigns quota[c] units to every category c. `scores` is unit-major
// (n_units x k). Unassigned units (possible when sum(quota) < n) are left
// at -1. `prefer` optionally carries each unit's current category index,
// winning ties at equal score before the (category, unit) order.
inline AllocOutcome allocate_quota(const std::vector<double>& scores, int k, const std::vector<long>& quota,
                                   const std::vector<int>* prefer) {
    const std::size_t n = scores.size() / static_cast<std::size_t>(k);
    long wanted = 0;
    for (long q : quota) {
        if (q < 0) throw DataError("allocation: negative quota");
        wanted += q;
    }
    if (wanted > static_cast<long>(n)) throw DataError("allocation: quotas exceed available pixels");

    AllocOutcome out;
    out.assigned.assign(n, -1);

    struct Pair {
        double score;
        std::uint8_t pref;
        int cat;
        std::size_t unit;
    };
    std::vector<Pair> pairs;
    pairs.reserve(n * static_cast<std::size_t>(k));
    for (std::size_t u = 0; u < n; ++u)
        for (int c = 0; c < k; ++c)
            pairs.push_back({scores[u * static_cast<std::size_t>(k) + static_cast<std::size_t>(c)],
                             static_cast<std::uint8_t>(prefer && (*prefer)[u] == c ? 1 : 0), c, u});
    std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.pref != b.pref) return a.pref > b.pref;
        if (a.cat != b.cat) return a.cat < b.cat;
        return a.unit < b.unit;
    });

    std::vector<long> left = quota;
    long assigned_total = 0;
    for (const Pair& p : pairs) {
        if (assigned_total == wanted) break;
        if (out.assigned[p.unit] >= 0 || left[static_cast<std::size_t>(p.cat)] == 0) continue;
        out.assigned[p.unit] = p.cat;
        --left[static_cast<std::size_t>(p.cat)];
        ++assigned_total;
        if (p.score <= 0.0) out.relaxed = true; // quota could not fill from positive-suitability pixels
    }

    // Exchange refinement, only meaningful when every unit is assigned.
    if (wanted != static_cast<long>(n)) return out;

    std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(k));
    for (std::size_t u = 0; u < n; ++u) members[static_cast<std::size_t>(out.assigned[u])].push_back(u);

    auto score_of = [&](std::size_t u, int c) { return scores[u * static_cast<std::size_t>(k) + static_cast<std::size_t>(c)]; };

    std::vector<double> gain(static_cast<std::size_t>(k) * k);
    std::vector<std::size_t> mover(static_cast<std::size_t>(k) * k);
    const double eps = 1e-12;
    const long max_rounds = 5000;
    while (out.exchange_rounds < max_rounds) {
        // Best single-pixel move between each ordered category pair.
        for (int c = 0; c < k; ++c) {
            for (int d = 0; d < k; ++d) {
                double best = -std::numeric_limits<double>::infinity();
                std::size_t who = 0;
                if (c != d) {
                    for (std::size_t u : members[static_cast<std::size_t>(c)]) {
                        const double g = score_of(u, d) - score_of(u, c);
                        if (g > best) {
                            best = g;
                            who = u;
                        }
                    }
                }
                gain[static_cast<std::size_t>(c) * k + d] = best;
                mover[static_cast<std::size_t>(c) * k + d] = who;
            }
        }

        // Best positive simple cycle; every cycle is rooted at its smallest
        // category so each is enumerated once.
        double best_gain = eps;
        std::vector<int> best_cycle;
        std::vector<int> path;
        std::vector<char> used(static_cast<std::size_t>(k), 0);
        auto dfs = [&](auto&& self, int root, int node, double acc) -> void {
            const double close = gain[static_cast<std::size_t>(node) * k + root];
            if (path.size() >= 2 && std::isfinite(close) && acc + close > best_gain) {
                best_gain = acc + close;
                best_cycle = path;
            }
            for (int next = root + 1; next < k; ++next) {
                if (used[static_cast<std::size_t>(next)]) continue;
                const double g = gain[static_cast<std::size_t>(node) * k + next];
                if (!std::isfinite(g)) continue;
                used[static_cast<std::size_t>(next)] = 1;
                path.push_back(next);
                self(self, root, next, acc + g);
                path.pop_back();
                used[static_cast<std::size_t>(next)] = 0;
            }
        };
        for (int root = 0; root < k; ++root) {
            std::fill(used.begin(), used.end(), 0);
            used[static_cast<std::size_t>(root)] = 1;
            path.assign(1, root);
            dfs(dfs, root, root, 0.0);
        }
        if (best_cycle.empty()) break;

        // Apply: along the cycle each category sends its best mover to the
        // next one; counts are preserved.
        const std::size_t len = best_cycle.size();
        std::vector<std::pair<std::size_t, int>> moves; // (unit, destination)
        for (std::size_t i = 0; i < len; ++i) {
            const int from = best_cycle[i];
            const int to = best_cycle[(i + 1) % len];
            moves.emplace_back(mover[static_cast<std::size_t>(from) * k + to], to);
        }
        for (const auto& [u, to] : moves) {
            const int from = out.assigned[u];
            auto& src = members[static_cast<std::size_t>(from)];
            src.erase(std::find(src.begin(), src.end(), u));
            members[static_cast<std::size_t>(to)].push_back(u);
            out.assigned[u] = to;
        }
        ++out.exchange_rounds;
    }
    return out;
}

} // namespace detail

struct MolaFlags {
    bool relaxed = false;
    long exchange_rounds = 0;
};

// Multi-objective allocation: every category receives exactly its quota,
// which must add up to the number of valid pixels of the stack. Ties break
// deterministically by (suitability, category code, row-major index).
inline CategoricalRaster mola_assign(const SuitabilityStack& suitabilities, const std::vector<long>& quotas,
                                     MolaFlags* flags = nullptr) {
    if (suitabilities.layers.empty()) throw ConfigError("mola_assign: empty stack");
    const int k = static_cast<int>(suitabilities.layers.size());
    if (static_cast<int>(quotas.size()) != k) throw ConfigError("mola_assign: one quota per category required");
    std::vector<GridShape> shapes;
    for (const auto& l : suitabilities.layers) shapes.push_back(shape_of(l));
    align_check(shapes);

    const ContinuousRaster& ref = suitabilities.layers.front();
    std::vector<std::size_t> units;
    for (std::size_t i = 0; i < ref.values.size(); ++i)
        if (ref.valid_index(i)) units.push_back(i);
    const long total = std::accumulate(quotas.begin(), quotas.end(), 0L);
    if (total != static_cast<long>(units.size()))
        throw DataError("mola_assign: quotas sum to " + std::to_string(total) + " but the stack has " +
                        std::to_string(units.size()) + " valid pixels");

    std::vector<double> scores(units.size() * static_cast<std::size_t>(k), 0.0);
    for (std::size_t u = 0; u < units.size(); ++u)
        for (int c = 0; c < k; ++c) {
            const double v = suitabilities.layers[static_cast<std::size_t>(c)].values[units[u]];
            scores[u * static_cast<std::size_t>(k) + static_cast<std::size_t>(c)] = std::isnan(v) ? 0.0 : v;
        }

    const auto outcome = detail::allocate_quota(scores, k, quotas, nullptr);
    if (flags) {
        flags->relaxed = outcome.relaxed;
        flags->exchange_rounds = outcome.exchange_rounds;
    }

    CategoricalRaster out(ref.rows, ref.cols, ref.cell_size, 0);
    for (std::size_t u = 0; u < units.size(); ++u)
        out.values[units[u]] = suitabilities.codes[static_cast<std::size_t>(outcome.assigned[u])];
    return out;
}

// Iterative CA: at step i, the fraction i/iterations of the Markov quotas
// is released and allocated on the product of MCE suitability, Markov
// conditional probability and the contiguity boost of the evolving map.
// Unreleased pixels keep their current category until a later step claims
// them; the last step releases the full quota, so final category counts
// equal expected_areas exactly. The evolving map itself wins score ties,
// which keeps persistence deterministic (and makes the identity transition
// matrix a fixed point).
inline PredictionReport ca_markov(const CategoricalRaster& map_t1, const TransitionMatrix& tm,
                                  const SuitabilityStack& suitabilities, int iterations, int window = 5) {
    if (iterations < 1) throw ConfigError("ca_markov: iterations must be >= 1");
    const int k = tm.k;
    if (static_cast<int>(suitabilities.layers.size()) != k)
        throw ConfigError("ca_markov: suitability stack must cover every category");
    std::vector<GridShape> shapes = {shape_of(map_t1, "map_t1")};
    for (const auto& l : suitabilities.layers) shapes.push_back(shape_of(l));
    align_check(shapes);
    tm.check_stochastic(1e-9);

    const auto counts = map_t1.category_counts(k);
    std::vector<double> exact(static_cast<std::size_t>(k), 0.0);
    long total = 0;
    for (int i = 0; i < k; ++i) {
        total += counts[static_cast<std::size_t>(i)];
        for (int c = 0; c < k; ++c)
            exact[static_cast<std::size_t>(c)] += static_cast<double>(counts[static_cast<std::size_t>(i)]) * tm.prob(i, c);
    }

    const SuitabilityStack condprob = conditional_probability_maps(map_t1, tm);

    std::vector<std::size_t> units;
    for (std::size_t i = 0; i < map_t1.cell_count(); ++i)
        if (map_t1.valid_index(i)) units.push_back(i);

    PredictionReport report;
    report.model = "gis";
    report.predicted = map_t1;
    report.probabilities = condprob;
    report.params["iterations"] = std::to_string(iterations);
    report.params["contiguity_window"] = std::to_string(window);

    std::vector<double> scores(units.size() * static_cast<std::size_t>(k));
    std::vector<int> prefer(units.size());
    bool relaxed = false;
    for (int it = 1; it <= iterations; ++it) {
        const double frac = static_cast<double>(it) / static_cast<double>(iterations);
        const long released = (it == iterations) ? total : std::lround(static_cast<double>(total) * frac);
        std::vector<double> scaled(exact);
        for (auto& v : scaled) v *= frac;
        const std::vector<long> quota = largest_remainder_round(scaled, released);

        // Effective score: suitability x conditional probability x contiguity.
        for (int c = 0; c < k; ++c) {
            const ContinuousRaster boost = contiguity_boost(report.predicted, c + 1, window);
            const auto& suit = suitabilities.layers[static_cast<std::size_t>(c)];
            const auto& cond = condprob.layers[static_cast<std::size_t>(c)];
            for (std::size_t u = 0; u < units.size(); ++u) {
                const std::size_t px = units[u];
                const double s = suit.values[px];
                const double p = cond.values[px];
                const double b = boost.values[px];
                scores[u * static_cast<std::size_t>(k) + static_cast<std::size_t>(c)] =
                    (std::isnan(s) || std::isnan(p)) ? 0.0 : s * p * b;
            }
        }
        for (std::size_t u = 0; u < units.size(); ++u) prefer[u] = report.predicted.values[units[u]] - 1;

        const auto outcome = detail::allocate_quota(scores, k, quota, &prefer);
        relaxed = relaxed || outcome.relaxed;
        for (std::size_t u = 0; u < units.size(); ++u)
            if (outcome.assigned[u] >= 0) report.predicted.values[units[u]] = outcome.assigned[u] + 1;
    }
    if (relaxed)
        report.warnings.push_back("some quotas admitted zero-suitability pixels");
    for (const auto& w : tm.warnings) report.warnings.push_back(w);
    return report;
}

} // namespace prospect
