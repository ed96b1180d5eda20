#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "prospect/allocation.hpp"
#include "prospect/markov.hpp"
#include "prospect/rng.hpp"
#include "prospect/synth.hpp"

using namespace prospect;

namespace {

SuitabilityStack random_stack(int rows, int cols, int k, std::uint64_t seed) {
    Rng rng(seed);
    SuitabilityStack stack;
    for (int c = 0; c < k; ++c) {
        stack.codes.push_back(c + 1);
        ContinuousRaster l(rows, cols, 18.0, "s" + std::to_string(c + 1));
        for (auto& v : l.values) v = rng.uniform01();
        stack.layers.push_back(std::move(l));
    }
    return stack;
}

// Exhaustive best total suitability over all quota-feasible assignments.
double exhaustive_optimum(const SuitabilityStack& stack, std::vector<long> quotas) {
    const std::size_t n = stack.layers.front().values.size();
    const int k = static_cast<int>(stack.layers.size());
    double best = -1.0;
    std::vector<int> assign(n, -1);
    auto rec = [&](auto&& self, std::size_t i, double acc) -> void {
        if (i == n) {
            best = std::max(best, acc);
            return;
        }
        for (int c = 0; c < k; ++c) {
            if (quotas[static_cast<std::size_t>(c)] == 0) continue;
            --quotas[static_cast<std::size_t>(c)];
            self(self, i + 1, acc + stack.layers[static_cast<std::size_t>(c)].values[i]);
            ++quotas[static_cast<std::size_t>(c)];
        }
    };
    rec(rec, 0, 0.0);
    return best;
}

double total_suitability(const SuitabilityStack& stack, const CategoricalRaster& map) {
    double acc = 0.0;
    for (std::size_t i = 0; i < map.cell_count(); ++i) {
        if (!map.valid_index(i)) continue;
        acc += stack.layers[static_cast<std::size_t>(map.values[i] - 1)].values[i];
    }
    return acc;
}

double same_neighbor_fraction(const CategoricalRaster& map) {
    double acc = 0.0;
    long n = 0;
    for (int r = 0; r < map.rows; ++r)
        for (int c = 0; c < map.cols; ++c) {
            if (!map.valid(r, c)) continue;
            int same = 0, tot = 0;
            for (int dr = -1; dr <= 1; ++dr)
                for (int dc = -1; dc <= 1; ++dc) {
                    if (dr == 0 && dc == 0) continue;
                    const int rr = r + dr, cc = c + dc;
                    if (!map.in_bounds(rr, cc) || !map.valid(rr, cc)) continue;
                    ++tot;
                    if (map.at(rr, cc) == map.at(r, c)) ++same;
                }
            if (tot > 0) {
                acc += static_cast<double>(same) / tot;
                ++n;
            }
        }
    return n ? acc / static_cast<double>(n) : 0.0;
}

ScenarioSpec scenario_spec(int rows, int cols) {
    ScenarioSpec spec;
    spec.rows = rows;
    spec.cols = cols;
    Legend l;
    l.categories = {{1, "forest", 1, ""}, {2, "heath", 2, ""}, {3, "meadow", 3, ""}, {4, "built", 4, ""}};
    l.constant_codes = {4};
    l.validate();
    spec.legend = l;
    spec.dates = {1980, 1989, 2000};
    spec.factors = {{"elevation", FactorKind::gradient_noise, 1000.0, 800.0, 0.3, 3, ""}};
    spec.transitions = {
        {0.85, 0.10, 0.05, 0.0},
        {0.15, 0.75, 0.10, 0.0},
        {0.05, 0.15, 0.80, 0.0},
        {0.0, 0.0, 0.0, 1.0},
    };
    spec.initial_shares = {0.4, 0.3, 0.28, 0.02};
    spec.suitability_influence = 0.4;
    spec.preferences[1][std::string("elevation")] = FactorResponse::high;
    spec.preferences[3][std::string("elevation")] = FactorResponse::low;
    return spec;
}

} // namespace

TEST_CASE("contiguity boost") {
    SECTION("uniform map of the category gives 1 everywhere") {
        CategoricalRaster m(9, 9, 18.0, 1989, 2);
        const auto b = contiguity_boost(m, 2, 5);
        for (double v : b.values) REQUIRE(v == 1.0);
    }
    SECTION("absent category gives 0 everywhere") {
        CategoricalRaster m(9, 9, 18.0, 1989, 2);
        const auto b = contiguity_boost(m, 3, 5);
        for (double v : b.values) REQUIRE(v == 0.0);
    }
    SECTION("isolated pixel spreads 1/25 over its 5x5 window") {
        CategoricalRaster m(11, 11, 18.0, 1989, 1);
        m.at(5, 5) = 2;
        const auto b = contiguity_boost(m, 2, 5);
        REQUIRE(b.at(5, 5) == Catch::Approx(1.0 / 25.0));
        REQUIRE(b.at(3, 3) == Catch::Approx(1.0 / 25.0)); // distance-2 corner
        REQUIRE(b.at(5, 7) == Catch::Approx(1.0 / 25.0));
        REQUIRE(b.at(5, 8) == 0.0);
    }
    SECTION("border windows are truncated, not padded") {
        CategoricalRaster m(9, 9, 18.0, 1989, 1);
        m.at(0, 0) = 2;
        const auto b = contiguity_boost(m, 2, 5);
        REQUIRE(b.at(0, 0) == Catch::Approx(1.0 / 9.0)); // 3x3 window survives at the corner
    }
    SECTION("even window rejected") {
        CategoricalRaster m(5, 5, 18.0, 1989, 1);
        REQUIRE_THROWS_AS(contiguity_boost(m, 1, 4), ConfigError);
        REQUIRE_THROWS_AS(contiguity_boost(m, 1, 1), ConfigError);
    }
}

TEST_CASE("mola_assign") {
    SECTION("single category takes the whole map") {
        SuitabilityStack stack = random_stack(6, 6, 1, 2);
        const auto out = mola_assign(stack, {36});
        for (int v : out.values) REQUIRE(v == 1);
    }
    SECTION("disjoint supports matching quotas are returned exactly") {
        SuitabilityStack stack(random_stack(4, 4, 2, 3));
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c) {
                const bool left = c < 2;
                stack.layers[0].at(r, c) = left ? 0.5 + 0.01 * r : 0.0;
                stack.layers[1].at(r, c) = left ? 0.0 : 0.5 + 0.01 * c;
            }
        const auto out = mola_assign(stack, {8, 8});
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c) REQUIRE(out.at(r, c) == (c < 2 ? 1 : 2));
    }
    SECTION("category counts equal quotas exactly on random stacks") {
        const SuitabilityStack stack = random_stack(20, 20, 3, 9);
        const std::vector<long> quotas = {150, 150, 100};
        const auto out = mola_assign(stack, quotas);
        REQUIRE(out.category_counts(3) == quotas);
    }
    SECTION("quota mismatch rejected") {
        const SuitabilityStack stack = random_stack(4, 4, 2, 5);
        REQUIRE_THROWS_AS(mola_assign(stack, {8, 9}), DataError);
    }
    SECTION("infeasible positive support relaxes into zero-suitability pixels, flagged") {
        SuitabilityStack stack = random_stack(4, 4, 2, 7);
        // Category 2 has support on a single pixel but demands five.
        for (auto& v : stack.layers[1].values) v = 0.0;
        stack.layers[1].at(0, 0) = 0.9;
        MolaFlags flags;
        const auto out = mola_assign(stack, {11, 5}, &flags);
        REQUIRE(flags.relaxed);
        REQUIRE(out.category_counts(2) == std::vector<long>{11, 5});
    }
    SECTION("deterministic: identical inputs give identical maps") {
        const SuitabilityStack stack = random_stack(15, 15, 4, 11);
        const std::vector<long> quotas = {60, 60, 60, 45};
        const auto a = mola_assign(stack, quotas);
        const auto b = mola_assign(stack, quotas);
        REQUIRE(a.values == b.values);
    }
    SECTION("total suitability matches the exhaustive optimum on small instances") {
        // 4x4, two categories.
        for (std::uint64_t seed : {21, 22, 23, 24, 25}) {
            const SuitabilityStack stack = random_stack(4, 4, 2, seed);
            const std::vector<long> quotas = {9, 7};
            const auto out = mola_assign(stack, quotas);
            REQUIRE(out.category_counts(2) == quotas);
            REQUIRE(total_suitability(stack, out) == Catch::Approx(exhaustive_optimum(stack, quotas)).margin(1e-9));
        }
        // 3x3, three categories.
        for (std::uint64_t seed : {31, 32, 33}) {
            const SuitabilityStack stack = random_stack(3, 3, 3, seed);
            const std::vector<long> quotas = {3, 3, 3};
            const auto out = mola_assign(stack, quotas);
            REQUIRE(total_suitability(stack, out) == Catch::Approx(exhaustive_optimum(stack, quotas)).margin(1e-9));
        }
    }
}

TEST_CASE("ca_markov") {
    const ScenarioSpec spec = scenario_spec(48, 48);
    const ScenarioBundle bundle = synth_scenario(spec, 404);
    const CategoricalRaster& t1 = bundle.snapshots[1];
    const int k = spec.legend.size();

    SECTION("identity transitions are a fixed point for any suitabilities") {
        TransitionMatrix tm;
        tm.k = k;
        tm.dt = 11;
        tm.p.assign(static_cast<std::size_t>(k) * k, 0.0);
        for (int i = 0; i < k; ++i) tm.prob(i, i) = 1.0;
        tm.counts.assign(static_cast<std::size_t>(k) * k, 0);
        SuitabilityStack suit = random_stack(48, 48, k, 5);
        suit.layers[0].at(3, 3) = 0.0; // zero-suitability persistence must survive too
        const auto report = ca_markov(t1, tm, suit, 11, 5);
        REQUIRE(report.predicted.values == t1.values);
    }

    SECTION("one iteration collapses to plain mola on the composed scores") {
        const TransitionMatrix est = estimate_transition(bundle.snapshots[0], t1, k);
        const TransitionMatrix tm = rescale_transition(est, 11);
        const SuitabilityStack suit = random_stack(48, 48, k, 6);

        const auto report = ca_markov(t1, tm, suit, 1, 5);

        // Hand-compose the same effective stack and allocate once.
        const SuitabilityStack cond = conditional_probability_maps(t1, tm);
        SuitabilityStack eff;
        for (int c = 0; c < k; ++c) {
            eff.codes.push_back(c + 1);
            ContinuousRaster l = suit.layers[static_cast<std::size_t>(c)];
            const auto boost = contiguity_boost(t1, c + 1, 5);
            for (std::size_t i = 0; i < l.values.size(); ++i) {
                const double p = cond.layers[static_cast<std::size_t>(c)].values[i];
                if (std::isnan(p))
                    l.values[i] = std::numeric_limits<double>::quiet_NaN();
                else
                    l.values[i] = l.values[i] * p * boost.values[i];
            }
            eff.layers.push_back(std::move(l));
        }
        const auto want = mola_assign(eff, expected_areas(t1, tm));
        REQUIRE(report.predicted.values == want.values);
    }

    SECTION("area conservation and determinism on the synthetic scenario") {
        const TransitionMatrix est = estimate_transition(bundle.snapshots[0], t1, k);
        const TransitionMatrix tm = rescale_transition(est, 11);
        const SuitabilityStack suit = random_stack(48, 48, k, 7);
        const auto a = ca_markov(t1, tm, suit, 11, 5);
        const auto b = ca_markov(t1, tm, suit, 11, 5);
        REQUIRE(a.predicted.values == b.predicted.values);
        const auto quotas = expected_areas(t1, tm);
        const auto counts = a.predicted.category_counts(k);
        for (int c = 0; c < k; ++c)
            REQUIRE(std::abs(counts[static_cast<std::size_t>(c)] - quotas[static_cast<std::size_t>(c)]) <= 1);
    }

    SECTION("output clusters at least as much as a quota-matched random allocation") {
        const TransitionMatrix est = estimate_transition(bundle.snapshots[0], t1, k);
        const TransitionMatrix tm = rescale_transition(est, 11);
        const SuitabilityStack suit = random_stack(48, 48, k, 8);
        const auto report = ca_markov(t1, tm, suit, 11, 5);
        const auto quotas = expected_areas(t1, tm);

        // Random allocation with the same quotas.
        Rng rng(99);
        std::vector<std::size_t> cells;
        for (std::size_t i = 0; i < t1.cell_count(); ++i)
            if (t1.valid_index(i)) cells.push_back(i);
        for (std::size_t i = cells.size(); i > 1; --i) std::swap(cells[i - 1], cells[rng.below(i)]);
        CategoricalRaster shuffled(t1.rows, t1.cols, t1.cell_size, t1.date);
        std::size_t pos = 0;
        for (int c = 0; c < k; ++c)
            for (long q = 0; q < quotas[static_cast<std::size_t>(c)]; ++q) shuffled.values[cells[pos++]] = c + 1;

        REQUIRE(same_neighbor_fraction(report.predicted) >= same_neighbor_fraction(shuffled));
    }

    SECTION("pure stochastic integration is noisier than the allocated map") {
        const TransitionMatrix est = estimate_transition(bundle.snapshots[0], t1, k);
        const TransitionMatrix tm = rescale_transition(est, 11);
        const SuitabilityStack suit = random_stack(48, 48, k, 12);
        const auto report = ca_markov(t1, tm, suit, 11, 5);
        const auto noisy = stochastic_integration(t1, tm, 31);
        REQUIRE(same_neighbor_fraction(noisy) < same_neighbor_fraction(report.predicted));
    }
}
