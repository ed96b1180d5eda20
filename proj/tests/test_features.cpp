#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "prospect/features.hpp"
#include "prospect/rng.hpp"
#include "prospect/synth.hpp"

using namespace prospect;

namespace {

CategoricalRaster random_map(int rows, int cols, int k, std::uint64_t seed, double nodata_frac = 0.0) {
    Rng rng(seed);
    CategoricalRaster m(rows, cols, 18.0, 1980);
    for (auto& v : m.values) v = (rng.uniform01() < nodata_frac) ? m.nodata : rng.int_range(1, k);
    return m;
}

// Brute-force reference: plain double loop over all offsets with the same
// weight rule, kept independent of the implementation.
std::vector<double> brute_force_frequencies(const CategoricalRaster& map, int row, int col,
                                            const NeighborhoodSpec& spec, int k) {
    std::vector<double> freq(static_cast<std::size_t>(k), 0.0);
    double total = 0.0;
    for (int dr = -spec.radius; dr <= spec.radius; ++dr) {
        for (int dc = -spec.radius; dc <= spec.radius; ++dc) {
            if (dr == 0 && dc == 0) continue;
            const int r = row + dr, c = col + dc;
            if (r < 0 || r >= map.rows || c < 0 || c >= map.cols) continue;
            if (!map.valid(r, c)) continue;
            const int ring = std::max(std::abs(dr), std::abs(dc));
            double w = 0.0;
            switch (spec.family) {
            case DecayFamily::inverse: w = 1.0 / ring; break;
            case DecayFamily::inverse_square: w = 1.0 / (ring * ring); break;
            case DecayFamily::gaussian: w = std::exp(-0.5 * ring * ring / (spec.gaussian_sigma * spec.gaussian_sigma)); break;
            }
            freq[static_cast<std::size_t>(map.at(r, c) - 1)] += w;
            total += w;
        }
    }
    if (total > 0.0)
        for (auto& f : freq) f /= total;
    return freq;
}

} // namespace

TEST_CASE("disjunctive coding") {
    REQUIRE(disjunctive_encode(1, 8) == std::vector<double>{1, 0, 0, 0, 0, 0, 0, 0});
    REQUIRE(disjunctive_encode(2, 8) == std::vector<double>{0, 1, 0, 0, 0, 0, 0, 0});
    REQUIRE(disjunctive_encode(5, 5) == std::vector<double>{0, 0, 0, 0, 1});
    REQUIRE_THROWS_AS(disjunctive_encode(0, 8), DataError);
    REQUIRE_THROWS_AS(disjunctive_encode(9, 8), DataError);
}

TEST_CASE("neighborhood frequencies, ring-1 cases") {
    CategoricalRaster m(3, 3, 18.0, 1980, 3);
    m.at(1, 1) = 1; // center differs; it must be excluded
    const NeighborhoodSpec spec{1, DecayFamily::inverse};

    SECTION("uniform ring") {
        const auto nf = neighborhood_frequencies(m, 1, 1, spec, 8);
        REQUIRE(nf.has_neighbors);
        REQUIRE(nf.freq[2] == Catch::Approx(1.0));
        REQUIRE(nf.freq[0] == 0.0);
    }
    SECTION("half and half") {
        // 4 neighbors of category 1 and 4 of category 2 around the center.
        m.at(0, 0) = 1;
        m.at(0, 1) = 1;
        m.at(0, 2) = 1;
        m.at(1, 0) = 1;
        m.at(1, 2) = 2;
        m.at(2, 0) = 2;
        m.at(2, 1) = 2;
        m.at(2, 2) = 2;
        const auto nf = neighborhood_frequencies(m, 1, 1, spec, 8);
        REQUIRE(nf.freq[0] == Catch::Approx(0.5));
        REQUIRE(nf.freq[1] == Catch::Approx(0.5));
    }
    SECTION("no valid neighbors flags instead of failing") {
        CategoricalRaster lone(1, 1, 18.0, 1980, 5);
        const auto nf = neighborhood_frequencies(lone, 0, 0, spec, 8);
        REQUIRE_FALSE(nf.has_neighbors);
        for (double f : nf.freq) REQUIRE(f == 0.0);
    }
}

TEST_CASE("neighborhood frequencies match the brute-force oracle at radius 3") {
    const CategoricalRaster m = random_map(24, 20, 6, 99, 0.08);
    const NeighborhoodSpec spec{3, DecayFamily::inverse};
    for (int r = 0; r < m.rows; r += 3) {
        for (int c = 0; c < m.cols; c += 2) {
            const auto got = neighborhood_frequencies(m, r, c, spec, 6);
            const auto want = brute_force_frequencies(m, r, c, spec, 6);
            for (int j = 0; j < 6; ++j) REQUIRE(got.freq[static_cast<std::size_t>(j)] == Catch::Approx(want[static_cast<std::size_t>(j)]).margin(1e-12));
        }
    }
}

TEST_CASE("frequencies form a probability vector and are translation equivariant") {
    const CategoricalRaster m = random_map(30, 30, 5, 123);
    const NeighborhoodSpec spec{2, DecayFamily::inverse_square};
    // Probability vector away from nodata.
    const auto nf = neighborhood_frequencies(m, 10, 10, spec, 5);
    double sum = 0.0;
    for (double f : nf.freq) {
        REQUIRE(f >= 0.0);
        sum += f;
    }
    REQUIRE(sum == Catch::Approx(1.0).epsilon(1e-12));

    // Shift the map content by (2, 3): interior queries shift identically.
    CategoricalRaster shifted(m.rows, m.cols, m.cell_size, m.date, 1);
    for (int r = 0; r + 2 < m.rows; ++r)
        for (int c = 0; c + 3 < m.cols; ++c) shifted.at(r + 2, c + 3) = m.at(r, c);
    const auto a = neighborhood_frequencies(m, 12, 12, spec, 5);
    const auto b = neighborhood_frequencies(shifted, 14, 15, spec, 5);
    for (int j = 0; j < 5; ++j) REQUIRE(a.freq[static_cast<std::size_t>(j)] == Catch::Approx(b.freq[static_cast<std::size_t>(j)]).margin(1e-12));
}

TEST_CASE("frontier pixels") {
    SECTION("uniform map has none") {
        CategoricalRaster m(8, 8, 18.0, 1980, 2);
        const auto mask = frontier_pixels(m);
        for (auto f : mask) REQUIRE(f == 0);
    }
    SECTION("two half planes: exactly the two abutting columns") {
        CategoricalRaster m(6, 8, 18.0, 1980, 1);
        for (int r = 0; r < 6; ++r)
            for (int c = 4; c < 8; ++c) m.at(r, c) = 2;
        const auto mask = frontier_pixels(m);
        for (int r = 0; r < 6; ++r)
            for (int c = 0; c < 8; ++c) REQUIRE(static_cast<int>(mask[m.index(r, c)]) == ((c == 3 || c == 4) ? 1 : 0));
    }
    SECTION("random map equals direct 8-neighbor scan") {
        const CategoricalRaster m = random_map(32, 32, 4, 7, 0.05);
        const auto mask = frontier_pixels(m);
        for (int r = 0; r < 32; ++r) {
            for (int c = 0; c < 32; ++c) {
                bool want = false;
                if (m.valid(r, c)) {
                    for (int dr = -1; dr <= 1; ++dr)
                        for (int dc = -1; dc <= 1; ++dc) {
                            if (dr == 0 && dc == 0) continue;
                            const int rr = r + dr, cc = c + dc;
                            if (rr < 0 || rr >= 32 || cc < 0 || cc >= 32 || !m.valid(rr, cc)) continue;
                            if (m.at(rr, cc) != m.at(r, c)) want = true;
                        }
                }
                REQUIRE(static_cast<bool>(mask[m.index(r, c)]) == want);
            }
        }
    }
    SECTION("invariant under category relabelling") {
        const CategoricalRaster m = random_map(20, 20, 4, 8);
        const int perm[] = {0, 3, 1, 4, 2}; // code -> permuted code
        CategoricalRaster p = m;
        for (auto& v : p.values) v = perm[v];
        REQUIRE(frontier_pixels(m) == frontier_pixels(p));
    }
}

TEST_CASE("standardize") {
    SECTION("two-point layer becomes -1 / +1") {
        ContinuousRaster f(1, 2, 18.0, "toy");
        f.at(0, 0) = 0.0;
        f.at(0, 1) = 2.0;
        const auto s = standardize(f);
        REQUIRE(s.mean == Catch::Approx(1.0));
        REQUIRE(s.sd == Catch::Approx(1.0));
        REQUIRE(s.layer.at(0, 0) == Catch::Approx(-1.0));
        REQUIRE(s.layer.at(0, 1) == Catch::Approx(1.0));
    }
    SECTION("idempotent up to tolerance") {
        Rng rng(3);
        ContinuousRaster f(10, 10, 18.0, "noise");
        for (auto& v : f.values) v = rng.normal(0.0, 2.0);
        const auto once = standardize(f);
        const auto twice = standardize(once.layer);
        for (std::size_t i = 0; i < f.values.size(); ++i)
            REQUIRE(twice.layer.values[i] == Catch::Approx(once.layer.values[i]).margin(1e-10));
    }
    SECTION("mean and sd match an exact two-pass computation") {
        Rng rng(17);
        ContinuousRaster f(16, 16, 18.0, "elev");
        for (auto& v : f.values) v = 1200.0 + 300.0 * rng.uniform01();
        const auto s = standardize(f);
        double mean = 0.0;
        for (double v : f.values) mean += v;
        mean /= static_cast<double>(f.values.size());
        double ss = 0.0;
        for (double v : f.values) ss += (v - mean) * (v - mean);
        const double sd = std::sqrt(ss / static_cast<double>(f.values.size()));
        REQUIRE(s.mean == Catch::Approx(mean).margin(1e-12));
        REQUIRE(s.sd == Catch::Approx(sd).margin(1e-12));
        // Output obeys the contract within 1e-10.
        double m2 = 0.0;
        for (double v : s.layer.values) m2 += v;
        m2 /= static_cast<double>(f.values.size());
        REQUIRE(std::abs(m2) < 1e-10);
    }
    SECTION("constant layer advises exclusion") {
        ContinuousRaster f(4, 4, 18.0, "flat");
        for (auto& v : f.values) v = 5.0;
        REQUIRE_THROWS_WITH(standardize(f), Catch::Matchers::ContainsSubstring("exclude"));
    }
}

TEST_CASE("assemble_dataset") {
    Legend legend = default_legend();
    Rng rng(5);
    CategoricalRaster t0 = random_map(20, 20, 7, 21);
    t0.date = 1980;
    CategoricalRaster t1 = t0;
    t1.date = 1989;
    for (auto& v : t1.values)
        if (rng.uniform01() < 0.2) v = rng.int_range(1, 7);
    // A couple of built-up pixels that must never enter the dataset.
    t0.at(0, 0) = 8;
    t1.at(0, 0) = 8;

    std::vector<ContinuousRaster> factors;
    for (int i = 0; i < 4; ++i) {
        ContinuousRaster f(20, 20, 18.0, "f" + std::to_string(i));
        for (auto& v : f.values) v = rng.normal();
        factors.push_back(std::move(f));
    }
    const NeighborhoodSpec spec{3, DecayFamily::inverse};
    const FeatureBuilder builder(legend, factors, spec);

    SECTION("feature dimension is modelled + legend + factors (19 in the reference setup)") {
        REQUIRE(builder.dim() == 7 + 8 + 4);
        REQUIRE(builder.columns().size() == 19);
    }

    SECTION("rows recompute from the single-pixel operations") {
        const Dataset ds = assemble_dataset(t0, t1, builder, true);
        REQUIRE(ds.n > 0);
        REQUIRE(ds.dim == 19);
        const auto frontier = frontier_pixels(t0);
        for (std::size_t i = 0; i < ds.n; i += 7) {
            const std::size_t px = ds.pixel[i];
            const int r = static_cast<int>(px) / 20, c = static_cast<int>(px) % 20;
            REQUIRE(frontier[px] == 1);
            REQUIRE(ds.target_code[i] == t1.at(r, c));
            const auto row = ds.row(i);
            // One-hot block.
            const auto onehot = disjunctive_encode(t0.at(r, c), 7);
            for (int j = 0; j < 7; ++j) REQUIRE(row[static_cast<std::size_t>(j)] == onehot[static_cast<std::size_t>(j)]);
            // Frequency block.
            const auto nf = neighborhood_frequencies(t0, r, c, spec, 8);
            for (int j = 0; j < 8; ++j)
                REQUIRE(row[static_cast<std::size_t>(7 + j)] == Catch::Approx(nf.freq[static_cast<std::size_t>(j)]).margin(1e-12));
            // Environment block.
            for (int j = 0; j < 4; ++j) {
                const auto s = standardize(factors[static_cast<std::size_t>(j)]);
                REQUIRE(row[static_cast<std::size_t>(15 + j)] == Catch::Approx(s.layer.at(r, c)).margin(1e-12));
            }
        }
        // One-hot sums to one on every row.
        for (std::size_t i = 0; i < ds.n; ++i) {
            double sum = 0.0;
            for (int j = 0; j < 7; ++j) sum += ds.row(i)[static_cast<std::size_t>(j)];
            REQUIRE(sum == 1.0);
        }
    }

    SECTION("uniform map with frontier_only errors on empty selection") {
        CategoricalRaster u0(10, 10, 18.0, 1980, 3);
        CategoricalRaster u1(10, 10, 18.0, 1989, 3);
        REQUIRE_THROWS_AS(assemble_dataset(u0, u1, builder, true), DataError);
    }

    SECTION("wrong date order rejected") {
        REQUIRE_THROWS_AS(assemble_dataset(t1, t0, builder, false), DataError);
    }
}

TEST_CASE("neighborhood spec validation") {
    REQUIRE_THROWS_AS((NeighborhoodSpec{0, DecayFamily::inverse}.validate()), ConfigError);
    REQUIRE_NOTHROW((NeighborhoodSpec{3, DecayFamily::gaussian, 2.0}.validate()));
    REQUIRE_THROWS_AS((NeighborhoodSpec{2, DecayFamily::gaussian, -1.0}.validate()), ConfigError);
}

TEST_CASE("feature matrix CSV export") {
    Legend legend = default_legend();
    Rng rng(61);
    CategoricalRaster t0 = random_map(10, 10, 7, 62);
    t0.date = 1980;
    CategoricalRaster t1 = random_map(10, 10, 7, 63);
    t1.date = 1989;
    std::vector<ContinuousRaster> factors;
    ContinuousRaster f(10, 10, 18.0, "elevation");
    for (auto& v : f.values) v = rng.normal();
    factors.push_back(std::move(f));
    const FeatureBuilder builder(legend, factors, NeighborhoodSpec{1, DecayFamily::inverse});
    const Dataset ds = assemble_dataset(t0, t1, builder, false);

    const auto path = std::filesystem::temp_directory_path() / "prospect_features.csv";
    write_dataset_csv(ds, path);
    std::ifstream in(path);
    std::string header;
    REQUIRE(std::getline(in, header));
    REQUIRE(header == "pixel,target,past_conifer_forest,past_deciduous_forest,past_scrub,past_broom_heath,"
                      "past_grass_heath,past_meadow,past_cultures,nbr_conifer_forest,nbr_deciduous_forest,"
                      "nbr_scrub,nbr_broom_heath,nbr_grass_heath,nbr_meadow,nbr_cultures,nbr_built_up,elevation");
    std::size_t lines = 0;
    std::string line;
    while (std::getline(in, line)) ++lines;
    REQUIRE(lines == ds.n);
}

TEST_CASE("azimuth expansion avoids the 0/360 seam") {
    ContinuousRaster az(1, 3, 18.0, "aspect");
    az.at(0, 0) = 0.0;
    az.at(0, 1) = 360.0;
    az.at(0, 2) = 90.0;
    const auto [s, c] = expand_azimuth(az);
    REQUIRE(s.at(0, 0) == Catch::Approx(s.at(0, 1)).margin(1e-12));
    REQUIRE(c.at(0, 0) == Catch::Approx(c.at(0, 1)).margin(1e-12));
    REQUIRE(s.at(0, 2) == Catch::Approx(1.0));
}
