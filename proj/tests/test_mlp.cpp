#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "prospect/features.hpp"
#include "prospect/glm.hpp"
#include "prospect/mlp.hpp"
#include "prospect/rng.hpp"

using namespace prospect;

namespace {

// Independent evaluation of the one-hidden-layer formula, written directly
// from the definition and kept separate from the implementation.
std::vector<double> direct_formula(const MlpWeights& w, const std::vector<double>& x) {
    std::vector<double> out(static_cast<std::size_t>(w.c), 0.0);
    for (int j = 0; j < w.c; ++j) {
        double acc = w.w2[static_cast<std::size_t>(j) * (w.q + 1) + w.q];
        for (int i = 0; i < w.q; ++i) {
            double z = w.w1[static_cast<std::size_t>(i) * (w.d + 1) + w.d];
            for (int l = 0; l < w.d; ++l) z += x[static_cast<std::size_t>(l)] * w.w1[static_cast<std::size_t>(i) * (w.d + 1) + l];
            acc += w.w2[static_cast<std::size_t>(j) * (w.q + 1) + i] / (1.0 + std::exp(-z));
        }
        out[static_cast<std::size_t>(j)] = w.squash_output ? 1.0 / (1.0 + std::exp(-acc)) : acc;
    }
    return out;
}

double finite_diff_check(MlpWeights w, const std::vector<double>& x, const std::vector<int>& t) {
    std::vector<double> g1, g2;
    mlp_gradient(w, x, t, 0, t.size(), g1, g2);
    const double h = 1e-5;
    double worst = 0.0;
    auto probe = [&](std::vector<double>& weights, const std::vector<double>& grad) {
        for (std::size_t i = 0; i < weights.size(); ++i) {
            const double keep = weights[i];
            weights[i] = keep + h;
            const double up = mlp_mse(w, x, t, 0, t.size());
            weights[i] = keep - h;
            const double down = mlp_mse(w, x, t, 0, t.size());
            weights[i] = keep;
            const double numeric = (up - down) / (2.0 * h);
            const double denom = std::max({std::abs(numeric), std::abs(grad[i]), 1e-8});
            worst = std::max(worst, std::abs(numeric - grad[i]) / denom);
        }
    };
    probe(w.w1, g1);
    probe(w.w2, g2);
    return worst;
}

} // namespace

TEST_CASE("forward pass") {
    SECTION("all-zero weights give the documented constant") {
        Rng rng(1);
        MlpWeights w = mlp_init(4, 3, 2, 0.5, rng, true);
        std::fill(w.w1.begin(), w.w1.end(), 0.0);
        std::fill(w.w2.begin(), w.w2.end(), 0.0);
        const std::vector<double> x = {0.3, -1.0, 2.0, 0.1};
        for (double v : mlp_forward(w, x)) REQUIRE(v == Catch::Approx(0.5)); // logistic(0)
        w.squash_output = false;
        for (double v : mlp_forward(w, x)) REQUIRE(v == 0.0);
    }
    SECTION("single hidden unit at zero input is logistic(0) = 0.5") {
        Rng rng(2);
        MlpWeights w = mlp_init(2, 1, 1, 0.5, rng, false);
        std::fill(w.w1.begin(), w.w1.end(), 0.0);
        w.w2 = {1.0, 0.0}; // pass the hidden value through
        const auto out = mlp_forward(w, std::vector<double>{0.0, 0.0});
        REQUIRE(out[0] == Catch::Approx(0.5));
    }
    SECTION("random weights match an independent evaluation of the formula") {
        Rng rng(3);
        for (int rep = 0; rep < 20; ++rep) {
            const int d = rng.int_range(1, 6), q = rng.int_range(1, 5), c = rng.int_range(1, 4);
            MlpWeights w = mlp_init(d, q, c, 1.0, rng, rep % 2 == 0);
            std::vector<double> x(static_cast<std::size_t>(d));
            for (auto& v : x) v = rng.normal();
            const auto got = mlp_forward(w, x);
            const auto want = direct_formula(w, x);
            for (int j = 0; j < c; ++j) REQUIRE(got[static_cast<std::size_t>(j)] == Catch::Approx(want[static_cast<std::size_t>(j)]).margin(1e-12));
        }
    }
    SECTION("dimension mismatch rejected") {
        Rng rng(4);
        const MlpWeights w = mlp_init(3, 2, 2, 0.5, rng);
        REQUIRE_THROWS_AS(mlp_forward(w, std::vector<double>{1.0, 2.0}), DataError);
    }
}

TEST_CASE("backprop gradient matches central finite differences") {
    Rng rng(42);
    for (int rep = 0; rep < 10; ++rep) {
        const int d = rng.int_range(1, 6), q = rng.int_range(1, 4), c = rng.int_range(1, 3);
        const std::size_t n = 12;
        MlpWeights w = mlp_init(d, q, c, 1.0, rng, rep % 2 == 0);
        std::vector<double> x(n * static_cast<std::size_t>(d));
        for (auto& v : x) v = rng.normal();
        std::vector<int> t(n);
        for (auto& v : t) v = rng.int_range(0, c - 1);
        REQUIRE(finite_diff_check(w, x, t) <= 1e-4);
    }
}

TEST_CASE("training behaviour") {
    SECTION("zero learning rate leaves the weights at their initialization") {
        Rng rng(5);
        std::vector<double> x = {0.0, 1.0, 1.0, 0.0};
        std::vector<int> t = {0, 1};
        TrainConfig cfg;
        cfg.learning_rate = 0.0;
        cfg.momentum = 0.0;
        cfg.max_epochs = 50;
        cfg.seed = 9;
        const auto res = mlp_train(x, t, 2, 2, 2, cfg);
        Rng rng2(9);
        const MlpWeights init = mlp_init(2, 2, 2, cfg.init_scale, rng2, cfg.squash_output);
        REQUIRE(res.weights.w1 == init.w1);
        REQUIRE(res.weights.w2 == init.w2);
    }

    SECTION("duplicated rows with one batch per copy equal doubled epochs") {
        Rng rng(6);
        const std::size_t n = 8;
        const int d = 3;
        std::vector<double> x(n * d);
        for (auto& v : x) v = rng.normal();
        std::vector<int> t(n);
        for (auto& v : t) v = rng.int_range(0, 1);

        std::vector<double> x2 = x;
        x2.insert(x2.end(), x.begin(), x.end());
        std::vector<int> t2 = t;
        t2.insert(t2.end(), t.begin(), t.end());

        TrainConfig base;
        base.learning_rate = 0.3;
        base.momentum = 0.5;
        base.seed = 13;
        base.val_fraction = 0.0;
        base.patience = 0;

        TrainConfig dup = base;
        dup.max_epochs = 25;
        dup.batch_size = static_cast<int>(n); // one update per original copy
        TrainConfig plain = base;
        plain.max_epochs = 50;
        plain.batch_size = 0; // full batch over the original set

        const auto a = mlp_train(x2, t2, d, 2, 2, dup);
        const auto b = mlp_train(x, t, d, 2, 2, plain);
        for (std::size_t i = 0; i < a.weights.w1.size(); ++i)
            REQUIRE(a.weights.w1[i] == Catch::Approx(b.weights.w1[i]).margin(1e-12));
        for (std::size_t i = 0; i < a.weights.w2.size(); ++i)
            REQUIRE(a.weights.w2[i] == Catch::Approx(b.weights.w2[i]).margin(1e-12));
    }

    SECTION("deterministic for a fixed seed") {
        Rng rng(7);
        const std::size_t n = 30;
        std::vector<double> x(n * 2);
        for (auto& v : x) v = rng.normal();
        std::vector<int> t(n);
        for (auto& v : t) v = rng.int_range(0, 1);
        TrainConfig cfg;
        cfg.max_epochs = 200;
        cfg.seed = 77;
        const auto a = mlp_train(x, t, 2, 3, 2, cfg);
        const auto b = mlp_train(x, t, 2, 3, 2, cfg);
        REQUIRE(a.weights.w1 == b.weights.w1);
        REQUIRE(a.weights.w2 == b.weights.w2);
    }

    SECTION("separable two-class toy set reaches 95% within 2000 epochs") {
        // Two clusters with a wide margin; d=2, q=2, 20 points.
        Rng rng(8);
        const std::size_t n = 20;
        std::vector<double> x;
        std::vector<int> t;
        Dataset oracle_ds;
        for (std::size_t i = 0; i < n; ++i) {
            const int cls = static_cast<int>(i % 2);
            const double cx = cls ? 2.0 : -2.0;
            x.push_back(cx + 0.3 * rng.normal());
            x.push_back(cx + 0.3 * rng.normal());
            t.push_back(cls);
        }
        // Oracle: a linear logistic model separates the set perfectly.
        oracle_ds.n = n;
        oracle_ds.dim = 2;
        oracle_ds.x = x;
        for (int v : t) oracle_ds.target_code.push_back(v + 1);
        const LogitParams lp = fit_penalized(oracle_ds, {1, 2}, 1e-3);
        std::size_t linear_ok = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto p = logit_probabilities(lp, oracle_ds.row(i));
            if ((p[0] > p[1] ? 1 : 2) == oracle_ds.target_code[i]) ++linear_ok;
        }
        REQUIRE(linear_ok == n); // the set is linearly separable

        TrainConfig cfg;
        cfg.max_epochs = 2000;
        cfg.learning_rate = 0.5;
        cfg.momentum = 0.9;
        cfg.seed = 4;
        const auto res = mlp_train(x, t, 2, 2, 2, cfg);
        std::size_t ok = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto out = mlp_forward(res.weights, std::span<const double>(x.data() + i * 2, 2));
            if ((out[0] > out[1] ? 0 : 1) == t[i]) ++ok;
        }
        REQUIRE(static_cast<double>(ok) / static_cast<double>(n) >= 0.95);
    }

    SECTION("universal approximation smoke test: sin on [-3,3]") {
        const std::size_t n = 60;
        std::vector<double> x;
        std::vector<int> dummy(n, 0);
        for (std::size_t i = 0; i < n; ++i) x.push_back(-3.0 + 6.0 * static_cast<double>(i) / (n - 1));
        // Regression via the raw-linear output: encode sin(x) targets by
        // training on the squared error against a single output unit. The
        // trainer works on one-hot targets, so drive it directly with the
        // gradient routine instead.
        Rng rng(10);
        MlpWeights w = mlp_init(1, 10, 1, 1.0, rng, false);
        std::vector<double> v1(w.w1.size(), 0.0), v2(w.w2.size(), 0.0);
        std::vector<double> g1, g2, hidden, raw, out;
        const double lr = 0.05, mu = 0.9;
        for (int epoch = 0; epoch < 20000; ++epoch) {
            g1.assign(w.w1.size(), 0.0);
            g2.assign(w.w2.size(), 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                prospect::detail::mlp_forward_buffers(w, std::span<const double>(&x[i], 1), hidden, raw, out);
                const double delta = out[0] - std::sin(x[i]);
                for (int hu = 0; hu < w.q; ++hu) {
                    const double h = hidden[static_cast<std::size_t>(hu)];
                    const double dh = delta * w.w2[static_cast<std::size_t>(hu)] * h * (1.0 - h);
                    g1[static_cast<std::size_t>(hu) * 2] += dh * x[i];
                    g1[static_cast<std::size_t>(hu) * 2 + 1] += dh;
                    g2[static_cast<std::size_t>(hu)] += delta * h;
                }
                g2[static_cast<std::size_t>(w.q)] += delta;
            }
            for (auto& g : g1) g /= static_cast<double>(n);
            for (auto& g : g2) g /= static_cast<double>(n);
            for (std::size_t i = 0; i < w.w1.size(); ++i) {
                v1[i] = mu * v1[i] - lr * g1[i];
                w.w1[i] += v1[i];
            }
            for (std::size_t i = 0; i < w.w2.size(); ++i) {
                v2[i] = mu * v2[i] - lr * g2[i];
                w.w2[i] += v2[i];
            }
        }
        double mse = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto y = mlp_forward(w, std::span<const double>(&x[i], 1));
            mse += (y[0] - std::sin(x[i])) * (y[0] - std::sin(x[i]));
        }
        mse /= static_cast<double>(n);
        REQUIRE(mse < 1e-3);
    }

    SECTION("divergence is reported as a convergence error") {
        Rng rng(11);
        const std::size_t n = 16;
        std::vector<double> x(n * 2);
        for (auto& v : x) v = 100.0 * rng.normal();
        std::vector<int> t(n);
        for (auto& v : t) v = rng.int_range(0, 1);
        TrainConfig cfg;
        cfg.learning_rate = 1e6;
        cfg.momentum = 0.99;
        cfg.max_epochs = 500;
        cfg.squash_output = false;
        REQUIRE_THROWS_AS(mlp_train(x, t, 2, 2, 2, cfg), ConvergenceError);
    }
}

TEST_CASE("weight serialization round-trips") {
    Rng rng(12);
    const MlpWeights w = mlp_init(19, 8, 7, 0.5, rng);
    const auto path = std::filesystem::temp_directory_path() / "prospect_mlp_weights.txt";
    save_mlp_weights(w, path);
    const MlpWeights r = load_mlp_weights(path);
    REQUIRE(r.d == w.d);
    REQUIRE(r.q == w.q);
    REQUIRE(r.c == w.c);
    REQUIRE(r.squash_output == w.squash_output);
    REQUIRE(r.w1 == w.w1);
    REQUIRE(r.w2 == w.w2);
}

TEST_CASE("map prediction") {
    Legend legend = default_legend();
    Rng rng(13);
    std::vector<ContinuousRaster> factors;
    for (int i = 0; i < 4; ++i) {
        ContinuousRaster f(16, 16, 18.0, "f" + std::to_string(i));
        for (auto& v : f.values) v = rng.normal();
        factors.push_back(std::move(f));
    }
    const FeatureBuilder builder(legend, factors, NeighborhoodSpec{3, DecayFamily::inverse});

    SECTION("uniform map has no frontier, so prediction is the identity") {
        CategoricalRaster m(16, 16, 18.0, 1989, 3);
        Rng wrng(14);
        const MlpWeights w = mlp_init(static_cast<int>(builder.dim()), 8, 7, 0.5, wrng);
        const auto report = mlp_predict_map(w, m, builder);
        REQUIRE(report.predicted.values == m.values);
    }

    SECTION("weights trained on persistence pairs keep the map fixed") {
        // Two-block map with a frontier through the middle.
        CategoricalRaster m(16, 16, 18.0, 1989, 1);
        for (int r = 0; r < 16; ++r)
            for (int c = 8; c < 16; ++c) m.at(r, c) = 2;
        CategoricalRaster m_next = m;
        m_next.date = 1999;
        const Dataset ds = assemble_dataset(m, m_next, builder, true);
        const auto modelled = builder.modelled_codes();
        std::vector<int> t(ds.n);
        for (std::size_t i = 0; i < ds.n; ++i) {
            const auto it = std::find(modelled.begin(), modelled.end(), ds.target_code[i]);
            t[static_cast<std::size_t>(i)] = static_cast<int>(it - modelled.begin());
        }
        TrainConfig cfg;
        cfg.max_epochs = 1500;
        cfg.learning_rate = 0.5;
        cfg.momentum = 0.9;
        cfg.seed = 21;
        const auto res = mlp_train(ds.x, t, static_cast<int>(ds.dim), 8, static_cast<int>(modelled.size()), cfg);
        const auto report = mlp_predict_map(res.weights, m, builder);
        REQUIRE(report.predicted.values == m.values);
    }
}
