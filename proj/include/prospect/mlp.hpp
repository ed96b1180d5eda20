// One-hidden-layer perceptron: logistic hidden units, linear output scores
// optionally squashed through a logistic at the output (the default), mean
// squared error trained by full-batch or mini-batch gradient descent with
// momentum. Training is bit-deterministic for a fixed seed: weights are
// seeded from the RNG, batches are contiguous chunks in dataset order, and
// gradients are reduced in a fixed order.
#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "prospect/errors.hpp"
#include "prospect/features.hpp"
#include "prospect/grid.hpp"
#include "prospect/report.hpp"
#include "prospect/rng.hpp"

namespace prospect {

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct MlpWeights {
    int d = 0; // inputs
    int q = 0; // hidden units
    int c = 0; // outputs
    bool squash_output = true;
    std::vector<double> w1; // q x (d+1), last column is the hidden bias
    std::vector<double> w2; // c x (q+1), last column is the output bias

    double w1_at(int i, int j) const { return w1[static_cast<std::size_t>(i) * (d + 1) + j]; }
    double w2_at(int j, int i) const { return w2[static_cast<std::size_t>(j) * (q + 1) + i]; }

    void check(std::size_t dim) const {
        if (static_cast<std::size_t>(d) != dim)
            throw DataError("mlp: input has " + std::to_string(dim) + " features, network expects " + std::to_string(d));
    }
};

inline MlpWeights mlp_init(int d, int q, int c, double scale, Rng& rng, bool squash_output = true) {
    if (d < 1 || q < 1 || c < 1) throw ConfigError("mlp: architecture dimensions must be positive");
    MlpWeights w;
    w.d = d;
    w.q = q;
    w.c = c;
    w.squash_output = squash_output;
    w.w1.resize(static_cast<std::size_t>(q) * (d + 1));
    w.w2.resize(static_cast<std::size_t>(c) * (q + 1));
    const double s1 = scale / std::sqrt(static_cast<double>(d + 1));
    const double s2 = scale / std::sqrt(static_cast<double>(q + 1));
    for (auto& x : w.w1) x = rng.uniform(-s1, s1);
    for (auto& x : w.w2) x = rng.uniform(-s2, s2);
    return w;
}

namespace detail {

// Forward pass keeping the hidden activations for backprop. `out` receives
// the output-rule scores, `raw` the pre-squash linear outputs.
inline void mlp_forward_buffers(const MlpWeights& w, std::span<const double> x, std::vector<double>& hidden,
                                std::vector<double>& raw, std::vector<double>& out) {
    hidden.resize(static_cast<std::size_t>(w.q));
    raw.resize(static_cast<std::size_t>(w.c));
    out.resize(static_cast<std::size_t>(w.c));
    for (int i = 0; i < w.q; ++i) {
        double z = w.w1_at(i, w.d); // bias
        for (int j = 0; j < w.d; ++j) z += x[static_cast<std::size_t>(j)] * w.w1_at(i, j);
        hidden[static_cast<std::size_t>(i)] = logistic(z);
    }
    for (int j = 0; j < w.c; ++j) {
        double z = w.w2_at(j, w.q); // bias
        for (int i = 0; i < w.q; ++i) z += w.w2_at(j, i) * hidden[static_cast<std::size_t>(i)];
        raw[static_cast<std::size_t>(j)] = z;
        out[static_cast<std::size_t>(j)] = w.squash_output ? logistic(z) : z;
    }
}

} // namespace detail

// Per-category membership scores for one feature vector.
inline std::vector<double> mlp_forward(const MlpWeights& w, std::span<const double> x) {
    w.check(x.size());
    std::vector<double> hidden, raw, out;
    detail::mlp_forward_buffers(w, x, hidden, raw, out);
    return out;
}

struct TrainConfig {
    double learning_rate = 0.2;
    double lr_decay = 1.0;      // multiplicative per epoch
    double momentum = 0.9;
    int max_epochs = 1000;
    int batch_size = 0;         // 0 = full batch
    double val_fraction = 0.0;  // taken from the tail of the dataset
    int patience = 0;           // epochs without validation improvement; 0 = off
    std::uint64_t seed = 1;
    double init_scale = 0.5;
    bool squash_output = true;

    void validate() const {
        if (learning_rate < 0.0) throw ConfigError("mlp: learning rate must be >= 0");
        if (lr_decay <= 0.0 || lr_decay > 1.0) throw ConfigError("mlp: lr_decay must be in (0,1]");
        if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("mlp: momentum must be in [0,1)");
        if (max_epochs < 0) throw ConfigError("mlp: max_epochs must be >= 0");
        if (val_fraction < 0.0 || val_fraction >= 1.0) throw ConfigError("mlp: val_fraction must be in [0,1)");
        if (batch_size < 0) throw ConfigError("mlp: batch_size must be >= 0");
    }
};

struct EpochStats {
    int epoch = 0;
    double train_mse = 0.0;
    double val_mse = 0.0; // NaN when there is no validation split
};

struct MlpTrainResult {
    MlpWeights weights;
    std::vector<EpochStats> curve;
    int best_epoch = 0; // epoch whose weights were kept (early stopping)
};

// Mean of 0.5 * ||target - output||^2 over the given rows.
inline double mlp_mse(const MlpWeights& w, const std::vector<double>& x, const std::vector<int>& target_idx,
                      std::size_t begin, std::size_t end) {
    if (begin >= end) return std::numeric_limits<double>::quiet_NaN();
    std::vector<double> hidden, raw, out;
    double total = 0.0;
    const std::size_t dim = static_cast<std::size_t>(w.d);
    for (std::size_t i = begin; i < end; ++i) {
        detail::mlp_forward_buffers(w, {x.data() + i * dim, dim}, hidden, raw, out);
        for (int j = 0; j < w.c; ++j) {
            const double t = (target_idx[i] == j) ? 1.0 : 0.0;
            const double e = t - out[static_cast<std::size_t>(j)];
            total += 0.5 * e * e;
        }
    }
    return total / static_cast<double>(end - begin);
}

// Gradient of the batch-mean error, written into g1/g2 (same layout as the
// weights). Exposed for the finite-difference checks in the tests.
inline void mlp_gradient(const MlpWeights& w, const std::vector<double>& x, const std::vector<int>& target_idx,
                         std::size_t begin, std::size_t end, std::vector<double>& g1, std::vector<double>& g2) {
    g1.assign(w.w1.size(), 0.0);
    g2.assign(w.w2.size(), 0.0);
    const std::size_t dim = static_cast<std::size_t>(w.d);
    std::vector<double> hidden, raw, out, delta2(static_cast<std::size_t>(w.c)), delta1(static_cast<std::size_t>(w.q));
    for (std::size_t s = begin; s < end; ++s) {
        const double* xs = x.data() + s * dim;
        detail::mlp_forward_buffers(w, {xs, dim}, hidden, raw, out);
        for (int j = 0; j < w.c; ++j) {
            const double o = out[static_cast<std::size_t>(j)];
            const double t = (target_idx[s] == j) ? 1.0 : 0.0;
            double d = o - t;
            if (w.squash_output) d *= o * (1.0 - o); // logistic derivative
            delta2[static_cast<std::size_t>(j)] = d;
        }
        for (int i = 0; i < w.q; ++i) {
            double acc = 0.0;
            for (int j = 0; j < w.c; ++j) acc += delta2[static_cast<std::size_t>(j)] * w.w2_at(j, i);
            const double h = hidden[static_cast<std::size_t>(i)];
            delta1[static_cast<std::size_t>(i)] = acc * h * (1.0 - h);
        }
        for (int j = 0; j < w.c; ++j) {
            const double d = delta2[static_cast<std::size_t>(j)];
            double* row = g2.data() + static_cast<std::size_t>(j) * (w.q + 1);
            for (int i = 0; i < w.q; ++i) row[i] += d * hidden[static_cast<std::size_t>(i)];
            row[w.q] += d;
        }
        for (int i = 0; i < w.q; ++i) {
            const double d = delta1[static_cast<std::size_t>(i)];
            double* row = g1.data() + static_cast<std::size_t>(i) * (w.d + 1);
            for (int j = 0; j < w.d; ++j) row[j] += d * xs[j];
            row[w.d] += d;
        }
    }
    const double inv = 1.0 / static_cast<double>(end - begin);
    for (auto& v : g1) v *= inv;
    for (auto& v : g2) v *= inv;
}

inline MlpTrainResult mlp_train(const std::vector<double>& x, const std::vector<int>& target_idx, int d, int q, int c,
                                const TrainConfig& cfg) {
    cfg.validate();
    const std::size_t n = target_idx.size();
    if (n == 0) throw DataError("mlp_train: empty dataset");
    if (x.size() != n * static_cast<std::size_t>(d)) throw DataError("mlp_train: feature matrix shape mismatch");
    for (int t : target_idx)
        if (t < 0 || t >= c) throw DataError("mlp_train: target index outside 0.." + std::to_string(c - 1));

    const std::size_t n_val = static_cast<std::size_t>(std::floor(cfg.val_fraction * static_cast<double>(n)));
    const std::size_t n_train = n - n_val;
    if (n_train == 0) throw DataError("mlp_train: validation split leaves no training rows");

    Rng rng(cfg.seed);
    MlpTrainResult res;
    res.weights = mlp_init(d, q, c, cfg.init_scale, rng, cfg.squash_output);
    MlpWeights& w = res.weights;

    std::vector<double> v1(w.w1.size(), 0.0), v2(w.w2.size(), 0.0); // momentum buffers
    std::vector<double> g1, g2;
    MlpWeights best = w;
    double best_val = std::numeric_limits<double>::infinity();
    int best_epoch = 0;
    int since_best = 0;
    double lr = cfg.learning_rate;
    const std::size_t batch = (cfg.batch_size == 0) ? n_train : std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), n_train);

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        for (std::size_t start = 0; start < n_train; start += batch) {
            const std::size_t stop = std::min(n_train, start + batch);
            mlp_gradient(w, x, target_idx, start, stop, g1, g2);
            for (std::size_t i = 0; i < w.w1.size(); ++i) {
                v1[i] = cfg.momentum * v1[i] - lr * g1[i];
                w.w1[i] += v1[i];
            }
            for (std::size_t i = 0; i < w.w2.size(); ++i) {
                v2[i] = cfg.momentum * v2[i] - lr * g2[i];
                w.w2[i] += v2[i];
            }
        }
        lr *= cfg.lr_decay;

        EpochStats st;
        st.epoch = epoch;
        st.train_mse = mlp_mse(w, x, target_idx, 0, n_train);
        st.val_mse = (n_val > 0) ? mlp_mse(w, x, target_idx, n_train, n) : std::numeric_limits<double>::quiet_NaN();
        res.curve.push_back(st);
        if (!std::isfinite(st.train_mse))
            throw ConvergenceError("mlp_train: error diverged at epoch " + std::to_string(epoch) +
                                   "; reduce the learning rate");
        if (n_val > 0 && cfg.patience > 0) {
            if (st.val_mse < best_val) {
                best_val = st.val_mse;
                best = w;
                best_epoch = epoch;
                since_best = 0;
            } else if (++since_best >= cfg.patience) {
                res.weights = best;
                res.best_epoch = best_epoch;
                return res;
            }
        }
    }
    if (n_val > 0 && cfg.patience > 0 && best_epoch > 0) {
        res.weights = best;
        res.best_epoch = best_epoch;
    } else {
        res.best_epoch = cfg.max_epochs;
    }
    return res;
}

// Whole-map prediction: frontier pixels take the argmax of the forward
// scores over the modelled categories (ties to the lower code); every other
// pixel, and every constant-code pixel, persists. The probability stack
// holds sum-normalized scores on evaluated pixels and the persisted
// category elsewhere.
inline PredictionReport mlp_predict_map(const MlpWeights& w, const CategoricalRaster& map_t,
                                        const FeatureBuilder& builder) {
    const Legend& legend = builder.legend();
    const auto modelled = builder.modelled_codes();
    if (static_cast<int>(modelled.size()) != w.c)
        throw DataError("mlp_predict_map: network has " + std::to_string(w.c) + " outputs for " +
                        std::to_string(modelled.size()) + " modelled categories");
    w.check(builder.dim());

    PredictionReport report;
    report.model = "mlp";
    report.predicted = map_t;
    for (int code : modelled) {
        report.probabilities.codes.push_back(code);
        report.probabilities.layers.emplace_back(map_t.rows, map_t.cols, map_t.cell_size,
                                                 "p_" + legend.category(code).name);
    }

    const auto frontier = frontier_pixels(map_t);
    std::vector<double> feat(builder.dim());
    for (int r = 0; r < map_t.rows; ++r) {
        for (int c = 0; c < map_t.cols; ++c) {
            if (!map_t.valid(r, c)) continue;
            const std::size_t idx = map_t.index(r, c);
            const int code = map_t.at(r, c);
            if (legend.is_constant(code) || !frontier[idx]) {
                // Persisted pixel: point mass on the current category.
                for (std::size_t m = 0; m < modelled.size(); ++m)
                    report.probabilities.layers[m].values[idx] = (modelled[m] == code) ? 1.0 : 0.0;
                continue;
            }
            builder.row(map_t, r, c, feat.data());
            const auto scores = mlp_forward(w, feat);
            double total = 0.0;
            for (double s : scores) total += s;
            int best = 0;
            for (std::size_t m = 0; m < scores.size(); ++m) {
                report.probabilities.layers[m].values[idx] = (total > 0.0) ? scores[m] / total : 1.0 / scores.size();
                if (scores[m] > scores[static_cast<std::size_t>(best)]) best = static_cast<int>(m);
            }
            report.predicted.values[idx] = modelled[static_cast<std::size_t>(best)];
        }
    }
    return report;
}

// Versioned text serialization: dimensions header, then row-major weights.
inline void save_mlp_weights(const MlpWeights& w, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "mlp 1\n" << w.d << ' ' << w.q << ' ' << w.c << ' ' << (w.squash_output ? 1 : 0) << '\n';
    for (int i = 0; i < w.q; ++i) {
        for (int j = 0; j <= w.d; ++j) {
            if (j) out << ' ';
            out << detail::format_double(w.w1_at(i, j));
        }
        out << '\n';
    }
    for (int jj = 0; jj < w.c; ++jj) {
        for (int i = 0; i <= w.q; ++i) {
            if (i) out << ' ';
            out << detail::format_double(w.w2_at(jj, i));
        }
        out << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

inline MlpWeights load_mlp_weights(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string magic;
    int version = 0;
    if (!(in >> magic >> version) || magic != "mlp" || version != 1)
        throw DataError(path.string() + ": not a version-1 mlp weight file");
    MlpWeights w;
    int squash = 1;
    if (!(in >> w.d >> w.q >> w.c >> squash)) throw DataError(path.string() + ": truncated header");
    if (w.d < 1 || w.q < 1 || w.c < 1) throw DataError(path.string() + ": invalid dimensions");
    w.squash_output = squash != 0;
    w.w1.resize(static_cast<std::size_t>(w.q) * (w.d + 1));
    w.w2.resize(static_cast<std::size_t>(w.c) * (w.q + 1));
    for (auto& v : w.w1)
        if (!(in >> v)) throw DataError(path.string() + ": truncated hidden weights");
    for (auto& v : w.w2)
        if (!(in >> v)) throw DataError(path.string() + ": truncated output weights");
    return w;
}

inline void write_training_curve_csv(const std::vector<EpochStats>& curve, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "epoch,train_mse,val_mse\n";
    for (const auto& p : curve) {
        out << p.epoch << ',' << detail::format_double(p.train_mse) << ',';
        if (std::isnan(p.val_mse))
            out << "NA";
        else
            out << detail::format_double(p.val_mse);
        out << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

} // namespace prospect
