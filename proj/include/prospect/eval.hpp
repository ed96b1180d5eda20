// Residual and agreement analysis of predicted maps: surface percentages,
// confusion matrix and global accuracy, per-category residuals, the ordinal
// (openness-rank) residual histogram, and the three-model agreement
// decomposition. Counts are exact; percentages are derived views.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "prospect/errors.hpp"
#include "prospect/grid.hpp"

namespace prospect {

struct ConfusionMatrix {
    int k = 0;
    std::vector<long> counts; // real category on rows, predicted on columns
    long total = 0;

    long at(int real, int pred) const { return counts[static_cast<std::size_t>(real) * k + pred]; }

    long diagonal() const {
        long d = 0;
        for (int i = 0; i < k; ++i) d += at(i, i);
        return d;
    }

    double global_accuracy_pct() const { return total ? 100.0 * static_cast<double>(diagonal()) / static_cast<double>(total) : 0.0; }
};

inline ConfusionMatrix confusion_matrix(const CategoricalRaster& real, const CategoricalRaster& pred, int k) {
    align_check({shape_of(real, "real"), shape_of(pred, "pred")});
    ConfusionMatrix cm;
    cm.k = k;
    cm.counts.assign(static_cast<std::size_t>(k) * k, 0);
    for (std::size_t i = 0; i < real.cell_count(); ++i) {
        if (!real.valid_index(i) || !pred.valid_index(i)) continue;
        const int a = real.values[i], b = pred.values[i];
        if (a < 1 || a > k || b < 1 || b > k) throw DataError("confusion_matrix: code outside legend");
        ++cm.counts[static_cast<std::size_t>(a - 1) * k + (b - 1)];
        ++cm.total;
    }
    return cm;
}

// Percent of valid pixels per category; sums to 100 up to rounding of the
// exact ratios.
inline std::vector<double> surface_percentages(const CategoricalRaster& map, int k) {
    const auto counts = map.category_counts(k);
    long total = 0;
    for (long c : counts) total += c;
    std::vector<double> pct(static_cast<std::size_t>(k), 0.0);
    if (total > 0)
        for (int i = 0; i < k; ++i)
            pct[static_cast<std::size_t>(i)] = 100.0 * static_cast<double>(counts[static_cast<std::size_t>(i)]) / static_cast<double>(total);
    return pct;
}

struct ResidualReport {
    std::vector<std::optional<double>> by_category_pct; // nullopt when the category is absent from `real`
    std::vector<long> wrong_by_category;
    std::vector<long> real_counts;
    long wrong_total = 0;
    long valid_total = 0;
    double global_pct = 0.0;
};

// residual[c] = share of real category-c pixels predicted as something
// else; categories absent from the real map are reported as undefined.
inline ResidualReport residuals_by_category(const CategoricalRaster& real, const CategoricalRaster& pred, int k) {
    const ConfusionMatrix cm = confusion_matrix(real, pred, k);
    ResidualReport rep;
    rep.by_category_pct.resize(static_cast<std::size_t>(k));
    rep.wrong_by_category.assign(static_cast<std::size_t>(k), 0);
    rep.real_counts.assign(static_cast<std::size_t>(k), 0);
    rep.valid_total = cm.total;
    for (int c = 0; c < k; ++c) {
        long real_count = 0, wrong = 0;
        for (int p = 0; p < k; ++p) {
            real_count += cm.at(c, p);
            if (p != c) wrong += cm.at(c, p);
        }
        rep.real_counts[static_cast<std::size_t>(c)] = real_count;
        rep.wrong_by_category[static_cast<std::size_t>(c)] = wrong;
        rep.wrong_total += wrong;
        if (real_count > 0)
            rep.by_category_pct[static_cast<std::size_t>(c)] = 100.0 * static_cast<double>(wrong) / static_cast<double>(real_count);
    }
    rep.global_pct = cm.total ? 100.0 * static_cast<double>(rep.wrong_total) / static_cast<double>(cm.total) : 0.0;
    return rep;
}

struct OrdinalHistogram {
    // Buckets by |rank(real) - rank(pred)|: 1, 2, 3, >=4; percents of the
    // total valid surface. `unranked` collects mispredictions involving a
    // constant code (normally zero, since constants persist).
    std::array<long, 4> bucket_counts{};
    long unranked = 0;
    long wrong_total = 0;
    long valid_total = 0;

    double pct(std::size_t b) const {
        return valid_total ? 100.0 * static_cast<double>(bucket_counts[b]) / static_cast<double>(valid_total) : 0.0;
    }
    double total_pct() const {
        return valid_total ? 100.0 * static_cast<double>(wrong_total) / static_cast<double>(valid_total) : 0.0;
    }
};

inline OrdinalHistogram ordinal_residual_histogram(const CategoricalRaster& real, const CategoricalRaster& pred,
                                                   const Legend& legend) {
    align_check({shape_of(real, "real"), shape_of(pred, "pred")});
    OrdinalHistogram h;
    for (std::size_t i = 0; i < real.cell_count(); ++i) {
        if (!real.valid_index(i) || !pred.valid_index(i)) continue;
        ++h.valid_total;
        const int a = real.values[i], b = pred.values[i];
        if (a == b) continue;
        ++h.wrong_total;
        if (legend.is_constant(a) || legend.is_constant(b)) {
            ++h.unranked;
            continue;
        }
        const int dist = std::abs(legend.category(a).openness_rank - legend.category(b).openness_rank);
        ++h.bucket_counts[static_cast<std::size_t>(std::min(dist, 4) - 1)];
    }
    return h;
}

// Per-pixel correctness triple of the three models, folded into 8 classes:
// all three, each pair, each single, none. Rows are per real (modelled)
// category in percent of that category's pixels; the total row is over all
// modelled pixels, i.e. the pixel-weighted mean of the rows.
struct AgreementDecomposition {
    // Class order: ABC, AB, AC, BC, A, B, C, none.
    std::array<std::string, 3> labels;
    std::vector<int> codes;                     // real categories present
    std::vector<std::array<long, 8>> counts;    // per category
    std::vector<long> category_totals;
    std::array<long, 8> total_counts{};
    long total = 0;

    static std::array<std::string, 8> class_names(const std::array<std::string, 3>& l) {
        return {l[0] + "+" + l[1] + "+" + l[2], l[0] + "+" + l[1], l[0] + "+" + l[2], l[1] + "+" + l[2],
                l[0], l[1], l[2], "none"};
    }

    std::array<double, 8> row_pct(std::size_t r) const {
        std::array<double, 8> out{};
        for (std::size_t j = 0; j < 8; ++j)
            out[j] = category_totals[r] ? 100.0 * static_cast<double>(counts[r][j]) / static_cast<double>(category_totals[r]) : 0.0;
        return out;
    }
    std::array<double, 8> total_pct() const {
        std::array<double, 8> out{};
        for (std::size_t j = 0; j < 8; ++j)
            out[j] = total ? 100.0 * static_cast<double>(total_counts[j]) / static_cast<double>(total) : 0.0;
        return out;
    }
};

// Class index from the correctness triple (a,b,c).
inline int agreement_class(bool a, bool b, bool c) {
    if (a && b && c) return 0;
    if (a && b) return 1;
    if (a && c) return 2;
    if (b && c) return 3;
    if (a) return 4;
    if (b) return 5;
    if (c) return 6;
    return 7;
}

struct AgreementResult {
    AgreementDecomposition decomposition;
    CategoricalRaster class_map; // codes 1..8 in decomposition class order
};

inline AgreementResult cross_model_agreement(const CategoricalRaster& real, const CategoricalRaster& pred_a,
                                             const CategoricalRaster& pred_b, const CategoricalRaster& pred_c,
                                             const Legend& legend,
                                             const std::array<std::string, 3>& labels = {"gis", "mlp", "glm"}) {
    align_check({shape_of(real, "real"), shape_of(pred_a, "pred_a"), shape_of(pred_b, "pred_b"),
                 shape_of(pred_c, "pred_c")});
    AgreementResult res;
    res.decomposition.labels = labels;
    res.class_map = CategoricalRaster(real.rows, real.cols, real.cell_size, real.date);

    const auto modelled = legend.modelled_codes();
    res.decomposition.codes = modelled;
    res.decomposition.counts.assign(modelled.size(), {});
    res.decomposition.category_totals.assign(modelled.size(), 0);
    std::vector<int> slot(static_cast<std::size_t>(legend.size()) + 1, -1);
    for (std::size_t i = 0; i < modelled.size(); ++i) slot[static_cast<std::size_t>(modelled[i])] = static_cast<int>(i);

    for (std::size_t i = 0; i < real.cell_count(); ++i) {
        if (!real.valid_index(i) || !pred_a.valid_index(i) || !pred_b.valid_index(i) || !pred_c.valid_index(i))
            continue;
        const int code = real.values[i];
        if (legend.is_constant(code)) continue; // constants carry no model information
        const int cls = agreement_class(pred_a.values[i] == code, pred_b.values[i] == code, pred_c.values[i] == code);
        res.class_map.values[i] = cls + 1;
        const int s = slot[static_cast<std::size_t>(code)];
        ++res.decomposition.counts[static_cast<std::size_t>(s)][static_cast<std::size_t>(cls)];
        ++res.decomposition.category_totals[static_cast<std::size_t>(s)];
        ++res.decomposition.total_counts[static_cast<std::size_t>(cls)];
        ++res.decomposition.total;
    }

    // Drop rows of categories absent from the real map.
    std::vector<int> codes;
    std::vector<std::array<long, 8>> counts;
    std::vector<long> totals;
    for (std::size_t r = 0; r < res.decomposition.codes.size(); ++r) {
        if (res.decomposition.category_totals[r] == 0) continue;
        codes.push_back(res.decomposition.codes[r]);
        counts.push_back(res.decomposition.counts[r]);
        totals.push_back(res.decomposition.category_totals[r]);
    }
    res.decomposition.codes = std::move(codes);
    res.decomposition.counts = std::move(counts);
    res.decomposition.category_totals = std::move(totals);
    return res;
}

namespace detail {

inline std::string pct_fixed(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", v);
    return buf;
}

inline std::string pct_fixed2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

} // namespace detail

// --- CSV table writers (layouts mirror the reporting products) ---

inline void write_surface_table(const std::vector<std::pair<std::string, std::vector<double>>>& columns,
                                const Legend& legend, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "category";
    for (const auto& [name, _] : columns) out << ',' << name;
    out << '\n';
    for (const auto& cat : legend.categories) {
        out << cat.name;
        for (const auto& [_, pct] : columns) out << ',' << detail::pct_fixed2(pct[static_cast<std::size_t>(cat.code - 1)]);
        out << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

inline void write_residual_table(const std::vector<std::pair<std::string, ResidualReport>>& models,
                                 const std::vector<double>& real_surface_pct, const Legend& legend,
                                 const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "category,surface_pct";
    for (const auto& [name, _] : models) out << ',' << name << "_residual_pct";
    out << '\n';
    for (const auto& cat : legend.categories) {
        out << cat.name << ',' << detail::pct_fixed2(real_surface_pct[static_cast<std::size_t>(cat.code - 1)]);
        for (const auto& [_, rep] : models) {
            const auto& v = rep.by_category_pct[static_cast<std::size_t>(cat.code - 1)];
            out << ',' << (v ? detail::pct_fixed2(*v) : std::string("NA"));
        }
        out << '\n';
    }
    out << "global,100.00";
    for (const auto& [_, rep] : models) out << ',' << detail::pct_fixed2(rep.global_pct);
    out << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

inline void write_ordinal_table(const std::vector<std::pair<std::string, OrdinalHistogram>>& models,
                                const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "rank_distance";
    for (const auto& [name, _] : models) out << ',' << name;
    out << '\n';
    const char* rows[] = {"1", "2", "3", "4+"};
    for (std::size_t b = 0; b < 4; ++b) {
        out << rows[b];
        for (const auto& [_, h] : models) out << ',' << detail::pct_fixed(h.pct(b));
        out << '\n';
    }
    out << "unranked";
    for (const auto& [_, h] : models)
        out << ',' << detail::pct_fixed(h.valid_total ? 100.0 * static_cast<double>(h.unranked) / static_cast<double>(h.valid_total) : 0.0);
    out << '\n';
    out << "total";
    for (const auto& [_, h] : models) out << ',' << detail::pct_fixed(h.total_pct());
    out << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

inline void write_agreement_table(const AgreementDecomposition& d, const Legend& legend,
                                  const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    const auto names = AgreementDecomposition::class_names(d.labels);
    out << "category";
    for (const auto& n : names) out << ',' << n;
    out << '\n';
    for (std::size_t r = 0; r < d.codes.size(); ++r) {
        out << legend.category(d.codes[r]).name;
        const auto pct = d.row_pct(r);
        for (double v : pct) out << ',' << detail::pct_fixed2(v);
        out << '\n';
    }
    out << "total";
    for (double v : d.total_pct()) out << ',' << detail::pct_fixed2(v);
    out << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

// --- reference-table arithmetic ---

// A published percentage column together with its stated total; used to
// recompute the sum exactly and flag rounding drift in the source table.
struct ColumnCheck {
    std::string name;
    double computed_sum = 0.0;
    double stated_total = 0.0;
    bool drift = false; // |computed - stated| >= 0.05, i.e. beyond display rounding
};

inline std::vector<ColumnCheck> check_column_sums(const std::vector<std::string>& names,
                                                  const std::vector<std::vector<double>>& columns,
                                                  const std::vector<double>& stated_totals) {
    if (names.size() != columns.size() || names.size() != stated_totals.size())
        throw DataError("check_column_sums: shape mismatch");
    std::vector<ColumnCheck> out;
    for (std::size_t i = 0; i < names.size(); ++i) {
        ColumnCheck c;
        c.name = names[i];
        for (double v : columns[i]) c.computed_sum += v;
        c.stated_total = stated_totals[i];
        c.drift = std::abs(c.computed_sum - c.stated_total) >= 0.05;
        out.push_back(c);
    }
    return out;
}

} // namespace prospect
