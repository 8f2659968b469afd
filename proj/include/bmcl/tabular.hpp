#pragma once

#include <Eigen/Dense>
#include <charconv>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "bmcl/csv.hpp"
#include "bmcl/error.hpp"
#include "bmcl/schema.hpp"

namespace bmcl {

using Matd = Eigen::MatrixXd;
using Vecd = Eigen::VectorXd;
using MaskMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

// Per-continuous-feature normalization statistics; categorical slots unused.
struct NormStats {
    std::vector<double> mean;
    std::vector<double> stddev;
};

// N x F matrix in schema order with a missing-value mask. The mask survives
// every transform so downstream code can always tell imputed values from
// recorded ones.
struct TabularMatrix {
    Matd values;       // N x F
    MaskMatrix missing;  // true = value was absent in the source
    std::optional<NormStats> norm_stats;

    Eigen::Index rows() const { return values.rows(); }
    Eigen::Index cols() const { return values.cols(); }

    bool any_missing() const { return missing.any(); }
};

inline TabularMatrix make_tabular(Matd values) {
    TabularMatrix m;
    m.missing = MaskMatrix::Constant(values.rows(), values.cols(), false);
    m.values = std::move(values);
    return m;
}

namespace detail {

inline bool parse_cell(const std::string& cell, double& out) {
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    auto res = std::from_chars(begin, end, out);
    return res.ec == std::errc{} && res.ptr == end && std::isfinite(out);
}

}  // namespace detail

// Reads a CSV whose header matches the schema's feature names, in order.
// Empty cells become missing entries.
inline TabularMatrix load_tabular(const std::string& path, const TabularSchema& schema) {
    schema.validate();
    const CsvTable table = read_csv(path);
    if (table.header.size() != schema.size()) {
        throw SchemaError("csv has " + std::to_string(table.header.size()) + " columns, schema expects " +
                          std::to_string(schema.size()));
    }
    for (size_t j = 0; j < schema.size(); ++j) {
        if (table.header[j] != schema.at(j).name) {
            throw SchemaError("csv column " + std::to_string(j) + " is '" + table.header[j] +
                              "', schema expects '" + schema.at(j).name + "'");
        }
    }
    const Eigen::Index n = static_cast<Eigen::Index>(table.rows.size());
    const Eigen::Index f = static_cast<Eigen::Index>(schema.size());
    TabularMatrix m;
    m.values = Matd::Zero(n, f);
    m.missing = MaskMatrix::Constant(n, f, false);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& row = table.rows[static_cast<size_t>(i)];
        if (static_cast<Eigen::Index>(row.size()) != f) {
            throw ParseError("row " + std::to_string(i) + " has " + std::to_string(row.size()) +
                             " cells, expected " + std::to_string(f));
        }
        for (Eigen::Index j = 0; j < f; ++j) {
            const std::string& cell = row[static_cast<size_t>(j)];
            if (cell.empty()) {
                m.missing(i, j) = true;
                continue;
            }
            double v = 0.0;
            if (!detail::parse_cell(cell, v)) {
                throw ParseError("row " + std::to_string(i) + ", column '" + schema.at(static_cast<size_t>(j)).name +
                                 "': cannot parse '" + cell + "'");
            }
            const auto& spec = schema.at(static_cast<size_t>(j));
            if (spec.kind == FeatureKind::Categorical && !is_valid_code(spec, v)) {
                throw DomainError("row " + std::to_string(i) + ", column '" + spec.name + "': code " + cell +
                                  " outside schema categories");
            }
            m.values(i, j) = v;
        }
    }
    return m;
}

inline void save_tabular(const std::string& path, const TabularMatrix& m, const TabularSchema& schema) {
    std::vector<std::string> header;
    header.reserve(schema.size());
    for (const auto& f : schema.features) header.push_back(f.name);
    std::vector<std::vector<std::string>> rows(static_cast<size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        auto& row = rows[static_cast<size_t>(i)];
        row.reserve(schema.size());
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (m.missing(i, j)) {
                row.emplace_back();
            } else if (schema.at(static_cast<size_t>(j)).kind == FeatureKind::Categorical) {
                row.push_back(std::to_string(static_cast<long long>(std::llround(m.values(i, j)))));
            } else {
                row.push_back(format_double(m.values(i, j)));
            }
        }
    }
    write_csv(path, header, rows);
}

// Mean/std of a continuous column over observed entries only; population
// standard deviation. Rows outside `row_filter` (when given) are ignored so
// statistics can come from the train split alone.
inline void observed_moments(const TabularMatrix& m, Eigen::Index col,
                             const std::vector<uint8_t>* row_filter, double& mean, double& stddev,
                             Eigen::Index& count) {
    double sum = 0.0;
    count = 0;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        if (row_filter && !(*row_filter)[static_cast<size_t>(i)]) continue;
        if (m.missing(i, col)) continue;
        sum += m.values(i, col);
        ++count;
    }
    mean = count > 0 ? sum / static_cast<double>(count) : 0.0;
    double ss = 0.0;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        if (row_filter && !(*row_filter)[static_cast<size_t>(i)]) continue;
        if (m.missing(i, col)) continue;
        const double d = m.values(i, col) - mean;
        ss += d * d;
    }
    stddev = count > 0 ? std::sqrt(ss / static_cast<double>(count)) : 0.0;
}

inline NormStats compute_norm_stats(const TabularMatrix& m, const TabularSchema& schema,
                                    const std::vector<uint8_t>* row_filter = nullptr) {
    NormStats stats;
    stats.mean.assign(schema.size(), 0.0);
    stats.stddev.assign(schema.size(), 1.0);
    for (size_t j = 0; j < schema.size(); ++j) {
        if (schema.at(j).kind != FeatureKind::Continuous) continue;
        double mean = 0.0, stddev = 0.0;
        Eigen::Index count = 0;
        observed_moments(m, static_cast<Eigen::Index>(j), row_filter, mean, stddev, count);
        if (count == 0) {
            throw DomainError("degenerate feature '" + schema.at(j).name + "': no observed values");
        }
        if (stddev == 0.0) {
            throw DomainError("degenerate feature '" + schema.at(j).name + "': constant observed column");
        }
        stats.mean[j] = mean;
        stats.stddev[j] = stddev;
    }
    return stats;
}

inline void apply_normalization(TabularMatrix& m, const TabularSchema& schema, const NormStats& stats) {
    for (size_t j = 0; j < schema.size(); ++j) {
        if (schema.at(j).kind != FeatureKind::Continuous) continue;
        const auto col = static_cast<Eigen::Index>(j);
        m.values.col(col) = (m.values.col(col).array() - stats.mean[j]) / stats.stddev[j];
    }
    m.norm_stats = stats;
}

// Z-score normalization of continuous columns; statistics are computed from
// observed entries only and recorded for inverse transforms and reuse.
inline TabularMatrix normalize(const TabularMatrix& m, const TabularSchema& schema) {
    if (m.norm_stats.has_value()) throw ContractError("matrix is already normalized");
    TabularMatrix out = m;
    const NormStats stats = compute_norm_stats(m, schema);
    apply_normalization(out, schema, stats);
    return out;
}

// ---------------------------------------------------------------------------
// One-hot encoding. Categorical features expand to one indicator column per
// category; continuous features pass through. Encoding is a pure per-row
// function so it can run after per-sample corruption.
// ---------------------------------------------------------------------------

struct EncodedLayout {
    Eigen::Index width = 0;
    std::vector<Eigen::Index> offset;  // first encoded column of feature j
    std::vector<Eigen::Index> span;    // number of encoded columns of feature j

    // feature index owning encoded column c
    size_t feature_of(Eigen::Index c) const {
        for (size_t j = 0; j < offset.size(); ++j) {
            if (c >= offset[j] && c < offset[j] + span[j]) return j;
        }
        throw ContractError("encoded column out of range");
    }
};

inline EncodedLayout encoded_layout(const TabularSchema& schema) {
    EncodedLayout layout;
    for (const auto& f : schema.features) {
        layout.offset.push_back(layout.width);
        const Eigen::Index span =
            f.kind == FeatureKind::Categorical ? static_cast<Eigen::Index>(f.categories.size()) : 1;
        layout.span.push_back(span);
        layout.width += span;
    }
    return layout;
}

struct EncodedMatrix {
    Matd values;  // N x encoded width
};

inline void encode_row_into(const Eigen::Ref<const Vecd>& raw, const TabularSchema& schema,
                            const EncodedLayout& layout, Eigen::Ref<Vecd> out) {
    out.setZero();
    for (size_t j = 0; j < schema.size(); ++j) {
        const auto& f = schema.at(j);
        const double v = raw[static_cast<Eigen::Index>(j)];
        if (f.kind == FeatureKind::Continuous) {
            out[layout.offset[j]] = v;
        } else {
            if (!is_valid_code(f, v)) {
                throw DomainError("value " + std::to_string(v) + " is not a valid code for feature '" + f.name + "'");
            }
            const int code = static_cast<int>(std::llround(v));
            const auto it = std::lower_bound(f.categories.begin(), f.categories.end(), code);
            const auto pos = static_cast<Eigen::Index>(it - f.categories.begin());
            out[layout.offset[j] + pos] = 1.0;
        }
    }
}

inline Vecd encode_row(const Eigen::Ref<const Vecd>& raw, const TabularSchema& schema,
                       const EncodedLayout& layout) {
    Vecd out(layout.width);
    encode_row_into(raw, schema, layout, out);
    return out;
}

inline EncodedMatrix one_hot(const TabularMatrix& m, const TabularSchema& schema) {
    if (m.any_missing()) throw ContractError("one_hot requires a fully imputed matrix");
    const EncodedLayout layout = encoded_layout(schema);
    EncodedMatrix enc;
    enc.values.resize(m.rows(), layout.width);
    Vecd buf(layout.width);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        encode_row_into(m.values.row(i).transpose(), schema, layout, buf);
        enc.values.row(i) = buf.transpose();
    }
    return enc;
}

// Recovers the categorical code from an encoded block by argmax; inverse of
// encode_row on valid codes.
inline int decode_categorical(const Eigen::Ref<const Vecd>& encoded_row, const TabularSchema& schema,
                              const EncodedLayout& layout, size_t feature) {
    const auto& f = schema.at(feature);
    if (f.kind != FeatureKind::Categorical) throw ContractError("feature is not categorical");
    Eigen::Index best = 0;
    double best_v = encoded_row[layout.offset[feature]];
    for (Eigen::Index k = 1; k < layout.span[feature]; ++k) {
        const double v = encoded_row[layout.offset[feature] + k];
        if (v > best_v) {
            best_v = v;
            best = k;
        }
    }
    return f.categories[static_cast<size_t>(best)];
}

}  // namespace bmcl
