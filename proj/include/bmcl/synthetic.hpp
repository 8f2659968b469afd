#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "bmcl/dataset.hpp"
#include "bmcl/error.hpp"
#include "bmcl/image.hpp"
#include "bmcl/rng.hpp"
#include "bmcl/schema.hpp"

namespace bmcl {

struct SyntheticConfig {
    int n_samples = 1000;
    int n_classes = 10;
    int image_size = 32;
    int n_noise_features = 4;
    double label_noise_rate = 0.0;
    uint64_t seed = 0;

    void validate() const {
        if (n_samples < 10) throw ConfigError("n_samples must be at least 10");
        if (n_classes < 2) throw ConfigError("n_classes must be at least 2");
        if (image_size < 32) throw ConfigError("image_size must be at least 32");
        if (n_noise_features < 0) throw ConfigError("n_noise_features must be non-negative");
        if (label_noise_rate < 0.0 || label_noise_rate > 1.0) {
            throw ConfigError("label_noise_rate must lie in [0, 1]");
        }
    }
};

// Pixels above this value count as shape foreground. Background noise stays
// below 0.3 and fill intensity above 0.55, so the threshold is unambiguous.
inline constexpr float kForegroundThreshold = 0.45f;

struct ShapeMeasurements {
    double area_frac = 0.0;   // foreground pixels / (H*W)
    double bbox_w = 0.0;      // bounding-box width / W
    double bbox_h = 0.0;      // bounding-box height / H
    double aspect = 0.0;      // bbox width / bbox height, in pixels
    double perimeter = 0.0;   // boundary pixels / (2*(H+W))
};

// Measures the rendered shape by thresholding, the same arithmetic the
// generator uses to fill the tabular columns, so a test can recount pixels
// and demand exact equality.
inline ShapeMeasurements measure_shape(const Image& img, float threshold = kForegroundThreshold) {
    if (img.c < 1) throw ContractError("measure_shape needs at least one channel");
    int64_t count = 0, boundary = 0;
    int min_x = img.w, max_x = -1, min_y = img.h, max_y = -1;
    auto fg = [&](int y, int x) { return img.at(0, y, x) > threshold; };
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x) {
            if (!fg(y, x)) continue;
            ++count;
            min_x = std::min(min_x, x);
            max_x = std::max(max_x, x);
            min_y = std::min(min_y, y);
            max_y = std::max(max_y, y);
            const bool edge = x == 0 || x == img.w - 1 || y == 0 || y == img.h - 1;
            if (edge || !fg(y, x - 1) || !fg(y, x + 1) || !fg(y - 1, x) || !fg(y + 1, x)) ++boundary;
        }
    }
    if (count == 0) throw ContractError("no foreground pixels above threshold");
    ShapeMeasurements m;
    m.area_frac = static_cast<double>(count) / (static_cast<double>(img.h) * img.w);
    m.bbox_w = static_cast<double>(max_x - min_x + 1) / img.w;
    m.bbox_h = static_cast<double>(max_y - min_y + 1) / img.h;
    m.aspect = static_cast<double>(max_x - min_x + 1) / static_cast<double>(max_y - min_y + 1);
    m.perimeter = static_cast<double>(boundary) / (2.0 * (img.h + img.w));
    return m;
}

namespace detail {

// Class-conditional shape parameters. Family alternates with class id and the
// size scale steps up every second class, so classes differ mainly by size
// within a family; aspect and rotation get small class-specific offsets.
struct ClassParams {
    int family = 0;          // 0 ellipse, 1 rectangle
    double size_mu = 0.2;    // mean shape scale as a fraction of image size
    double aspect_mu = 1.0;  // mean width/height ratio
    double rot_center = 0.0; // radians
    double intensity_lo = 0.55;
};

inline ClassParams class_params(const SyntheticConfig& cfg, int cls) {
    Rng rng(derive_seed({cfg.seed, 0x636c73u, static_cast<uint64_t>(cls)}));
    ClassParams p;
    p.family = cls % 2;
    const int level = cls / 2;
    const int n_levels = (cfg.n_classes + 1) / 2;
    const double t = n_levels > 1 ? static_cast<double>(level) / (n_levels - 1) : 0.5;
    p.size_mu = 0.11 + t * (0.30 - 0.11);
    p.aspect_mu = std::exp(rng.normal(0.0, 0.10));
    p.rot_center = rng.uniform(-0.30, 0.30);
    p.intensity_lo = 0.55 + 0.10 * rng.uniform();
    return p;
}

struct ShapeDraw {
    int family = 0;
    double a = 0.0, b = 0.0;  // semi-axes / half-sides in pixels
    double cx = 0.0, cy = 0.0;
    double rot = 0.0;
    double intensity = 0.8;
};

inline ShapeDraw draw_shape(const ClassParams& p, int image_size, Rng& rng) {
    ShapeDraw d;
    d.family = p.family;
    const double size = p.size_mu * std::exp(rng.normal(0.0, 0.07));
    double aspect = p.aspect_mu * std::exp(rng.normal(0.0, 0.15));
    aspect = std::clamp(aspect, 0.60, 1.0 / 0.60);
    d.a = size * image_size * std::sqrt(aspect);
    d.b = size * image_size / std::sqrt(aspect);
    d.rot = p.rot_center + rng.uniform(-0.5, 0.5);
    d.intensity = p.intensity_lo + 0.30 * rng.uniform();

    // Keep the rotated shape fully inside the frame, shrinking it if a large
    // draw cannot fit.
    const double c = std::abs(std::cos(d.rot)), s = std::abs(std::sin(d.rot));
    double ex, ey;
    if (d.family == 0) {
        ex = std::sqrt(d.a * d.a * c * c + d.b * d.b * s * s);
        ey = std::sqrt(d.a * d.a * s * s + d.b * d.b * c * c);
    } else {
        ex = d.a * c + d.b * s;
        ey = d.a * s + d.b * c;
    }
    const double allowed = image_size / 2.0 - 1.5;
    const double worst = std::max(ex, ey);
    if (worst > allowed) {
        const double shrink = allowed / worst;
        d.a *= shrink;
        d.b *= shrink;
        ex *= shrink;
        ey *= shrink;
    }
    d.cx = rng.uniform(ex + 1.0, image_size - ex - 1.0);
    d.cy = rng.uniform(ey + 1.0, image_size - ey - 1.0);
    return d;
}

inline void render_shape(Image& img, const ShapeDraw& d, Rng& rng) {
    const double c = std::cos(d.rot), s = std::sin(d.rot);
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x) {
            // Background noise is drawn for every pixel so the draw count does
            // not depend on the shape, then foreground pixels overwrite it.
            const float noise = static_cast<float>(rng.uniform(0.0, 0.30));
            const double dx = x + 0.5 - d.cx;
            const double dy = y + 0.5 - d.cy;
            const double u = dx * c + dy * s;
            const double v = -dx * s + dy * c;
            bool inside;
            if (d.family == 0) {
                const double ru = u / d.a, rv = v / d.b;
                inside = ru * ru + rv * rv <= 1.0;
            } else {
                inside = std::abs(u) <= d.a && std::abs(v) <= d.b;
            }
            img.at(0, y, x) = inside ? static_cast<float>(d.intensity) : noise;
        }
    }
}

}  // namespace detail

// Names the five image-derived columns; the attribution and ablation code key
// off the schema's morphometric flag rather than these strings.
inline TabularSchema synthetic_schema(const SyntheticConfig& cfg) {
    TabularSchema schema;
    auto cont = [](const std::string& name, bool morpho) {
        FeatureSpec f;
        f.name = name;
        f.kind = FeatureKind::Continuous;
        f.morphometric = morpho;
        return f;
    };
    schema.features.push_back(cont("area_frac", true));
    schema.features.push_back(cont("bbox_w", true));
    schema.features.push_back(cont("bbox_h", true));
    schema.features.push_back(cont("aspect", true));
    schema.features.push_back(cont("perimeter", true));
    FeatureSpec tag;
    tag.name = "tag";
    tag.kind = FeatureKind::Categorical;
    for (int k = 0; k < cfg.n_classes; ++k) tag.categories.push_back(k);
    tag.morphometric = false;
    schema.features.push_back(tag);
    for (int j = 0; j < cfg.n_noise_features; ++j) {
        schema.features.push_back(cont("noise_" + std::to_string(j), false));
    }
    schema.validate();
    return schema;
}

inline PairedDataset generate_synthetic(const SyntheticConfig& cfg) {
    cfg.validate();
    PairedDataset ds;
    ds.schema = synthetic_schema(cfg);
    const int N = cfg.n_samples;
    const int F = static_cast<int>(ds.schema.size());
    ds.images.resize(N, 1, cfg.image_size, cfg.image_size);
    ds.tabular.values.resize(N, F);
    ds.tabular.missing.setConstant(N, F, false);
    ds.labels.resize(static_cast<size_t>(N));
    ds.splits.resize(static_cast<size_t>(N));

    std::vector<detail::ClassParams> params;
    params.reserve(static_cast<size_t>(cfg.n_classes));
    for (int k = 0; k < cfg.n_classes; ++k) params.push_back(detail::class_params(cfg, k));

    for (int i = 0; i < N; ++i) {
        Rng rng(derive_seed({cfg.seed, 0x736d70u, static_cast<uint64_t>(i)}));
        const int cls = rng.uniform_int(0, cfg.n_classes - 1);

        Image img(1, cfg.image_size, cfg.image_size);
        const detail::ShapeDraw draw = detail::draw_shape(params[static_cast<size_t>(cls)], cfg.image_size, rng);
        detail::render_shape(img, draw, rng);
        ds.images.set_image(i, img);

        const ShapeMeasurements m = measure_shape(img);
        ds.tabular.values(i, 0) = m.area_frac;
        ds.tabular.values(i, 1) = m.bbox_w;
        ds.tabular.values(i, 2) = m.bbox_h;
        ds.tabular.values(i, 3) = m.aspect;
        ds.tabular.values(i, 4) = m.perimeter;

        // Class tag is right 75% of the time, otherwise some other class.
        int tag = cls;
        if (rng.uniform() >= 0.75) {
            tag = rng.uniform_int(0, cfg.n_classes - 2);
            if (tag >= cls) ++tag;
        }
        ds.tabular.values(i, 5) = tag;

        for (int j = 0; j < cfg.n_noise_features; ++j) {
            ds.tabular.values(i, 6 + j) = rng.normal(0.0, 1.0);
        }

        int label = cls;
        if (cfg.label_noise_rate > 0.0 && rng.uniform() < cfg.label_noise_rate) {
            label = rng.uniform_int(0, cfg.n_classes - 2);
            if (label >= cls) ++label;
        }
        ds.labels[static_cast<size_t>(i)] = label;
    }

    // 70/15/15 deterministic shuffle split.
    std::vector<int> order(static_cast<size_t>(N));
    for (int i = 0; i < N; ++i) order[static_cast<size_t>(i)] = i;
    Rng split_rng(derive_seed({cfg.seed, 0x73706c74u}));
    split_rng.shuffle(order);
    const int n_train = static_cast<int>(std::llround(0.70 * N));
    const int n_val = static_cast<int>(std::llround(0.15 * N));
    for (int pos = 0; pos < N; ++pos) {
        Split s = pos < n_train ? Split::Train : (pos < n_train + n_val ? Split::Val : Split::Test);
        ds.splits[static_cast<size_t>(order[static_cast<size_t>(pos)])] = s;
    }

    ds.validate();
    return ds;
}

}  // namespace bmcl
