#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "bmcl/error.hpp"
#include "bmcl/image.hpp"
#include "bmcl/rng.hpp"

namespace bmcl {

// ---------------------------------------------------------------------------
// Deterministic pixel transforms. Every random draw comes from the caller's
// rng, so one seed fixes one view.
// ---------------------------------------------------------------------------

inline Image resize_bilinear(const Image& src, int out_h, int out_w) {
    Image dst(src.c, out_h, out_w);
    const double sy = static_cast<double>(src.h) / out_h;
    const double sx = static_cast<double>(src.w) / out_w;
    for (int y = 0; y < out_h; ++y) {
        const double fy = (y + 0.5) * sy - 0.5;
        const int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0, src.h - 1);
        const int y1 = std::min(y0 + 1, src.h - 1);
        const double wy = std::clamp(fy - y0, 0.0, 1.0);
        for (int x = 0; x < out_w; ++x) {
            const double fx = (x + 0.5) * sx - 0.5;
            const int x0 = std::clamp(static_cast<int>(std::floor(fx)), 0, src.w - 1);
            const int x1 = std::min(x0 + 1, src.w - 1);
            const double wx = std::clamp(fx - x0, 0.0, 1.0);
            for (int ch = 0; ch < src.c; ++ch) {
                const double top = src.at(ch, y0, x0) * (1 - wx) + src.at(ch, y0, x1) * wx;
                const double bot = src.at(ch, y1, x0) * (1 - wx) + src.at(ch, y1, x1) * wx;
                dst.at(ch, y, x) = static_cast<float>(top * (1 - wy) + bot * wy);
            }
        }
    }
    return dst;
}

inline Image flip_horizontal(const Image& src) {
    Image dst(src.c, src.h, src.w);
    for (int ch = 0; ch < src.c; ++ch)
        for (int y = 0; y < src.h; ++y)
            for (int x = 0; x < src.w; ++x) dst.at(ch, y, x) = src.at(ch, y, src.w - 1 - x);
    return dst;
}

// Rotates around the image center, bilinear sampling, exposed corners 0.
inline Image rotate(const Image& src, double degrees) {
    Image dst(src.c, src.h, src.w);
    const double rad = degrees * M_PI / 180.0;
    const double c = std::cos(rad), s = std::sin(rad);
    const double cy = src.h / 2.0, cx = src.w / 2.0;
    for (int y = 0; y < src.h; ++y) {
        for (int x = 0; x < src.w; ++x) {
            const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
            const double ux = c * dx + s * dy + cx - 0.5;
            const double uy = -s * dx + c * dy + cy - 0.5;
            const int x0 = static_cast<int>(std::floor(ux)), y0 = static_cast<int>(std::floor(uy));
            const double wx = ux - x0, wy = uy - y0;
            for (int ch = 0; ch < src.c; ++ch) {
                auto sample = [&](int yy, int xx) -> double {
                    if (yy < 0 || yy >= src.h || xx < 0 || xx >= src.w) return 0.0;
                    return src.at(ch, yy, xx);
                };
                const double top = sample(y0, x0) * (1 - wx) + sample(y0, x0 + 1) * wx;
                const double bot = sample(y0 + 1, x0) * (1 - wx) + sample(y0 + 1, x0 + 1) * wx;
                dst.at(ch, y, x) = static_cast<float>(top * (1 - wy) + bot * wy);
            }
        }
    }
    return dst;
}

inline Image to_grayscale(const Image& src) {
    if (src.c < 3) return src;
    Image dst(src.c, src.h, src.w);
    for (int y = 0; y < src.h; ++y) {
        for (int x = 0; x < src.w; ++x) {
            const float g = 0.299f * src.at(0, y, x) + 0.587f * src.at(1, y, x) + 0.114f * src.at(2, y, x);
            for (int ch = 0; ch < src.c; ++ch) dst.at(ch, y, x) = g;
        }
    }
    return dst;
}

// Multiplicative brightness, contrast toward the mean, saturation toward the
// per-pixel gray. Factors drawn uniformly from [max(0, 1-s), 1+s]; the
// saturation factor is drawn even on single-channel images to keep the rng
// stream independent of channel count.
inline Image color_jitter(const Image& src, double strength, Rng& rng) {
    const double lo = std::max(0.0, 1.0 - strength), hi = 1.0 + strength;
    const double fb = rng.uniform(lo, hi);
    const double fc = rng.uniform(lo, hi);
    const double fs = rng.uniform(lo, hi);
    Image dst = src;
    for (auto& v : dst.v) v = static_cast<float>(std::clamp(v * fb, 0.0, 1.0));
    double mean = 0.0;
    for (float v : dst.v) mean += v;
    mean /= static_cast<double>(dst.v.size());
    for (auto& v : dst.v) v = static_cast<float>(std::clamp(mean + fc * (v - mean), 0.0, 1.0));
    if (dst.c >= 3) {
        for (int y = 0; y < dst.h; ++y) {
            for (int x = 0; x < dst.w; ++x) {
                const double g = 0.299 * dst.at(0, y, x) + 0.587 * dst.at(1, y, x) + 0.114 * dst.at(2, y, x);
                for (int ch = 0; ch < dst.c; ++ch) {
                    dst.at(ch, y, x) = static_cast<float>(std::clamp(g + fs * (dst.at(ch, y, x) - g), 0.0, 1.0));
                }
            }
        }
    }
    return dst;
}

// Separable gaussian, replicated edges, odd kernel width.
inline Image gaussian_blur(const Image& src, int kernel, double sigma) {
    if (kernel % 2 == 0) throw ContractError("blur kernel must be odd");
    const int r = kernel / 2;
    std::vector<double> k(static_cast<size_t>(kernel));
    double sum = 0.0;
    for (int i = -r; i <= r; ++i) {
        k[static_cast<size_t>(i + r)] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        sum += k[static_cast<size_t>(i + r)];
    }
    for (auto& v : k) v /= sum;

    Image tmp(src.c, src.h, src.w), dst(src.c, src.h, src.w);
    for (int ch = 0; ch < src.c; ++ch) {
        for (int y = 0; y < src.h; ++y) {
            for (int x = 0; x < src.w; ++x) {
                double acc = 0.0;
                for (int i = -r; i <= r; ++i) {
                    acc += k[static_cast<size_t>(i + r)] * src.at(ch, y, std::clamp(x + i, 0, src.w - 1));
                }
                tmp.at(ch, y, x) = static_cast<float>(acc);
            }
        }
        for (int y = 0; y < src.h; ++y) {
            for (int x = 0; x < src.w; ++x) {
                double acc = 0.0;
                for (int i = -r; i <= r; ++i) {
                    acc += k[static_cast<size_t>(i + r)] * tmp.at(ch, std::clamp(y + i, 0, src.h - 1), x);
                }
                dst.at(ch, y, x) = static_cast<float>(acc);
            }
        }
    }
    return dst;
}

// Area-and-ratio crop re-drawn up to 10 times, then a centered square crop as
// the fallback; the patch is rescaled to out_size either way.
inline Image resized_crop(const Image& src, double scale_lo, double scale_hi, int out_size, Rng& rng) {
    const double area = static_cast<double>(src.h) * src.w;
    int cw = -1, chh = -1, cx = 0, cy = 0;
    for (int attempt = 0; attempt < 10; ++attempt) {
        const double target = area * rng.uniform(scale_lo, scale_hi);
        const double log_ratio = rng.uniform(std::log(3.0 / 4.0), std::log(4.0 / 3.0));
        const double ratio = std::exp(log_ratio);
        const int w = static_cast<int>(std::lround(std::sqrt(target * ratio)));
        const int h = static_cast<int>(std::lround(std::sqrt(target / ratio)));
        if (w >= 1 && h >= 1 && w <= src.w && h <= src.h) {
            cw = w;
            chh = h;
            cx = rng.uniform_int(0, src.w - w);
            cy = rng.uniform_int(0, src.h - h);
            break;
        }
    }
    if (cw < 0) {
        const int side = std::min(src.h, src.w);
        cw = chh = side;
        cx = (src.w - side) / 2;
        cy = (src.h - side) / 2;
    }
    Image patch(src.c, chh, cw);
    for (int ch = 0; ch < src.c; ++ch)
        for (int y = 0; y < chh; ++y)
            for (int x = 0; x < cw; ++x) patch.at(ch, y, x) = src.at(ch, cy + y, cx + x);
    return resize_bilinear(patch, out_size, out_size);
}

// ---------------------------------------------------------------------------
// Policies: ordered transform lists with per-transform probabilities, plus a
// whole-policy gate. When the gate misses, the view is just the resized image.
// ---------------------------------------------------------------------------

enum class TransformKind { HorizontalFlip, Rotation, ColorJitter, Grayscale, GaussianBlur, ResizedCrop };

struct Transform {
    TransformKind kind;
    double probability = 1.0;
    double strength = 0.0;  // jitter strength, or rotation range in degrees
    double scale_lo = 0.08, scale_hi = 1.0;
    int kernel = 29;
    double sigma_lo = 0.1, sigma_hi = 2.0;
};

struct ImagePolicy {
    std::string name = "none";
    std::vector<Transform> transforms;
    double apply_probability = 0.95;
    int out_size = 128;
};

inline ImagePolicy cardiac_policy(int out_size = 128) {
    ImagePolicy p;
    p.name = "cardiac";
    p.out_size = out_size;
    p.transforms.push_back({TransformKind::HorizontalFlip, 0.5});
    p.transforms.push_back({TransformKind::Rotation, 1.0, 45.0});
    p.transforms.push_back({TransformKind::ColorJitter, 1.0, 0.5});
    Transform crop{TransformKind::ResizedCrop, 1.0};
    crop.scale_lo = 0.2;
    crop.scale_hi = 1.0;
    p.transforms.push_back(crop);
    return p;
}

inline ImagePolicy dvm_policy(int out_size = 128) {
    ImagePolicy p;
    p.name = "dvm";
    p.out_size = out_size;
    p.transforms.push_back({TransformKind::ColorJitter, 0.8, 0.8});
    p.transforms.push_back({TransformKind::Grayscale, 0.2});
    Transform blur{TransformKind::GaussianBlur, 0.5};
    blur.kernel = 29;
    p.transforms.push_back(blur);
    Transform crop{TransformKind::ResizedCrop, 1.0};
    crop.scale_lo = 0.08;
    crop.scale_hi = 1.0;
    p.transforms.push_back(crop);
    p.transforms.push_back({TransformKind::HorizontalFlip, 0.5});
    return p;
}

// "none" keeps the resize-only path for eval views and ablation baselines.
inline ImagePolicy resize_only_policy(int out_size = 128) {
    ImagePolicy p;
    p.name = "none";
    p.out_size = out_size;
    p.apply_probability = 0.0;
    return p;
}

inline ImagePolicy policy_by_name(const std::string& name, int out_size = 128) {
    if (name == "cardiac") return cardiac_policy(out_size);
    if (name == "dvm") return dvm_policy(out_size);
    if (name == "none") return resize_only_policy(out_size);
    throw ConfigError("unknown image policy: " + name);
}

inline void clamp_unit(Image& img) {
    for (auto& v : img.v) v = std::clamp(v, 0.0f, 1.0f);
}

// Validation/test view: plain resize, no randomness.
inline Image eval_view(const Image& src, int out_size) {
    Image out = (src.h == out_size && src.w == out_size) ? src : resize_bilinear(src, out_size, out_size);
    clamp_unit(out);
    return out;
}

inline Image augment_image(const Image& src, const ImagePolicy& policy, Rng& rng) {
    if (rng.uniform() >= policy.apply_probability) return eval_view(src, policy.out_size);
    Image img = src;
    for (const auto& t : policy.transforms) {
        const bool apply = rng.uniform() < t.probability;
        switch (t.kind) {
            case TransformKind::HorizontalFlip:
                if (apply) img = flip_horizontal(img);
                break;
            case TransformKind::Rotation:
                if (apply) img = rotate(img, rng.uniform(-t.strength, t.strength));
                break;
            case TransformKind::ColorJitter:
                if (apply) img = color_jitter(img, t.strength, rng);
                break;
            case TransformKind::Grayscale:
                if (apply) img = to_grayscale(img);
                break;
            case TransformKind::GaussianBlur:
                if (apply) img = gaussian_blur(img, t.kernel, rng.uniform(t.sigma_lo, t.sigma_hi));
                break;
            case TransformKind::ResizedCrop:
                if (apply) img = resized_crop(img, t.scale_lo, t.scale_hi, policy.out_size, rng);
                break;
        }
    }
    if (img.h != policy.out_size || img.w != policy.out_size) {
        img = resize_bilinear(img, policy.out_size, policy.out_size);
    }
    clamp_unit(img);
    return img;
}

}  // namespace bmcl
