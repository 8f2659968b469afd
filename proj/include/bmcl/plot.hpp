#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "bmcl/error.hpp"
#include "bmcl/image.hpp"

namespace bmcl {

// Chart output for reports. Every chart is emitted twice: as a small
// hand-rolled SVG and as a PNG rasterized onto an in-memory canvas with a
// 5x7 bitmap font. Cosmetics only; no numbers are produced here.

struct Color {
    float r = 0, g = 0, b = 0;
};

namespace colors {
inline constexpr Color kBackground{1.0f, 1.0f, 1.0f};
inline constexpr Color kInk{0.15f, 0.15f, 0.18f};
inline constexpr Color kGrid{0.85f, 0.86f, 0.88f};
inline constexpr Color kPrimary{0.22f, 0.45f, 0.78f};
inline constexpr Color kAccent{0.85f, 0.47f, 0.15f};
inline const std::vector<Color> kSeries = {
    {0.22f, 0.45f, 0.78f}, {0.85f, 0.47f, 0.15f}, {0.23f, 0.62f, 0.36f},
    {0.72f, 0.24f, 0.29f}, {0.49f, 0.35f, 0.67f}, {0.42f, 0.44f, 0.47f},
};
}  // namespace colors

namespace detail {

// 5x7 glyphs, one byte per row, bit 4 = leftmost pixel. Lowercase maps to
// uppercase; unknown characters render as a filled box.
inline const uint8_t* glyph5x7(char ch) {
    static const uint8_t kDigits[10][7] = {
        {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}, {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E},
        {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}, {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E},
        {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}, {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E},
        {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}, {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},
        {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}, {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C},
    };
    static const uint8_t kAlpha[26][7] = {
        {0x0E, 0x11, 0x11, 0x11, 0x1F, 0x11, 0x11}, {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E},
        {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}, {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C},
        {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}, {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10},
        {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}, {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11},
        {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}, {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C},
        {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}, {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F},
        {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}, {0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11},
        {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}, {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10},
        {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}, {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11},
        {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}, {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04},
        {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}, {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04},
        {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}, {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11},
        {0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04}, {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F},
    };
    static const uint8_t kSpace[7] = {0, 0, 0, 0, 0, 0, 0};
    static const uint8_t kDot[7] = {0, 0, 0, 0, 0, 0x0C, 0x0C};
    static const uint8_t kComma[7] = {0, 0, 0, 0, 0x0C, 0x04, 0x08};
    static const uint8_t kDash[7] = {0, 0, 0, 0x1F, 0, 0, 0};
    static const uint8_t kUnder[7] = {0, 0, 0, 0, 0, 0, 0x1F};
    static const uint8_t kColon[7] = {0, 0x0C, 0x0C, 0, 0x0C, 0x0C, 0};
    static const uint8_t kPercent[7] = {0x18, 0x19, 0x02, 0x04, 0x08, 0x13, 0x03};
    static const uint8_t kSlash[7] = {0x01, 0x01, 0x02, 0x04, 0x08, 0x10, 0x10};
    static const uint8_t kEq[7] = {0, 0, 0x1F, 0, 0x1F, 0, 0};
    static const uint8_t kPlus[7] = {0, 0x04, 0x04, 0x1F, 0x04, 0x04, 0};
    static const uint8_t kLParen[7] = {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02};
    static const uint8_t kRParen[7] = {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08};
    static const uint8_t kBox[7] = {0x1F, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1F};

    if (ch >= 'a' && ch <= 'z') ch = static_cast<char>(ch - 'a' + 'A');
    if (ch >= '0' && ch <= '9') return kDigits[ch - '0'];
    if (ch >= 'A' && ch <= 'Z') return kAlpha[ch - 'A'];
    switch (ch) {
        case ' ': return kSpace;
        case '.': return kDot;
        case ',': return kComma;
        case '-': return kDash;
        case '_': return kUnder;
        case ':': return kColon;
        case '%': return kPercent;
        case '/': return kSlash;
        case '=': return kEq;
        case '+': return kPlus;
        case '(': return kLParen;
        case ')': return kRParen;
        default: return kBox;
    }
}

class Canvas {
  public:
    Canvas(int w, int h, Color bg) : w_(w), h_(h), px_(static_cast<size_t>(3) * w * h) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) set(x, y, bg);
        }
    }

    void set(int x, int y, Color c) {
        if (x < 0 || y < 0 || x >= w_ || y >= h_) return;
        const size_t base = static_cast<size_t>(y) * w_ + x;
        px_[base] = c.r;
        px_[static_cast<size_t>(w_) * h_ + base] = c.g;
        px_[2 * static_cast<size_t>(w_) * h_ + base] = c.b;
    }

    void fill_rect(double x0, double y0, double x1, double y1, Color c) {
        const int ax = static_cast<int>(std::lround(std::min(x0, x1)));
        const int bx = static_cast<int>(std::lround(std::max(x0, x1)));
        const int ay = static_cast<int>(std::lround(std::min(y0, y1)));
        const int by = static_cast<int>(std::lround(std::max(y0, y1)));
        for (int y = ay; y < by; ++y) {
            for (int x = ax; x < bx; ++x) set(x, y, c);
        }
    }

    void line(double x0, double y0, double x1, double y1, Color c) {
        int ax = static_cast<int>(std::lround(x0)), ay = static_cast<int>(std::lround(y0));
        const int bx = static_cast<int>(std::lround(x1)), by = static_cast<int>(std::lround(y1));
        const int dx = std::abs(bx - ax), dy = -std::abs(by - ay);
        const int sx = ax < bx ? 1 : -1, sy = ay < by ? 1 : -1;
        int err = dx + dy;
        while (true) {
            set(ax, ay, c);
            if (ax == bx && ay == by) break;
            const int e2 = 2 * err;
            if (e2 >= dy) {
                err += dy;
                ax += sx;
            }
            if (e2 <= dx) {
                err += dx;
                ay += sy;
            }
        }
    }

    void text(double x, double y, const std::string& s, Color c, int scale = 1) {
        int cx = static_cast<int>(std::lround(x));
        const int cy = static_cast<int>(std::lround(y));
        for (char ch : s) {
            const uint8_t* g = glyph5x7(ch);
            for (int r = 0; r < 7; ++r) {
                for (int col = 0; col < 5; ++col) {
                    if (!(g[r] & (1 << (4 - col)))) continue;
                    for (int sy = 0; sy < scale; ++sy) {
                        for (int sx = 0; sx < scale; ++sx) set(cx + col * scale + sx, cy + r * scale + sy, c);
                    }
                }
            }
            cx += 6 * scale;
        }
    }

    Image to_image() const {
        Image img;
        img.c = 3;
        img.h = h_;
        img.w = w_;
        img.v = px_;
        return img;
    }

    static int text_width(const std::string& s, int scale = 1) { return static_cast<int>(s.size()) * 6 * scale; }

  private:
    int w_, h_;
    std::vector<float> px_;
};

inline std::string svg_escape(const std::string& s) {
    std::string out;
    for (char ch : s) {
        if (ch == '&') {
            out += "&amp;";
        } else if (ch == '<') {
            out += "&lt;";
        } else if (ch == '>') {
            out += "&gt;";
        } else {
            out.push_back(ch);
        }
    }
    return out;
}

inline std::string svg_color(Color c) {
    std::ostringstream os;
    os << "rgb(" << static_cast<int>(std::lround(c.r * 255)) << "," << static_cast<int>(std::lround(c.g * 255))
       << "," << static_cast<int>(std::lround(c.b * 255)) << ")";
    return os.str();
}

inline std::string trim_number(double v) {
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
}

// Round tick step: 1/2/5 times a power of ten covering span/target ticks.
inline double nice_step(double span, int target) {
    if (span <= 0) return 1.0;
    const double raw = span / std::max(target, 1);
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    for (double m : {1.0, 2.0, 5.0, 10.0}) {
        if (mag * m >= raw) return mag * m;
    }
    return mag * 10.0;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Horizontal bar chart.
// ---------------------------------------------------------------------------

struct BarItem {
    std::string label;
    double value = 0.0;
    bool highlight = false;
};

struct BarChart {
    std::string title;
    std::string value_label;
    std::vector<BarItem> items;
};

inline std::string bar_chart_svg(const BarChart& chart) {
    if (chart.items.empty()) throw ContractError("bar chart needs at least one item");
    const int bar_h = 22, gap = 8, left = 220, right = 80, top = 48, bottom = 34;
    const int plot_w = 520;
    const int n = static_cast<int>(chart.items.size());
    const int height = top + n * (bar_h + gap) + bottom;
    const int width = left + plot_w + right;
    double vmax = 0.0;
    for (const auto& it : chart.items) vmax = std::max(vmax, it.value);
    if (vmax <= 0.0) vmax = 1.0;

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
       << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    os << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    os << "<text x=\"" << width / 2 << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" "
       << "text-anchor=\"middle\" fill=\"" << detail::svg_color(colors::kInk) << "\">"
       << detail::svg_escape(chart.title) << "</text>\n";
    for (int i = 0; i < n; ++i) {
        const auto& it = chart.items[static_cast<size_t>(i)];
        const int y = top + i * (bar_h + gap);
        const double w = plot_w * (it.value / vmax);
        const Color c = it.highlight ? colors::kAccent : colors::kPrimary;
        os << "<text x=\"" << left - 8 << "\" y=\"" << y + bar_h - 6
           << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\" fill=\""
           << detail::svg_color(colors::kInk) << "\">" << detail::svg_escape(it.label) << "</text>\n";
        os << "<rect x=\"" << left << "\" y=\"" << y << "\" width=\"" << w << "\" height=\"" << bar_h
           << "\" fill=\"" << detail::svg_color(c) << "\"/>\n";
        os << "<text x=\"" << left + w + 6 << "\" y=\"" << y + bar_h - 6
           << "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"" << detail::svg_color(colors::kInk) << "\">"
           << detail::trim_number(it.value) << "</text>\n";
    }
    if (!chart.value_label.empty()) {
        os << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 10
           << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" fill=\""
           << detail::svg_color(colors::kInk) << "\">" << detail::svg_escape(chart.value_label) << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

inline Image bar_chart_image(const BarChart& chart) {
    if (chart.items.empty()) throw ContractError("bar chart needs at least one item");
    const int bar_h = 18, gap = 7, left = 200, right = 70, top = 36, bottom = 26;
    const int plot_w = 420;
    const int n = static_cast<int>(chart.items.size());
    const int height = top + n * (bar_h + gap) + bottom;
    const int width = left + plot_w + right;
    double vmax = 0.0;
    for (const auto& it : chart.items) vmax = std::max(vmax, it.value);
    if (vmax <= 0.0) vmax = 1.0;

    detail::Canvas cv(width, height, colors::kBackground);
    cv.text((width - detail::Canvas::text_width(chart.title, 2)) / 2.0, 10, chart.title, colors::kInk, 2);
    for (int i = 0; i < n; ++i) {
        const auto& it = chart.items[static_cast<size_t>(i)];
        const int y = top + i * (bar_h + gap);
        const double w = plot_w * (it.value / vmax);
        std::string label = it.label;
        while (!label.empty() && detail::Canvas::text_width(label) > left - 10) label.pop_back();
        cv.text(left - 8.0 - detail::Canvas::text_width(label), y + 5.0, label, colors::kInk);
        cv.fill_rect(left, y, left + w, y + bar_h, it.highlight ? colors::kAccent : colors::kPrimary);
        cv.text(left + w + 5, y + 5.0, detail::trim_number(it.value), colors::kInk);
    }
    if (!chart.value_label.empty()) {
        cv.text((width - detail::Canvas::text_width(chart.value_label)) / 2.0, height - 14.0, chart.value_label,
                colors::kInk);
    }
    return cv.to_image();
}

// ---------------------------------------------------------------------------
// Line chart (optionally log-scaled x, for training-set-size sweeps).
// ---------------------------------------------------------------------------

struct Series {
    std::string name;
    std::vector<std::pair<double, double>> points;  // (x, y), x ascending
};

struct LineChart {
    std::string title;
    std::string x_label, y_label;
    std::vector<Series> series;
    bool log_x = false;
};

namespace detail {

struct LineLayout {
    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    std::vector<double> x_ticks, y_ticks;
};

inline LineLayout line_layout(const LineChart& chart) {
    bool any = false;
    LineLayout L;
    L.xmin = L.ymin = std::numeric_limits<double>::infinity();
    L.xmax = L.ymax = -std::numeric_limits<double>::infinity();
    for (const auto& s : chart.series) {
        for (auto [x, y] : s.points) {
            if (chart.log_x && x <= 0) throw DomainError("log-scale x requires positive x values");
            const double xv = chart.log_x ? std::log10(x) : x;
            L.xmin = std::min(L.xmin, xv);
            L.xmax = std::max(L.xmax, xv);
            L.ymin = std::min(L.ymin, y);
            L.ymax = std::max(L.ymax, y);
            any = true;
        }
    }
    if (!any) throw ContractError("line chart needs at least one point");
    if (L.xmax - L.xmin < 1e-12) {
        L.xmin -= 0.5;
        L.xmax += 0.5;
    }
    if (L.ymax - L.ymin < 1e-12) {
        L.ymin -= 0.05;
        L.ymax += 0.05;
    }
    const double pad = 0.06 * (L.ymax - L.ymin);
    L.ymin -= pad;
    L.ymax += pad;

    if (chart.log_x) {
        // Tick each decade plus the raw x positions when few.
        std::vector<double> xs;
        for (const auto& s : chart.series)
            for (auto [x, y] : s.points) xs.push_back(std::log10(x));
        std::sort(xs.begin(), xs.end());
        xs.erase(std::unique(xs.begin(), xs.end(), [](double a, double b) { return std::abs(a - b) < 1e-9; }),
                 xs.end());
        L.x_ticks = xs.size() <= 8 ? xs : std::vector<double>();
        if (L.x_ticks.empty()) {
            for (double t = std::ceil(L.xmin); t <= std::floor(L.xmax) + 1e-9; t += 1.0) L.x_ticks.push_back(t);
        }
    } else {
        const double step = nice_step(L.xmax - L.xmin, 6);
        for (double t = std::ceil(L.xmin / step) * step; t <= L.xmax + 1e-9; t += step) L.x_ticks.push_back(t);
    }
    const double ystep = nice_step(L.ymax - L.ymin, 5);
    for (double t = std::ceil(L.ymin / ystep) * ystep; t <= L.ymax + 1e-9; t += ystep) L.y_ticks.push_back(t);
    return L;
}

inline std::string tick_label(double tick, bool log_x) {
    return trim_number(log_x ? std::pow(10.0, tick) : tick);
}

}  // namespace detail

inline std::string line_chart_svg(const LineChart& chart) {
    const detail::LineLayout L = detail::line_layout(chart);
    const int width = 640, height = 420, left = 70, right = 160, top = 48, bottom = 56;
    const int pw = width - left - right, ph = height - top - bottom;
    auto X = [&](double x) {
        const double v = chart.log_x ? std::log10(x) : x;
        return left + pw * (v - L.xmin) / (L.xmax - L.xmin);
    };
    auto Y = [&](double y) { return top + ph * (1.0 - (y - L.ymin) / (L.ymax - L.ymin)); };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
       << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    os << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    os << "<text x=\"" << left + pw / 2 << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" "
       << "text-anchor=\"middle\" fill=\"" << detail::svg_color(colors::kInk) << "\">"
       << detail::svg_escape(chart.title) << "</text>\n";
    for (double t : L.y_ticks) {
        os << "<line x1=\"" << left << "\" y1=\"" << Y(t) << "\" x2=\"" << left + pw << "\" y2=\"" << Y(t)
           << "\" stroke=\"" << detail::svg_color(colors::kGrid) << "\"/>\n";
        os << "<text x=\"" << left - 6 << "\" y=\"" << Y(t) + 4
           << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\" fill=\""
           << detail::svg_color(colors::kInk) << "\">" << detail::trim_number(t) << "</text>\n";
    }
    for (double t : L.x_ticks) {
        const double px = left + pw * (t - L.xmin) / (L.xmax - L.xmin);
        os << "<line x1=\"" << px << "\" y1=\"" << top << "\" x2=\"" << px << "\" y2=\"" << top + ph
           << "\" stroke=\"" << detail::svg_color(colors::kGrid) << "\"/>\n";
        os << "<text x=\"" << px << "\" y=\"" << top + ph + 18
           << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\" fill=\""
           << detail::svg_color(colors::kInk) << "\">" << detail::tick_label(t, chart.log_x) << "</text>\n";
    }
    os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
       << "\" fill=\"none\" stroke=\"" << detail::svg_color(colors::kInk) << "\"/>\n";

    for (size_t si = 0; si < chart.series.size(); ++si) {
        const auto& s = chart.series[si];
        const Color c = colors::kSeries[si % colors::kSeries.size()];
        os << "<polyline fill=\"none\" stroke=\"" << detail::svg_color(c) << "\" stroke-width=\"2\" points=\"";
        for (auto [x, y] : s.points) os << X(x) << "," << Y(y) << " ";
        os << "\"/>\n";
        for (auto [x, y] : s.points) {
            os << "<circle cx=\"" << X(x) << "\" cy=\"" << Y(y) << "\" r=\"3\" fill=\"" << detail::svg_color(c)
               << "\"/>\n";
        }
        const double ly = top + 16.0 + 18.0 * static_cast<double>(si);
        os << "<rect x=\"" << left + pw + 12 << "\" y=\"" << ly - 9 << "\" width=\"14\" height=\"4\" fill=\""
           << detail::svg_color(c) << "\"/>\n";
        os << "<text x=\"" << left + pw + 32 << "\" y=\"" << ly
           << "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"" << detail::svg_color(colors::kInk) << "\">"
           << detail::svg_escape(s.name) << "</text>\n";
    }
    if (!chart.x_label.empty()) {
        os << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 12
           << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" fill=\""
           << detail::svg_color(colors::kInk) << "\">" << detail::svg_escape(chart.x_label) << "</text>\n";
    }
    if (!chart.y_label.empty()) {
        os << "<text x=\"16\" y=\"" << top + ph / 2 << "\" font-family=\"sans-serif\" font-size=\"12\" "
           << "text-anchor=\"middle\" transform=\"rotate(-90 16 " << top + ph / 2 << ")\" fill=\""
           << detail::svg_color(colors::kInk) << "\">" << detail::svg_escape(chart.y_label) << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

inline Image line_chart_image(const LineChart& chart) {
    const detail::LineLayout L = detail::line_layout(chart);
    const int width = 640, height = 420, left = 70, right = 160, top = 40, bottom = 48;
    const int pw = width - left - right, ph = height - top - bottom;
    auto X = [&](double x) {
        const double v = chart.log_x ? std::log10(x) : x;
        return left + pw * (v - L.xmin) / (L.xmax - L.xmin);
    };
    auto Y = [&](double y) { return top + ph * (1.0 - (y - L.ymin) / (L.ymax - L.ymin)); };

    detail::Canvas cv(width, height, colors::kBackground);
    cv.text((width - detail::Canvas::text_width(chart.title, 2)) / 2.0, 8, chart.title, colors::kInk, 2);
    for (double t : L.y_ticks) {
        cv.line(left, Y(t), left + pw, Y(t), colors::kGrid);
        const std::string lbl = detail::trim_number(t);
        cv.text(left - 6.0 - detail::Canvas::text_width(lbl), Y(t) - 3, lbl, colors::kInk);
    }
    for (double t : L.x_ticks) {
        const double px = left + pw * (t - L.xmin) / (L.xmax - L.xmin);
        cv.line(px, top, px, top + ph, colors::kGrid);
        const std::string lbl = detail::tick_label(t, chart.log_x);
        cv.text(px - detail::Canvas::text_width(lbl) / 2.0, top + ph + 8.0, lbl, colors::kInk);
    }
    cv.line(left, top, left + pw, top, colors::kInk);
    cv.line(left, top + ph, left + pw, top + ph, colors::kInk);
    cv.line(left, top, left, top + ph, colors::kInk);
    cv.line(left + pw, top, left + pw, top + ph, colors::kInk);

    for (size_t si = 0; si < chart.series.size(); ++si) {
        const auto& s = chart.series[si];
        const Color c = colors::kSeries[si % colors::kSeries.size()];
        for (size_t i = 1; i < s.points.size(); ++i) {
            cv.line(X(s.points[i - 1].first), Y(s.points[i - 1].second), X(s.points[i].first),
                    Y(s.points[i].second), c);
        }
        for (auto [x, y] : s.points) cv.fill_rect(X(x) - 2, Y(y) - 2, X(x) + 2, Y(y) + 2, c);
        const double ly = top + 10.0 + 14.0 * static_cast<double>(si);
        cv.fill_rect(left + pw + 10, ly, left + pw + 24, ly + 4, c);
        cv.text(left + pw + 30.0, ly - 2, s.name, colors::kInk);
    }
    if (!chart.x_label.empty()) {
        cv.text((width - detail::Canvas::text_width(chart.x_label)) / 2.0, height - 14.0, chart.x_label,
                colors::kInk);
    }
    return cv.to_image();
}

// Writes `<path_base>.svg` and `<path_base>.png`.
inline void write_bar_chart(const std::string& path_base, const BarChart& chart) {
    std::ofstream svg(path_base + ".svg");
    if (!svg) throw ParseError("cannot open chart file for writing: " + path_base + ".svg");
    svg << bar_chart_svg(chart);
    save_png(path_base + ".png", bar_chart_image(chart));
}

inline void write_line_chart(const std::string& path_base, const LineChart& chart) {
    std::ofstream svg(path_base + ".svg");
    if (!svg) throw ParseError("cannot open chart file for writing: " + path_base + ".svg");
    svg << line_chart_svg(chart);
    save_png(path_base + ".png", line_chart_image(chart));
}

}  // namespace bmcl
