// Copyright 2026 The Laykari Authors
//
// Licensed under the Apache License, Version 2.0

#include "plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>

#include "laykari/errors.hpp"

namespace laykari {
namespace {

struct Rgb {
    uint8_t r, g, b;
};

constexpr Rgb kWhite{255, 255, 255};
constexpr Rgb kGridline{225, 225, 225};
constexpr Rgb kAxis{60, 60, 60};
constexpr Rgb kMetric{40, 40, 180};
constexpr Rgb kSurface{210, 80, 0};
constexpr Rgb kNoLabel{222, 222, 222};

Rgb stm_colour(int v) {
    switch (v) {
        case 1: return {68, 119, 170};
        case 2: return {102, 204, 238};
        case 4: return {34, 136, 51};
        case 8: return {204, 187, 68};
        case 16: return {238, 102, 119};
        default: return kNoLabel;
    }
}

struct Canvas {
    int w, h;
    std::vector<Rgb> px;

    Canvas(int w_, int h_) : w(w_), h(h_), px(static_cast<size_t>(w_) * h_, kWhite) {}

    void set(int x, int y, Rgb c) {
        if (x >= 0 && x < w && y >= 0 && y < h) px[static_cast<size_t>(y) * w + x] = c;
    }
    void fill(int x0, int y0, int x1, int y1, Rgb c) {
        for (int y = std::max(0, y0); y < std::min(h, y1); ++y) {
            for (int x = std::max(0, x0); x < std::min(w, x1); ++x) {
                px[static_cast<size_t>(y) * w + x] = c;
            }
        }
    }
    void line(int x0, int y0, int x1, int y1, Rgb c) {
        const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
        const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
        int err = dx + dy;
        while (true) {
            set(x0, y0, c);
            if (x0 == x1 && y0 == y1) break;
            const int e2 = 2 * err;
            if (e2 >= dy) {
                err += dy;
                x0 += sx;
            }
            if (e2 <= dx) {
                err += dx;
                y0 += sy;
            }
        }
    }
};

// 3x5 glyphs for axis numbers, one bit per pixel, top row first.
const uint16_t kGlyphs[11] = {
    0b111101101101111, // 0
    0b010110010010111, // 1
    0b111001111100111, // 2
    0b111001111001111, // 3
    0b101101111001001, // 4
    0b111100111001111, // 5
    0b111100111101111, // 6
    0b111001001001001, // 7
    0b111101111101111, // 8
    0b111101111001111, // 9
    0b000000000000010, // .
};

void draw_text(Canvas& cv, int x, int y, const std::string& s, Rgb c) {
    for (char ch : s) {
        int g = -1;
        if (ch >= '0' && ch <= '9') g = ch - '0';
        if (ch == '.') g = 10;
        if (g >= 0) {
            for (int row = 0; row < 5; ++row) {
                for (int col = 0; col < 3; ++col) {
                    if (kGlyphs[g] >> (14 - row * 3 - col) & 1) cv.set(x + col, y + row, c);
                }
            }
        }
        x += 4;
    }
}

void write_bmp(const std::string& path, const Canvas& cv) {
    const int row_bytes = (cv.w * 3 + 3) & ~3;
    const uint32_t data_size = static_cast<uint32_t>(row_bytes) * cv.h;
    const uint32_t file_size = 54 + data_size;

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    auto u16 = [&](uint16_t v) { out.write(reinterpret_cast<const char*>(&v), 2); };
    auto u32 = [&](uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
    out.write("BM", 2);
    u32(file_size);
    u32(0);
    u32(54);
    u32(40);
    u32(static_cast<uint32_t>(cv.w));
    u32(static_cast<uint32_t>(cv.h));
    u16(1);
    u16(24);
    u32(0);
    u32(data_size);
    u32(2835);
    u32(2835);
    u32(0);
    u32(0);

    std::vector<char> row(row_bytes, 0);
    for (int y = cv.h - 1; y >= 0; --y) {
        for (int x = 0; x < cv.w; ++x) {
            const Rgb c = cv.px[static_cast<size_t>(y) * cv.w + x];
            row[x * 3 + 0] = static_cast<char>(c.b);
            row[x * 3 + 1] = static_cast<char>(c.g);
            row[x * 3 + 2] = static_cast<char>(c.r);
        }
        out.write(row.data(), row_bytes);
    }
    if (!out) throw IoError("short write: " + path);
}

std::string fmt_num(double v) {
    char buf[32];
    if (std::fabs(v - std::round(v)) < 1e-9) {
        std::snprintf(buf, sizeof buf, "%.0f", v);
    } else {
        std::snprintf(buf, sizeof buf, "%.1f", v);
    }
    return buf;
}

} // namespace

void write_plot_bmp(const std::string& path, const TempoTrack& metric,
                    const TempoTrack& surface, const std::vector<Section>& sections) {
    double duration = 0.0;
    for (const TempoTrack* t : {&metric, &surface}) {
        if (!t->times.empty()) duration = std::max(duration, t->times.back());
    }
    if (!sections.empty()) duration = std::max(duration, sections.back().end_s);
    if (duration <= 0.0) duration = 1.0;

    double bpm_lo = 1e9, bpm_hi = -1e9;
    for (const TempoTrack* t : {&metric, &surface}) {
        for (size_t i = 0; i < t->size(); ++i) {
            if (!t->defined(i)) continue;
            bpm_lo = std::min(bpm_lo, t->bpm[i]);
            bpm_hi = std::max(bpm_hi, t->bpm[i]);
        }
    }
    if (bpm_lo > bpm_hi) {
        bpm_lo = 30.0;
        bpm_hi = 600.0;
    }
    bpm_lo /= 1.2;
    bpm_hi *= 1.2;

    const int kW = 900, kH = 360;
    const int kLeft = 40, kRight = 890, kBandTop = 12, kBandBot = 36, kPlotTop = 44,
              kPlotBot = 330;
    Canvas cv(kW, kH);

    auto x_of = [&](double t) {
        return kLeft + static_cast<int>(std::lround((kRight - kLeft) * t / duration));
    };
    auto y_of = [&](double bpm) {
        const double f = (std::log(bpm) - std::log(bpm_lo)) / (std::log(bpm_hi) - std::log(bpm_lo));
        return kPlotBot - static_cast<int>(std::lround((kPlotBot - kPlotTop) * f));
    };

    for (const Section& s : sections) {
        const Rgb c = s.stm_net ? stm_colour(*s.stm_net) : kNoLabel;
        cv.fill(x_of(s.start_s), kBandTop, x_of(s.end_s), kBandBot, c);
        cv.line(x_of(s.start_s), kBandTop, x_of(s.start_s), kPlotBot, kGridline);
    }

    for (double bpm : {30.0, 60.0, 120.0, 240.0, 480.0, 960.0}) {
        if (bpm < bpm_lo || bpm > bpm_hi) continue;
        const int y = y_of(bpm);
        cv.line(kLeft, y, kRight, y, kGridline);
        draw_text(cv, 4, y - 2, fmt_num(bpm), kAxis);
    }
    const double tick_s = duration > 600 ? 120.0 : duration > 120 ? 60.0 : 10.0;
    for (double t = 0.0; t <= duration + 1e-9; t += tick_s) {
        const int x = x_of(t);
        cv.line(x, kPlotBot, x, kPlotBot + 4, kAxis);
        draw_text(cv, x - 4, kPlotBot + 7, fmt_num(t), kAxis);
    }
    cv.line(kLeft, kPlotTop, kLeft, kPlotBot, kAxis);
    cv.line(kLeft, kPlotBot, kRight, kPlotBot, kAxis);

    auto draw_track = [&](const TempoTrack& t, Rgb c) {
        int px = 0, py = 0;
        bool have_prev = false;
        for (size_t i = 0; i < t.size(); ++i) {
            if (!t.defined(i)) {
                have_prev = false;
                continue;
            }
            const int x = x_of(t.times[i]);
            const int y = y_of(t.bpm[i]);
            if (have_prev) {
                cv.line(px, py, x, y, c);
                cv.line(px, py + 1, x, y + 1, c);
            } else {
                cv.set(x, y, c);
            }
            px = x;
            py = y;
            have_prev = true;
        }
    };
    draw_track(surface, kSurface);
    draw_track(metric, kMetric);

    write_bmp(path, cv);
}

} // namespace laykari
