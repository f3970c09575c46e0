// Copyright 2026 The Laykari Authors
//
// Licensed under the Apache License, Version 2.0

#include "laykari/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

namespace laykari {
namespace {

constexpr double kMtLo = 35.0;
constexpr double kMtHi = 75.0;
constexpr double kMinSection = 5.0;

// Event peak amplitudes. Sams get the strong accent; everything else the
// weak one. Kept low enough that mixing two streams cannot clip even with
// the +20% amplitude jitter.
constexpr double kStrongAmp = 0.7;
constexpr double kWeakAmp = 0.35;

struct BeatSegment {
    double t0, t1;   // seconds
    double b0, b1;   // bpm at the ends
    double beats0;   // cumulative beats at t0
};

std::vector<BeatSegment> build_segments(const SynthSpec& spec, double end_t) {
    std::vector<BeatSegment> segs;
    double beats = 0.0;
    const auto& pts = spec.mt_bpm;
    double prev_t = 0.0;
    double prev_b = pts.front().bpm;
    auto push = [&](double t1, double b1) {
        if (t1 <= prev_t) {
            prev_b = b1;
            return;
        }
        BeatSegment s{prev_t, t1, prev_b, b1, beats};
        beats += (t1 - prev_t) * (prev_b + b1) / 120.0;
        segs.push_back(s);
        prev_t = t1;
        prev_b = b1;
    };
    if (pts.front().time_s > 0.0) push(std::min(pts.front().time_s, end_t), pts.front().bpm);
    for (size_t i = 1; i < pts.size(); ++i) {
        const double span = pts[i].time_s - pts[i - 1].time_s;
        if (span <= 0.0) {
            prev_b = pts[i].bpm; // step change
            continue;
        }
        double t1 = pts[i].time_s;
        double b1 = pts[i].bpm;
        if (t1 > end_t) {
            b1 = pts[i - 1].bpm +
                 (b1 - pts[i - 1].bpm) * (end_t - pts[i - 1].time_s) / span;
            t1 = end_t;
        }
        push(t1, b1);
        if (prev_t >= end_t) break;
    }
    if (prev_t < end_t) push(end_t, prev_b);
    if (segs.empty()) segs.push_back({0.0, end_t, prev_b, prev_b, 0.0});
    return segs;
}

double segment_beats_at(const BeatSegment& s, double t) {
    const double dt = t - s.t0;
    const double slope = (s.b1 - s.b0) / (s.t1 - s.t0);
    return s.beats0 + dt * (s.b0 + slope * dt / 2.0) / 60.0;
}

double segment_time_of(const BeatSegment& s, double beats) {
    const double db = beats - s.beats0;
    const double slope = (s.b1 - s.b0) / (s.t1 - s.t0);
    if (std::fabs(slope) < 1e-12) return s.t0 + 60.0 * db / s.b0;
    // Solve (slope/120) dt^2 + (b0/60) dt - db = 0 for the root >= 0.
    const double a = slope / 120.0;
    const double b = s.b0 / 60.0;
    const double disc = std::max(0.0, b * b + 4.0 * a * db);
    const double dt = (-b + std::sqrt(disc)) / (2.0 * a);
    return s.t0 + dt;
}

void add_click(std::vector<float>& samples, int rate, double t, double amp, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const int n = static_cast<int>(0.005 * rate);
    const int start = static_cast<int>(std::lround(t * rate));
    for (int i = 0; i < n; ++i) {
        const int idx = start + i;
        if (idx < 0 || idx >= static_cast<int>(samples.size())) {
            u(rng); // keep the draw count independent of clipping at the edges
            continue;
        }
        const double env = std::exp(-i / (0.0015 * rate));
        samples[idx] += static_cast<float>(amp * env * u(rng));
    }
}

void add_pulse(std::vector<float>& samples, int rate, double t, double amp, double freq_hz) {
    const int n = static_cast<int>(0.040 * rate);
    const int start = static_cast<int>(std::lround(t * rate));
    for (int i = 0; i < n; ++i) {
        const int idx = start + i;
        if (idx < 0 || idx >= static_cast<int>(samples.size())) continue;
        const double w = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / n);
        samples[idx] += static_cast<float>(amp * w * std::sin(2.0 * M_PI * freq_hz * i / rate));
    }
}

} // namespace

void SynthSpec::validate() const {
    if (mt_bpm.empty()) throw ConfigError("metric tempo needs at least one breakpoint");
    for (size_t i = 0; i < mt_bpm.size(); ++i) {
        const auto& p = mt_bpm[i];
        if (!(p.bpm >= kMtLo && p.bpm <= kMtHi)) {
            throw ConfigError("metric tempo " + std::to_string(p.bpm) + " outside [35, 75]");
        }
        if (p.time_s < 0.0) throw ConfigError("metric tempo breakpoint before t = 0");
        if (i > 0 && p.time_s < mt_bpm[i - 1].time_s) {
            throw ConfigError("metric tempo breakpoints must be time-ordered");
        }
    }
    if (schedule.empty()) throw ConfigError("schedule is empty");
    for (const auto& sec : schedule) {
        if (sec.duration_s < kMinSection) {
            throw ConfigError("section duration " + std::to_string(sec.duration_s) +
                              " below the 5 s minimum");
        }
        if (class_index(Stream::vocal, sec.stm_vocal) < 0) {
            throw ConfigError("vocal stm " + std::to_string(sec.stm_vocal) +
                              " not in {1,2,4,8}");
        }
        if (class_index(Stream::pakhawaj, sec.stm_pakhawaj) < 0) {
            throw ConfigError("pakhawaj stm " + std::to_string(sec.stm_pakhawaj) +
                              " not in {1,2,4,8,16}");
        }
    }
    if (!(noise_floor >= 0.0 && noise_floor < 1.0)) {
        throw ConfigError("noise_floor must be in [0, 1)");
    }
    if (matras_per_cycle < 1) throw ConfigError("matras_per_cycle must be positive");
}

double SynthSpec::total_duration() const {
    double d = 0.0;
    for (const auto& s : schedule) d += s.duration_s;
    return d;
}

double mt_at(const SynthSpec& spec, double t) {
    const auto& pts = spec.mt_bpm;
    if (t <= pts.front().time_s) return pts.front().bpm;
    for (size_t i = 1; i < pts.size(); ++i) {
        if (t <= pts[i].time_s) {
            const double span = pts[i].time_s - pts[i - 1].time_s;
            if (span <= 0.0) return pts[i].bpm;
            const double a = (t - pts[i - 1].time_s) / span;
            return pts[i - 1].bpm + a * (pts[i].bpm - pts[i - 1].bpm);
        }
    }
    return pts.back().bpm;
}

double beats_at(const SynthSpec& spec, double t) {
    const auto segs = build_segments(spec, std::max(t, spec.total_duration()));
    for (const auto& s : segs) {
        if (t <= s.t1) return segment_beats_at(s, std::max(t, s.t0));
    }
    const auto& last = segs.back();
    return segment_beats_at(last, last.t1) + (t - last.t1) * last.b1 / 60.0;
}

double time_of_beat(const SynthSpec& spec, double beats) {
    const auto segs = build_segments(spec, spec.total_duration());
    for (const auto& s : segs) {
        const double end_beats = segment_beats_at(s, s.t1);
        if (beats <= end_beats + 1e-12) return segment_time_of(s, std::max(beats, s.beats0));
    }
    const auto& last = segs.back();
    return last.t1 + 60.0 * (beats - segment_beats_at(last, last.t1)) / last.b1;
}

SynthConcert generate_concert(const SynthSpec& spec) {
    spec.validate();
    const int rate = kPipelineRate;
    const double total = spec.total_duration();
    const size_t n_samples = static_cast<size_t>(std::llround(total * rate));

    SynthConcert out;
    out.vocal.rate = out.pakhawaj.rate = out.mixture.rate = rate;
    out.vocal.samples.assign(n_samples, 0.0f);
    out.pakhawaj.samples.assign(n_samples, 0.0f);

    // Section boundaries and annotation.
    ConcertAnnotation& ann = out.annotation;
    ann.concert_id = "synth";
    ann.matras_per_cycle = spec.matras_per_cycle;
    double t0 = 0.0;
    for (const auto& s : spec.schedule) {
        Section sec;
        sec.start_s = t0;
        sec.end_s = t0 + s.duration_s;
        sec.stm_vocal = s.stm_vocal;
        sec.stm_pakhawaj = s.stm_pakhawaj;
        sec.stm_net = std::max(s.stm_vocal, s.stm_pakhawaj);
        ann.sections.push_back(sec);
        t0 = sec.end_s;
    }

    const double total_beats = beats_at(spec, total);
    for (double b = 0.0; b <= total_beats + 1e-9; b += spec.matras_per_cycle) {
        const double t = time_of_beat(spec, b);
        if (t <= total + 1e-9) ann.sam_times_s.push_back(std::min(t, total));
    }

    std::mt19937_64 rng(spec.rng_seed);
    std::uniform_real_distribution<double> amp_jitter(0.8, 1.2);
    std::uniform_real_distribution<double> time_jitter(-0.005, 0.005);
    std::uniform_real_distribution<double> semitones(-3.0, 3.0);

    // Events per stream: at beat k/stm, with the section's stm looked up at
    // the nominal event time. Sams carry the strong accent.
    auto stm_of = [&](double t, bool vocal) {
        for (const auto& sec : ann.sections) {
            if (t < sec.end_s - 1e-9) {
                return vocal ? *sec.stm_vocal : *sec.stm_pakhawaj;
            }
        }
        const auto& last = ann.sections.back();
        return vocal ? *last.stm_vocal : *last.stm_pakhawaj;
    };
    auto is_sam = [&](double beat) {
        const double r = std::fmod(beat, static_cast<double>(spec.matras_per_cycle));
        return r < 1e-6 || spec.matras_per_cycle - r < 1e-6;
    };

    for (int pass = 0; pass < 2; ++pass) {
        const bool vocal = pass == 0;
        auto& samples = vocal ? out.vocal.samples : out.pakhawaj.samples;
        double beat = 0.0;
        while (true) {
            const double t_nominal = time_of_beat(spec, beat);
            if (t_nominal >= total - 1e-9) break;
            const int stm = stm_of(t_nominal, vocal);
            const double amp = (is_sam(beat) ? kStrongAmp : kWeakAmp) * amp_jitter(rng);
            const double t = t_nominal + time_jitter(rng);
            if (vocal) {
                const double freq = 220.0 * std::pow(2.0, semitones(rng) / 12.0);
                add_pulse(samples, rate, t, amp, freq);
            } else {
                add_click(samples, rate, t, amp, rng);
            }
            beat += 1.0 / stm;
        }
    }

    out.mixture.samples.assign(n_samples, 0.0f);
    std::uniform_real_distribution<double> noise(-1.0, 1.0);
    for (size_t i = 0; i < n_samples; ++i) {
        const double n = spec.noise_floor * noise(rng);
        out.mixture.samples[i] =
            0.5f * (out.vocal.samples[i] + out.pakhawaj.samples[i]) + static_cast<float>(n);
    }
    return out;
}

void save_concert(const std::string& dir, const SynthConcert& concert) {
    ConcertAnnotation ann = concert.annotation;
    std::filesystem::path base(dir);
    if (base.filename().empty()) base = base.parent_path();
    ann.concert_id = base.filename().string();
    save_annotations(dir, ann);
    write_wav((base / "mixture.wav").string(), concert.mixture);
    write_wav((base / "vocal.wav").string(), concert.vocal);
    write_wav((base / "pakhawaj.wav").string(), concert.pakhawaj);
}

} // namespace laykari
