// Copyright 2026 The Laykari Authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <vector>

#include "laykari/errors.hpp"

namespace laykari::detail {

// Iterative radix-2 Cooley-Tukey, power-of-two sizes only.
class Fft {
public:
    explicit Fft(int n) : n_(n) {
        if (n < 2 || (n & (n - 1)) != 0) {
            throw ConfigError("fft size must be a power of two: " + std::to_string(n));
        }
        log2n_ = 0;
        while ((1 << log2n_) < n) ++log2n_;
        twiddle_.resize(n / 2);
        for (int i = 0; i < n / 2; ++i) {
            const double ang = -2.0 * std::numbers::pi * i / n;
            twiddle_[i] = {std::cos(ang), std::sin(ang)};
        }
        bitrev_.resize(n);
        for (int i = 0; i < n; ++i) {
            int r = 0;
            for (int b = 0; b < log2n_; ++b) r |= ((i >> b) & 1) << (log2n_ - 1 - b);
            bitrev_[i] = r;
        }
    }

    int size() const { return n_; }

    // In-place transform of a length-n buffer.
    void forward(std::complex<double>* a) const {
        for (int i = 0; i < n_; ++i) {
            if (i < bitrev_[i]) std::swap(a[i], a[bitrev_[i]]);
        }
        for (int s = 1; s <= log2n_; ++s) {
            const int m = 1 << s;
            const int half = m / 2;
            const int step = n_ / m;
            for (int k = 0; k < n_; k += m) {
                for (int j = 0; j < half; ++j) {
                    const std::complex<double> t = twiddle_[j * step] * a[k + j + half];
                    const std::complex<double> u = a[k + j];
                    a[k + j] = u + t;
                    a[k + j + half] = u - t;
                }
            }
        }
    }

private:
    int n_;
    int log2n_;
    std::vector<std::complex<double>> twiddle_;
    std::vector<int> bitrev_;
};

} // namespace laykari::detail
