// Copyright 2026 The Laykari Authors
//
// Licensed under the Apache License, Version 2.0
//
// Minimal CPU layer framework: just enough to express the classifier
// (batch-norm, 1xk time convolutions, ELU, dropout, average pooling, dense)
// with exact analytic gradients. Templated on the scalar so tests can run
// the same layers at f64 for finite-difference checks.

#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <memory>
#include <type_traits>
#include <random>
#include <string>
#include <vector>

#include "laykari/errors.hpp"

namespace laykari::nn {

namespace detail {

// Branchless expm1 for x <= 0, float-only fast path: exp(x) = 2^k * p(r)
// with a degree-5 polynomial on r in [-ln2/2, ln2/2]. Error vs std::expm1f
// is a few 1e-7 absolute, below f32 training noise.
[[gnu::always_inline]] inline float expm1_neg(float x) {
    const float xc = x < -17.0f ? -17.0f : x;
    // Round to nearest via the 1.5*2^23 trick; |xc|*log2(e) < 2^22 always.
    const float kf = (xc * 1.44269504088896341f + 12582912.0f) - 12582912.0f;
    const float r = xc - kf * 0.693147180559945286f;
    float p = 1.0f / 120.0f;
    p = p * r + 1.0f / 24.0f;
    p = p * r + 1.0f / 6.0f;
    p = p * r + 0.5f;
    p = p * r + 1.0f;
    p = p * r + 1.0f;
    const uint32_t bits = static_cast<uint32_t>(static_cast<int32_t>(kf) + 127) << 23;
    return p * std::bit_cast<float>(bits) - 1.0f;
}

// Counter-based mix (splitmix64 finalizer): element i is independent of all
// others, so mask generation vectorises.
inline uint64_t mix64(uint64_t v) {
    uint64_t z = v * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// 64-byte SIMD lane groups for the convolution inner loops. The lane
// structure is fixed in source, so summation order does not depend on the
// compiler's vectoriser. lanes == 0 selects the scalar fallback.
template <typename T>
struct VecOf {
    static constexpr int lanes = 0;
};
#if defined(__GNUC__) || defined(__clang__)
template <>
struct VecOf<float> {
    using type = float __attribute__((vector_size(64), aligned(4), may_alias));
    static constexpr int lanes = 16;
};
template <>
struct VecOf<double> {
    using type = double __attribute__((vector_size(64), aligned(8), may_alias));
    static constexpr int lanes = 8;
};
#endif

} // namespace detail

template <typename T>
struct Tensor4 {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<T> v;

    Tensor4() = default;
    Tensor4(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_), v(static_cast<size_t>(n_) * c_ * h_ * w_, T(0)) {}

    size_t numel() const { return v.size(); }
    T* row(int in, int ic, int ih) {
        return v.data() + ((static_cast<size_t>(in) * c + ic) * h + ih) * w;
    }
    const T* row(int in, int ic, int ih) const {
        return v.data() + ((static_cast<size_t>(in) * c + ic) * h + ih) * w;
    }
    T& at(int in, int ic, int ih, int iw) { return row(in, ic, ih)[iw]; }
    const T& at(int in, int ic, int ih, int iw) const { return row(in, ic, ih)[iw]; }
    bool same_shape(const Tensor4& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
};

// Named view of a parameter (or state) vector and its gradient.
template <typename T>
struct ParamRef {
    std::string name;
    std::vector<int> shape;
    std::vector<T>* value = nullptr;
    std::vector<T>* grad = nullptr; // null for non-trainable state
};

template <typename T>
class Layer {
public:
    virtual ~Layer() = default;
    virtual Tensor4<T> forward(const Tensor4<T>& x, bool train) = 0;
    virtual Tensor4<T> backward(const Tensor4<T>& dy) = 0;
    virtual void collect(std::vector<ParamRef<T>>& params, std::vector<ParamRef<T>>& state) {
        (void)params;
        (void)state;
    }
    virtual void set_dropout_frozen(bool frozen) { (void)frozen; }
};

// Per-channel batch normalisation over (batch, height, width).
template <typename T>
class BatchNorm : public Layer<T> {
public:
    BatchNorm(std::string name, int channels, double eps = 1e-5, double momentum = 0.1)
        : name_(std::move(name)), eps_(eps), momentum_(momentum) {
        gamma_.assign(channels, T(1));
        beta_.assign(channels, T(0));
        d_gamma_.assign(channels, T(0));
        d_beta_.assign(channels, T(0));
        running_mean_.assign(channels, T(0));
        running_var_.assign(channels, T(1));
    }

    // Lane-chunked sum and sum-of-squares; fixed grouping keeps the result
    // independent of compiler vectorisation choices.
    static void row_stats(const T* __restrict r, int n, double& out_sum, double& out_sq) {
        constexpr int kLanes = 16;
        T s[kLanes] = {}, q[kLanes] = {};
        int i = 0;
        for (; i + kLanes <= n; i += kLanes) {
            for (int l = 0; l < kLanes; ++l) {
                const T v = r[i + l];
                s[l] += v;
                q[l] += v * v;
            }
        }
        for (int l = 0; i + l < n; ++l) {
            const T v = r[i + l];
            s[l] += v;
            q[l] += v * v;
        }
        double ds = 0.0, dq = 0.0;
        for (int l = 0; l < kLanes; ++l) {
            ds += s[l];
            dq += q[l];
        }
        out_sum += ds;
        out_sq += dq;
    }

    Tensor4<T> forward(const Tensor4<T>& x, bool train) override {
        const int C = static_cast<int>(gamma_.size());
        if (x.c != C) throw ValidationError(name_ + ": expected " + std::to_string(C) + " channels");
        Tensor4<T> y(x.n, x.c, x.h, x.w);
        const size_t per = static_cast<size_t>(x.n) * x.h * x.w;
        train_ = train;
        if (train) {
            xhat_ = Tensor4<T>(x.n, x.c, x.h, x.w);
            mean_.assign(C, T(0));
            inv_std_.assign(C, T(0));
            for (int ic = 0; ic < C; ++ic) {
                double sum = 0.0, sq = 0.0;
                for (int in = 0; in < x.n; ++in) {
                    for (int ih = 0; ih < x.h; ++ih) {
                        row_stats(x.row(in, ic, ih), x.w, sum, sq);
                    }
                }
                const double mean = sum / per;
                const double var = std::max(0.0, sq / per - mean * mean);
                mean_[ic] = static_cast<T>(mean);
                inv_std_[ic] = static_cast<T>(1.0 / std::sqrt(var + eps_));
                const double unbiased = per > 1 ? var * per / (per - 1.0) : var;
                running_mean_[ic] = static_cast<T>((1.0 - momentum_) * running_mean_[ic] + momentum_ * mean);
                running_var_[ic] = static_cast<T>((1.0 - momentum_) * running_var_[ic] + momentum_ * unbiased);
                for (int in = 0; in < x.n; ++in) {
                    for (int ih = 0; ih < x.h; ++ih) {
                        const T* __restrict r = x.row(in, ic, ih);
                        T* __restrict xh = xhat_.row(in, ic, ih);
                        T* __restrict out = y.row(in, ic, ih);
                        for (int iw = 0; iw < x.w; ++iw) {
                            xh[iw] = (r[iw] - mean_[ic]) * inv_std_[ic];
                            out[iw] = gamma_[ic] * xh[iw] + beta_[ic];
                        }
                    }
                }
            }
        } else {
            for (int ic = 0; ic < C; ++ic) {
                const T scale = gamma_[ic] / static_cast<T>(std::sqrt(static_cast<double>(running_var_[ic]) + eps_));
                const T shift = beta_[ic] - running_mean_[ic] * scale;
                for (int in = 0; in < x.n; ++in) {
                    for (int ih = 0; ih < x.h; ++ih) {
                        const T* __restrict r = x.row(in, ic, ih);
                        T* __restrict out = y.row(in, ic, ih);
                        for (int iw = 0; iw < x.w; ++iw) out[iw] = scale * r[iw] + shift;
                    }
                }
            }
        }
        return y;
    }

    Tensor4<T> backward(const Tensor4<T>& dy) override {
        if (!train_) throw ValidationError(name_ + ": backward requires a train-mode forward");
        const int C = static_cast<int>(gamma_.size());
        const double per = static_cast<double>(dy.n) * dy.h * dy.w;
        Tensor4<T> dx(dy.n, dy.c, dy.h, dy.w);
        for (int ic = 0; ic < C; ++ic) {
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (int in = 0; in < dy.n; ++in) {
                for (int ih = 0; ih < dy.h; ++ih) {
                    const T* __restrict d = dy.row(in, ic, ih);
                    const T* __restrict xh = xhat_.row(in, ic, ih);
                    constexpr int kLanes = 16;
                    T s[kLanes] = {}, q[kLanes] = {};
                    int iw = 0;
                    for (; iw + kLanes <= dy.w; iw += kLanes) {
                        for (int l = 0; l < kLanes; ++l) {
                            s[l] += d[iw + l];
                            q[l] += d[iw + l] * xh[iw + l];
                        }
                    }
                    for (int l = 0; iw + l < dy.w; ++l) {
                        s[l] += d[iw + l];
                        q[l] += d[iw + l] * xh[iw + l];
                    }
                    double ds = 0.0, dq = 0.0;
                    for (int l = 0; l < kLanes; ++l) {
                        ds += s[l];
                        dq += q[l];
                    }
                    sum_dy += ds;
                    sum_dy_xhat += dq;
                }
            }
            d_beta_[ic] += static_cast<T>(sum_dy);
            d_gamma_[ic] += static_cast<T>(sum_dy_xhat);
            const T k = gamma_[ic] * inv_std_[ic];
            const T mean_dy = static_cast<T>(sum_dy / per);
            const T mean_dy_xhat = static_cast<T>(sum_dy_xhat / per);
            for (int in = 0; in < dy.n; ++in) {
                for (int ih = 0; ih < dy.h; ++ih) {
                    const T* __restrict d = dy.row(in, ic, ih);
                    const T* __restrict xh = xhat_.row(in, ic, ih);
                    T* __restrict out = dx.row(in, ic, ih);
                    for (int iw = 0; iw < dy.w; ++iw) {
                        out[iw] = k * (d[iw] - mean_dy - xh[iw] * mean_dy_xhat);
                    }
                }
            }
        }
        return dx;
    }

    void collect(std::vector<ParamRef<T>>& params, std::vector<ParamRef<T>>& state) override {
        const int C = static_cast<int>(gamma_.size());
        params.push_back({name_ + ".gamma", {C}, &gamma_, &d_gamma_});
        params.push_back({name_ + ".beta", {C}, &beta_, &d_beta_});
        state.push_back({name_ + ".running_mean", {C}, &running_mean_, nullptr});
        state.push_back({name_ + ".running_var", {C}, &running_var_, nullptr});
    }

private:
    std::string name_;
    double eps_, momentum_;
    bool train_ = false;
    std::vector<T> gamma_, beta_, d_gamma_, d_beta_;
    std::vector<T> running_mean_, running_var_;
    std::vector<T> mean_, inv_std_;
    Tensor4<T> xhat_;
};

// 1xk convolution along the time axis, stride 1, same padding (even kernels
// pad one extra frame on the right). Frequency rows are independent.
template <typename T>
class Conv1xK : public Layer<T> {
public:
    Conv1xK(std::string name, int in_ch, int out_ch, int k, std::mt19937_64& rng)
        : name_(std::move(name)), in_ch_(in_ch), out_ch_(out_ch), k_(k), pad_left_((k - 1) / 2) {
        if (k < 1) throw ConfigError(name_ + ": kernel length must be positive");
        w_.assign(static_cast<size_t>(out_ch) * in_ch * k, T(0));
        b_.assign(out_ch, T(0));
        dw_.assign(w_.size(), T(0));
        db_.assign(out_ch, T(0));
        const double bound = std::sqrt(6.0 / (static_cast<double>(in_ch) * k));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (auto& v : w_) v = static_cast<T>(u(rng));
    }

    Tensor4<T> forward(const Tensor4<T>& x, bool train) override {
        if (x.c != in_ch_) throw ValidationError(name_ + ": expected " + std::to_string(in_ch_) + " channels");
        if (train) x_ = x;
        Tensor4<T> y(x.n, out_ch_, x.h, x.w);
        const int W = x.w;
        const int Wp = W + k_ - 1;
        // Rows are copied into a zero-padded scratch so every output column
        // is a full-window reduction; the padding contributes exact zeros.
        pad_x_.assign(static_cast<size_t>(in_ch_) * Wp, T(0));
        for (int in = 0; in < x.n; ++in) {
            for (int ih = 0; ih < x.h; ++ih) {
                for (int ci = 0; ci < in_ch_; ++ci) {
                    const T* __restrict xr = x.row(in, ci, ih);
                    T* __restrict pr = pad_x_.data() + static_cast<size_t>(ci) * Wp + pad_left_;
                    for (int t = 0; t < W; ++t) pr[t] = xr[t];
                }
                for (int co = 0; co < out_ch_; ++co) {
                    const T* wrow = w_.data() + static_cast<size_t>(co) * in_ch_ * k_;
                    T* __restrict yr = y.row(in, co, ih);
                    int t0 = 0;
                    // Accumulator tiles live in registers across the whole
                    // channel-and-tap reduction, so each output is stored
                    // once instead of re-read per tap.
                    if constexpr (detail::VecOf<T>::lanes > 0) {
                        using Vec = typename detail::VecOf<T>::type;
                        constexpr int L = detail::VecOf<T>::lanes;
                        for (; t0 + 4 * L <= W; t0 += 4 * L) {
                            Vec a0{}, a1{}, a2{}, a3{};
                            for (int ci = 0; ci < in_ch_; ++ci) {
                                const T* __restrict wk = wrow + static_cast<size_t>(ci) * k_;
                                const T* pr = pad_x_.data() + static_cast<size_t>(ci) * Wp + t0;
                                for (int j = 0; j < k_; ++j) {
                                    const T wj = wk[j];
                                    const Vec* p = reinterpret_cast<const Vec*>(pr + j);
                                    a0 += wj * p[0];
                                    a1 += wj * p[1];
                                    a2 += wj * p[2];
                                    a3 += wj * p[3];
                                }
                            }
                            Vec* o = reinterpret_cast<Vec*>(yr + t0);
                            o[0] = b_[co] + a0;
                            o[1] = b_[co] + a1;
                            o[2] = b_[co] + a2;
                            o[3] = b_[co] + a3;
                        }
                        for (; t0 + L <= W; t0 += L) {
                            Vec a{};
                            for (int ci = 0; ci < in_ch_; ++ci) {
                                const T* __restrict wk = wrow + static_cast<size_t>(ci) * k_;
                                const T* pr = pad_x_.data() + static_cast<size_t>(ci) * Wp + t0;
                                for (int j = 0; j < k_; ++j) {
                                    a += wk[j] * reinterpret_cast<const Vec*>(pr + j)[0];
                                }
                            }
                            *reinterpret_cast<Vec*>(yr + t0) = b_[co] + a;
                        }
                    } else {
                        for (; t0 + kTile <= W; t0 += kTile) {
                            T acc[kTile] = {};
                            for (int ci = 0; ci < in_ch_; ++ci) {
                                const T* __restrict wk = wrow + static_cast<size_t>(ci) * k_;
                                const T* __restrict pr = pad_x_.data() + static_cast<size_t>(ci) * Wp + t0;
                                for (int j = 0; j < k_; ++j) {
                                    const T wj = wk[j];
                                    for (int i = 0; i < kTile; ++i) acc[i] += wj * pr[j + i];
                                }
                            }
                            for (int i = 0; i < kTile; ++i) yr[t0 + i] = b_[co] + acc[i];
                        }
                    }
                    for (int t = t0; t < W; ++t) {
                        T acc = T(0);
                        for (int ci = 0; ci < in_ch_; ++ci) {
                            const T* wk = wrow + static_cast<size_t>(ci) * k_;
                            const T* pr = pad_x_.data() + static_cast<size_t>(ci) * Wp + t;
                            for (int j = 0; j < k_; ++j) acc += wk[j] * pr[j];
                        }
                        yr[t] = b_[co] + acc;
                    }
                }
            }
        }
        return y;
    }

    // Fixed-grouping chunked dot product: deterministic regardless of how the
    // compiler vectorises it.
    static T row_dot(const T* __restrict a, const T* __restrict b, int n) {
        constexpr int kLanes = 16;
        T acc[kLanes] = {};
        int t = 0;
        for (; t + kLanes <= n; t += kLanes) {
            for (int l = 0; l < kLanes; ++l) acc[l] += a[t + l] * b[t + l];
        }
        for (int l = 0; t + l < n; ++l) acc[l] += a[t + l] * b[t + l];
        T s01 = (acc[0] + acc[1]) + (acc[2] + acc[3]);
        T s23 = (acc[4] + acc[5]) + (acc[6] + acc[7]);
        T s45 = (acc[8] + acc[9]) + (acc[10] + acc[11]);
        T s67 = (acc[12] + acc[13]) + (acc[14] + acc[15]);
        return (s01 + s23) + (s45 + s67);
    }

    Tensor4<T> backward(const Tensor4<T>& dy) override {
        const int W = x_.w;
        const int Wp = W + k_ - 1;
        // Incoming gradient rows are padded with k-1-pad_left leading zeros,
        // so the transposed convolution below is also all full windows.
        const int dy_off = k_ - 1 - pad_left_;
        Tensor4<T> dx(x_.n, in_ch_, x_.h, x_.w);
        pad_x_.assign(static_cast<size_t>(in_ch_) * Wp, T(0));
        pad_dy_.assign(static_cast<size_t>(out_ch_) * Wp, T(0));
        for (int in = 0; in < dy.n; ++in) {
            for (int ih = 0; ih < dy.h; ++ih) {
                for (int ci = 0; ci < in_ch_; ++ci) {
                    const T* __restrict xr = x_.row(in, ci, ih);
                    T* __restrict pr = pad_x_.data() + static_cast<size_t>(ci) * Wp + pad_left_;
                    for (int t = 0; t < W; ++t) pr[t] = xr[t];
                }
                for (int co = 0; co < out_ch_; ++co) {
                    const T* __restrict dr = dy.row(in, co, ih);
                    T* __restrict pr = pad_dy_.data() + static_cast<size_t>(co) * Wp + dy_off;
                    double sum_b = 0.0;
                    for (int t = 0; t < W; ++t) {
                        pr[t] = dr[t];
                        sum_b += dr[t];
                    }
                    db_[co] += static_cast<T>(sum_b);
                    T* dwk_row = dw_.data() + static_cast<size_t>(co) * in_ch_ * k_;
                    for (int ci = 0; ci < in_ch_; ++ci) {
                        const T* px = pad_x_.data() + static_cast<size_t>(ci) * Wp;
                        T* dwk = dwk_row + static_cast<size_t>(ci) * k_;
                        for (int j = 0; j < k_; ++j) dwk[j] += row_dot(dr, px + j, W);
                    }
                }
                for (int ci = 0; ci < in_ch_; ++ci) {
                    T* __restrict dxr = dx.row(in, ci, ih);
                    int t0 = 0;
                    if constexpr (detail::VecOf<T>::lanes > 0) {
                        using Vec = typename detail::VecOf<T>::type;
                        constexpr int L = detail::VecOf<T>::lanes;
                        for (; t0 + 4 * L <= W; t0 += 4 * L) {
                            Vec a0{}, a1{}, a2{}, a3{};
                            for (int co = 0; co < out_ch_; ++co) {
                                const T* wk = w_.data() + (static_cast<size_t>(co) * in_ch_ + ci) * k_;
                                const T* pr = pad_dy_.data() + static_cast<size_t>(co) * Wp + t0;
                                for (int m = 0; m < k_; ++m) {
                                    const T wj = wk[k_ - 1 - m];
                                    const Vec* p = reinterpret_cast<const Vec*>(pr + m);
                                    a0 += wj * p[0];
                                    a1 += wj * p[1];
                                    a2 += wj * p[2];
                                    a3 += wj * p[3];
                                }
                            }
                            Vec* o = reinterpret_cast<Vec*>(dxr + t0);
                            o[0] = a0;
                            o[1] = a1;
                            o[2] = a2;
                            o[3] = a3;
                        }
                        for (; t0 + L <= W; t0 += L) {
                            Vec a{};
                            for (int co = 0; co < out_ch_; ++co) {
                                const T* wk = w_.data() + (static_cast<size_t>(co) * in_ch_ + ci) * k_;
                                const T* pr = pad_dy_.data() + static_cast<size_t>(co) * Wp + t0;
                                for (int m = 0; m < k_; ++m) {
                                    a += wk[k_ - 1 - m] * reinterpret_cast<const Vec*>(pr + m)[0];
                                }
                            }
                            *reinterpret_cast<Vec*>(dxr + t0) = a;
                        }
                    } else {
                        for (; t0 + kTile <= W; t0 += kTile) {
                            T acc[kTile] = {};
                            for (int co = 0; co < out_ch_; ++co) {
                                const T* wk = w_.data() + (static_cast<size_t>(co) * in_ch_ + ci) * k_;
                                const T* __restrict pr = pad_dy_.data() + static_cast<size_t>(co) * Wp + t0;
                                for (int m = 0; m < k_; ++m) {
                                    const T wj = wk[k_ - 1 - m];
                                    for (int i = 0; i < kTile; ++i) acc[i] += wj * pr[m + i];
                                }
                            }
                            for (int i = 0; i < kTile; ++i) dxr[t0 + i] = acc[i];
                        }
                    }
                    for (int t = t0; t < W; ++t) {
                        T acc = T(0);
                        for (int co = 0; co < out_ch_; ++co) {
                            const T* wk = w_.data() + (static_cast<size_t>(co) * in_ch_ + ci) * k_;
                            const T* pr = pad_dy_.data() + static_cast<size_t>(co) * Wp + t;
                            for (int m = 0; m < k_; ++m) acc += wk[k_ - 1 - m] * pr[m];
                        }
                        dxr[t] = acc;
                    }
                }
            }
        }
        return dx;
    }

    void collect(std::vector<ParamRef<T>>& params, std::vector<ParamRef<T>>& state) override {
        (void)state;
        params.push_back({name_ + ".w", {out_ch_, in_ch_, k_}, &w_, &dw_});
        params.push_back({name_ + ".b", {out_ch_}, &b_, &db_});
    }

private:
    static constexpr int kTile = 64;

    std::string name_;
    int in_ch_, out_ch_, k_, pad_left_;
    std::vector<T> w_, b_, dw_, db_;
    std::vector<T> pad_x_, pad_dy_;
    Tensor4<T> x_;
};

template <typename T>
class Elu : public Layer<T> {
public:
    Tensor4<T> forward(const Tensor4<T>& x, bool train) override {
        Tensor4<T> y(x.n, x.c, x.h, x.w);
        for (size_t i = 0; i < x.numel(); ++i) {
            if constexpr (std::is_same_v<T, float>) {
                y.v[i] = x.v[i] > 0.0f ? x.v[i] : detail::expm1_neg(x.v[i]);
            } else {
                y.v[i] = x.v[i] > T(0) ? x.v[i] : static_cast<T>(std::expm1(static_cast<double>(x.v[i])));
            }
        }
        if (train) y_ = y;
        return y;
    }
    Tensor4<T> backward(const Tensor4<T>& dy) override {
        Tensor4<T> dx(dy.n, dy.c, dy.h, dy.w);
        for (size_t i = 0; i < dy.numel(); ++i) {
            dx.v[i] = y_.v[i] > T(0) ? dy.v[i] : dy.v[i] * (y_.v[i] + T(1));
        }
        return dx;
    }

private:
    Tensor4<T> y_;
};

// Inverted dropout. The mask can be frozen so finite-difference checks see a
// fixed function.
template <typename T>
class Dropout : public Layer<T> {
public:
    Dropout(double p, std::mt19937_64& rng) : p_(p), rng_(&rng) {
        if (p < 0.0 || p >= 1.0) throw ConfigError("dropout probability must be in [0, 1)");
    }

    Tensor4<T> forward(const Tensor4<T>& x, bool train) override {
        if (!train || p_ == 0.0) return x;
        if (!frozen_ || mask_.size() != x.numel()) {
            mask_.resize(x.numel());
            const uint64_t threshold = static_cast<uint64_t>(p_ * 18446744073709551615.0);
            const T scale = static_cast<T>(1.0 / (1.0 - p_));
            const uint64_t base = (*rng_)();
            for (size_t i = 0; i < mask_.size(); ++i) {
                mask_[i] = detail::mix64(base + i) >= threshold ? scale : T(0);
            }
        }
        Tensor4<T> y(x.n, x.c, x.h, x.w);
        for (size_t i = 0; i < x.numel(); ++i) y.v[i] = x.v[i] * mask_[i];
        return y;
    }

    Tensor4<T> backward(const Tensor4<T>& dy) override {
        if (p_ == 0.0 || mask_.empty()) return dy;
        Tensor4<T> dx(dy.n, dy.c, dy.h, dy.w);
        for (size_t i = 0; i < dy.numel(); ++i) dx.v[i] = dy.v[i] * mask_[i];
        return dx;
    }

    void set_dropout_frozen(bool frozen) override { frozen_ = frozen; }

private:
    double p_;
    std::mt19937_64* rng_;
    bool frozen_ = false;
    std::vector<T> mask_;
};

// Non-overlapping average pooling with kernel (kh, kw); stride equals kernel.
template <typename T>
class AvgPool : public Layer<T> {
public:
    AvgPool(int kh, int kw) : kh_(kh), kw_(kw) {
        if (kh < 1 || kw < 1) throw ConfigError("pool kernel must be positive");
    }

    Tensor4<T> forward(const Tensor4<T>& x, bool) override {
        if (x.h % kh_ != 0 || x.w % kw_ != 0) {
            throw ValidationError("pool kernel " + std::to_string(kh_) + "x" + std::to_string(kw_) +
                                  " does not divide input " + std::to_string(x.h) + "x" + std::to_string(x.w));
        }
        in_h_ = x.h;
        in_w_ = x.w;
        Tensor4<T> y(x.n, x.c, x.h / kh_, x.w / kw_);
        const T inv = static_cast<T>(1.0 / (static_cast<double>(kh_) * kw_));
        for (int in = 0; in < x.n; ++in) {
            for (int ic = 0; ic < x.c; ++ic) {
                for (int oh = 0; oh < y.h; ++oh) {
                    T* yr = y.row(in, ic, oh);
                    for (int dh = 0; dh < kh_; ++dh) {
                        const T* xr = x.row(in, ic, oh * kh_ + dh);
                        for (int ow = 0; ow < y.w; ++ow) {
                            T acc = dh == 0 ? T(0) : yr[ow];
                            const T* seg = xr + ow * kw_;
                            T local = T(0);
                            for (int dw = 0; dw < kw_; ++dw) local += seg[dw];
                            yr[ow] = acc + local;
                        }
                    }
                    for (int ow = 0; ow < y.w; ++ow) yr[ow] *= inv;
                }
            }
        }
        return y;
    }

    Tensor4<T> backward(const Tensor4<T>& dy) override {
        Tensor4<T> dx(dy.n, dy.c, in_h_, in_w_);
        const T inv = static_cast<T>(1.0 / (static_cast<double>(kh_) * kw_));
        for (int in = 0; in < dy.n; ++in) {
            for (int ic = 0; ic < dy.c; ++ic) {
                for (int oh = 0; oh < dy.h; ++oh) {
                    const T* dr = dy.row(in, ic, oh);
                    for (int dh = 0; dh < kh_; ++dh) {
                        T* dxr = dx.row(in, ic, oh * kh_ + dh);
                        for (int ow = 0; ow < dy.w; ++ow) {
                            const T g = dr[ow] * inv;
                            T* seg = dxr + ow * kw_;
                            for (int dw = 0; dw < kw_; ++dw) seg[dw] = g;
                        }
                    }
                }
            }
        }
        return dx;
    }

private:
    int kh_, kw_;
    int in_h_ = 0, in_w_ = 0;
};

// Fully connected over the flattened (c, h, w) axes; output shape [n, out, 1, 1].
template <typename T>
class Dense : public Layer<T> {
public:
    Dense(std::string name, int in_dim, int out_dim, std::mt19937_64& rng)
        : name_(std::move(name)), in_(in_dim), out_(out_dim) {
        w_.assign(static_cast<size_t>(out_dim) * in_dim, T(0));
        b_.assign(out_dim, T(0));
        dw_.assign(w_.size(), T(0));
        db_.assign(out_dim, T(0));
        const double bound = std::sqrt(6.0 / in_dim);
        std::uniform_real_distribution<double> u(-bound, bound);
        for (auto& v : w_) v = static_cast<T>(u(rng));
    }

    Tensor4<T> forward(const Tensor4<T>& x, bool train) override {
        const int flat = x.c * x.h * x.w;
        if (flat != in_) {
            throw ValidationError(name_ + ": expected " + std::to_string(in_) + " inputs, got " +
                                  std::to_string(flat));
        }
        if (train) x_ = x;
        in_shape_ = {x.c, x.h, x.w};
        Tensor4<T> y(x.n, out_, 1, 1);
        for (int in = 0; in < x.n; ++in) {
            const T* xr = x.v.data() + static_cast<size_t>(in) * in_;
            for (int o = 0; o < out_; ++o) {
                const T* wr = w_.data() + static_cast<size_t>(o) * in_;
                double acc = b_[o];
                for (int i = 0; i < in_; ++i) acc += static_cast<double>(wr[i]) * xr[i];
                y.at(in, o, 0, 0) = static_cast<T>(acc);
            }
        }
        return y;
    }

    Tensor4<T> backward(const Tensor4<T>& dy) override {
        Tensor4<T> dx(dy.n, in_shape_[0], in_shape_[1], in_shape_[2]);
        for (int in = 0; in < dy.n; ++in) {
            const T* xr = x_.v.data() + static_cast<size_t>(in) * in_;
            T* dxr = dx.v.data() + static_cast<size_t>(in) * in_;
            for (int o = 0; o < out_; ++o) {
                const T g = dy.at(in, o, 0, 0);
                db_[o] += g;
                const T* wr = w_.data() + static_cast<size_t>(o) * in_;
                T* dwr = dw_.data() + static_cast<size_t>(o) * in_;
                for (int i = 0; i < in_; ++i) {
                    dwr[i] += g * xr[i];
                    dxr[i] += g * wr[i];
                }
            }
        }
        return dx;
    }

    void collect(std::vector<ParamRef<T>>& params, std::vector<ParamRef<T>>& state) override {
        (void)state;
        params.push_back({name_ + ".w", {out_, in_}, &w_, &dw_});
        params.push_back({name_ + ".b", {out_}, &b_, &db_});
    }

private:
    std::string name_;
    int in_, out_;
    std::array<int, 3> in_shape_{};
    std::vector<T> w_, b_, dw_, db_;
    Tensor4<T> x_;
};

// Runs branches on the same input and concatenates outputs along channels.
template <typename T>
class ParallelConcat : public Layer<T> {
public:
    explicit ParallelConcat(std::vector<std::unique_ptr<Layer<T>>> branches)
        : branches_(std::move(branches)) {
        if (branches_.empty()) throw ConfigError("parallel block needs at least one branch");
    }

    Tensor4<T> forward(const Tensor4<T>& x, bool train) override {
        std::vector<Tensor4<T>> ys;
        ys.reserve(branches_.size());
        int total_c = 0;
        for (auto& b : branches_) {
            ys.push_back(b->forward(x, train));
            total_c += ys.back().c;
        }
        channels_.clear();
        Tensor4<T> y(x.n, total_c, ys[0].h, ys[0].w);
        int c0 = 0;
        for (auto& part : ys) {
            channels_.push_back(part.c);
            for (int in = 0; in < y.n; ++in) {
                for (int ic = 0; ic < part.c; ++ic) {
                    for (int ih = 0; ih < y.h; ++ih) {
                        std::copy_n(part.row(in, ic, ih), y.w, y.row(in, c0 + ic, ih));
                    }
                }
            }
            c0 += part.c;
        }
        return y;
    }

    Tensor4<T> backward(const Tensor4<T>& dy) override {
        Tensor4<T> dx;
        int c0 = 0;
        for (size_t bi = 0; bi < branches_.size(); ++bi) {
            Tensor4<T> part(dy.n, channels_[bi], dy.h, dy.w);
            for (int in = 0; in < dy.n; ++in) {
                for (int ic = 0; ic < part.c; ++ic) {
                    for (int ih = 0; ih < dy.h; ++ih) {
                        std::copy_n(dy.row(in, c0 + ic, ih), dy.w, part.row(in, ic, ih));
                    }
                }
            }
            Tensor4<T> branch_dx = branches_[bi]->backward(part);
            if (dx.numel() == 0) {
                dx = std::move(branch_dx);
            } else {
                for (size_t i = 0; i < dx.numel(); ++i) dx.v[i] += branch_dx.v[i];
            }
            c0 += channels_[bi];
        }
        return dx;
    }

    void collect(std::vector<ParamRef<T>>& params, std::vector<ParamRef<T>>& state) override {
        for (auto& b : branches_) b->collect(params, state);
    }
    void set_dropout_frozen(bool frozen) override {
        for (auto& b : branches_) b->set_dropout_frozen(frozen);
    }

private:
    std::vector<std::unique_ptr<Layer<T>>> branches_;
    std::vector<int> channels_;
};

template <typename T>
class Net {
public:
    Net() : rng_(std::make_unique<std::mt19937_64>(0)) {}

    std::mt19937_64& rng() { return *rng_; }
    void reseed(uint64_t seed) { rng_->seed(seed); }
    void add(std::unique_ptr<Layer<T>> layer) { layers_.push_back(std::move(layer)); }
    size_t n_layers() const { return layers_.size(); }

    Tensor4<T> forward(Tensor4<T> x, bool train) {
        for (auto& l : layers_) x = l->forward(x, train);
        return x;
    }
    Tensor4<T> backward(Tensor4<T> dy) {
        for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) dy = (*it)->backward(dy);
        return dy;
    }

    std::vector<ParamRef<T>> params() {
        std::vector<ParamRef<T>> p, s;
        for (auto& l : layers_) l->collect(p, s);
        return p;
    }
    std::vector<ParamRef<T>> state() {
        std::vector<ParamRef<T>> p, s;
        for (auto& l : layers_) l->collect(p, s);
        return s;
    }
    // Params first, then running state: the serialization order.
    std::vector<ParamRef<T>> tensors() {
        std::vector<ParamRef<T>> p, s;
        for (auto& l : layers_) l->collect(p, s);
        for (auto& r : s) p.push_back(r);
        return p;
    }

    void zero_grad() {
        for (auto& p : params()) {
            if (p.grad) std::fill(p.grad->begin(), p.grad->end(), T(0));
        }
    }
    void set_dropout_frozen(bool frozen) {
        for (auto& l : layers_) l->set_dropout_frozen(frozen);
    }
    size_t param_count() {
        size_t n = 0;
        for (auto& p : params()) n += p.value->size();
        return n;
    }

private:
    std::vector<std::unique_ptr<Layer<T>>> layers_;
    std::unique_ptr<std::mt19937_64> rng_;
};

// Stable softmax over the class axis of [n, classes, 1, 1] logits.
template <typename T>
std::vector<T> softmax_rows(const Tensor4<T>& logits) {
    std::vector<T> probs(logits.numel());
    for (int in = 0; in < logits.n; ++in) {
        const T* r = logits.v.data() + static_cast<size_t>(in) * logits.c;
        T* p = probs.data() + static_cast<size_t>(in) * logits.c;
        T mx = r[0];
        for (int c = 1; c < logits.c; ++c) mx = std::max(mx, r[c]);
        double sum = 0.0;
        for (int c = 0; c < logits.c; ++c) {
            p[c] = static_cast<T>(std::exp(static_cast<double>(r[c] - mx)));
            sum += p[c];
        }
        for (int c = 0; c < logits.c; ++c) p[c] = static_cast<T>(p[c] / sum);
    }
    return probs;
}

// Mean cross-entropy over the batch; fills dlogits = (softmax - onehot) / n.
template <typename T>
double cross_entropy(const Tensor4<T>& logits, const std::vector<int>& labels, Tensor4<T>* dlogits) {
    if (static_cast<int>(labels.size()) != logits.n) throw ValidationError("label count != batch size");
    const std::vector<T> probs = softmax_rows(logits);
    double loss = 0.0;
    if (dlogits) *dlogits = Tensor4<T>(logits.n, logits.c, 1, 1);
    for (int in = 0; in < logits.n; ++in) {
        const int y = labels[in];
        if (y < 0 || y >= logits.c) {
            throw ValidationError("label " + std::to_string(y) + " outside class set");
        }
        const T* p = probs.data() + static_cast<size_t>(in) * logits.c;
        loss -= std::log(std::max(static_cast<double>(p[y]), 1e-300));
        if (dlogits) {
            T* d = dlogits->v.data() + static_cast<size_t>(in) * logits.c;
            for (int c = 0; c < logits.c; ++c) {
                d[c] = (p[c] - (c == y ? T(1) : T(0))) / static_cast<T>(logits.n);
            }
        }
    }
    return loss / logits.n;
}

// Adam with bias correction; operates on the grads accumulated in ParamRefs.
template <typename T>
class Adam {
public:
    Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

    void step(std::vector<ParamRef<T>>& params) {
        if (m_.empty()) {
            for (auto& p : params) {
                m_.emplace_back(p.value->size(), T(0));
                v_.emplace_back(p.value->size(), T(0));
            }
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(b1_, t_);
        const double bc2 = 1.0 - std::pow(b2_, t_);
        for (size_t pi = 0; pi < params.size(); ++pi) {
            auto& value = *params[pi].value;
            auto& grad = *params[pi].grad;
            auto& m = m_[pi];
            auto& v = v_[pi];
            for (size_t i = 0; i < value.size(); ++i) {
                const double g = grad[i];
                m[i] = static_cast<T>(b1_ * m[i] + (1.0 - b1_) * g);
                v[i] = static_cast<T>(b2_ * v[i] + (1.0 - b2_) * g * g);
                const double mh = m[i] / bc1;
                const double vh = v[i] / bc2;
                value[i] -= static_cast<T>(lr_ * mh / (std::sqrt(vh) + eps_));
            }
        }
    }

private:
    double lr_, b1_, b2_, eps_;
    long t_ = 0;
    std::vector<std::vector<T>> m_, v_;
};

} // namespace laykari::nn
