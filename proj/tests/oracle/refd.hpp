#pragma once

// Double-precision reference implementations used as independent oracles in
// tests. Deliberately written in the plainest possible style and kept apart
// from the library code they check.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace refd {

using vecd = std::vector<double>;

inline vecd conv2d(const vecd& in, int N, int H, int W, int Ci, const vecd& w, int KH, int KW,
                   int Co, const vecd& b, int pad) {
    const int OH = H + 2 * pad - KH + 1;
    const int OW = W + 2 * pad - KW + 1;
    vecd out((size_t)N * OH * OW * Co, 0.0);
    for (int n = 0; n < N; ++n)
        for (int oy = 0; oy < OH; ++oy)
            for (int ox = 0; ox < OW; ++ox)
                for (int co = 0; co < Co; ++co) {
                    double acc = b.empty() ? 0.0 : b[(size_t)co];
                    for (int ky = 0; ky < KH; ++ky)
                        for (int kx = 0; kx < KW; ++kx) {
                            const int iy = oy + ky - pad;
                            const int ix = ox + kx - pad;
                            if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                            for (int ci = 0; ci < Ci; ++ci) {
                                acc += in[(((size_t)n * H + iy) * W + ix) * Ci + ci] *
                                       w[(((size_t)ky * KW + kx) * Ci + ci) * Co + co];
                            }
                        }
                    out[(((size_t)n * OH + oy) * OW + ox) * Co + co] = acc;
                }
    return out;
}

inline vecd group_norm(const vecd& in, int N, int H, int W, int C, const vecd& gamma,
                       const vecd& beta, int groups, double eps) {
    const int Cg = C / groups;
    vecd out(in.size(), 0.0);
    for (int n = 0; n < N; ++n)
        for (int g = 0; g < groups; ++g) {
            double sum = 0.0, sq = 0.0;
            const double S = (double)H * W * Cg;
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x)
                    for (int c = 0; c < Cg; ++c) {
                        const double v = in[(((size_t)n * H + y) * W + x) * C + g * Cg + c];
                        sum += v;
                        sq += v * v;
                    }
            const double m = sum / S;
            const double var = sq / S - m * m;
            const double inv = 1.0 / std::sqrt(var + eps);
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x)
                    for (int c = 0; c < Cg; ++c) {
                        const size_t i = (((size_t)n * H + y) * W + x) * C + g * Cg + c;
                        out[i] = gamma[(size_t)g * Cg + c] * (in[i] - m) * inv +
                                 beta[(size_t)g * Cg + c];
                    }
        }
    return out;
}

inline vecd linear(const vecd& in, int N, int K, const vecd& w, int M, const vecd& b) {
    vecd out((size_t)N * M, 0.0);
    for (int n = 0; n < N; ++n)
        for (int m = 0; m < M; ++m) {
            double acc = b.empty() ? 0.0 : b[(size_t)m];
            for (int k = 0; k < K; ++k) acc += in[(size_t)n * K + k] * w[(size_t)k * M + m];
            out[(size_t)n * M + m] = acc;
        }
    return out;
}

inline vecd sigmoid(vecd x) {
    for (auto& v : x) v = 1.0 / (1.0 + std::exp(-v));
    return x;
}

inline vecd silu(vecd x) {
    for (auto& v : x) v = v / (1.0 + std::exp(-v));
    return x;
}

inline vecd downsample2x(const vecd& in, int N, int H, int W, int C) {
    const int OH = H / 2, OW = W / 2;
    vecd out((size_t)N * OH * OW * C);
    for (int n = 0; n < N; ++n)
        for (int y = 0; y < OH; ++y)
            for (int x = 0; x < OW; ++x)
                for (int c = 0; c < C; ++c)
                    out[(((size_t)n * OH + y) * OW + x) * C + c] =
                        in[(((size_t)n * H + 2 * y) * W + 2 * x) * C + c];
    return out;
}

inline vecd upsample2x(const vecd& in, int N, int H, int W, int C) {
    const int OH = H * 2, OW = W * 2;
    vecd out((size_t)N * OH * OW * C);
    for (int n = 0; n < N; ++n)
        for (int y = 0; y < OH; ++y)
            for (int x = 0; x < OW; ++x)
                for (int c = 0; c < C; ++c)
                    out[(((size_t)n * OH + y) * OW + x) * C + c] =
                        in[(((size_t)n * H + y / 2) * W + x / 2) * C + c];
    return out;
}

inline vecd concat_channels(const vecd& a, const vecd& b, int64_t sites, int Ca, int Cb) {
    vecd out((size_t)sites * (Ca + Cb));
    for (int64_t s = 0; s < sites; ++s) {
        for (int c = 0; c < Ca; ++c) out[(size_t)s * (Ca + Cb) + c] = a[(size_t)s * Ca + c];
        for (int c = 0; c < Cb; ++c) out[(size_t)s * (Ca + Cb) + Ca + c] = b[(size_t)s * Cb + c];
    }
    return out;
}

inline vecd broadcast_add_channels(const vecd& in, const vecd& v, int N, int64_t sites_per_n,
                                   int C) {
    vecd out(in.size());
    for (int n = 0; n < N; ++n)
        for (int64_t s = 0; s < sites_per_n; ++s)
            for (int c = 0; c < C; ++c) {
                const size_t i = ((size_t)n * sites_per_n + s) * C + c;
                out[i] = in[i] + v[(size_t)n * C + c];
            }
    return out;
}

inline double mean(const vecd& x) {
    double acc = 0.0;
    for (double v : x) acc += v;
    return acc / (double)x.size();
}

inline double sum(const vecd& x) {
    double acc = 0.0;
    for (double v : x) acc += v;
    return acc;
}

inline vecd add(const vecd& a, const vecd& b) {
    vecd out(a.size());
    for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

inline vecd sub(const vecd& a, const vecd& b) {
    vecd out(a.size());
    for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

inline vecd mul(const vecd& a, const vecd& b) {
    vecd out(a.size());
    for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
}

inline vecd square(const vecd& a) { return mul(a, a); }

inline vecd abs(vecd a) {
    for (auto& v : a) v = std::fabs(v);
    return a;
}

inline vecd affine(vecd x, double a, double b) {
    for (auto& v : x) v = a * v + b;
    return x;
}

}  // namespace refd
