#include "synthval/toy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace synthval::toy {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Lesion tint, chosen far from the background hue band so contrast survives
// even at the subtle prominence level. The irregular-surface speckle darkens
// only the blue channel, so it is exactly neutral in red-minus-green (the
// shape/prominence field) while green-minus-blue lights up.
constexpr float kLesionR = 0.70f, kLesionG = 0.08f, kLesionB = 0.25f;
constexpr float kMixScale = 0.75f;  // peak mix weight at full profile height
constexpr float kTexAmp = 0.90f;    // peak speckle blue-channel draw-down

float shape_amplitude(LesionShape s) {
    switch (s) {
        case LesionShape::Flat: return 0.65f;
        case LesionShape::Sessile: return 0.85f;
        case LesionShape::Pedunculated: return 0.90f;
    }
    return 0.0f;
}

float prominence_factor(LesionProminence p) {
    return p == LesionProminence::Subtle ? 0.55f : 1.0f;
}

// Probe decision thresholds, pinned from the calibration pilot's margin
// printouts over the full attribute grid.
constexpr double kStalkOffsetThresh = 0.15;
constexpr double kEdgeRatioThresh = 0.45;


float smooth01(float t) {
    t = std::clamp(t, 0.0f, 1.0f);
    return t * t * (3.0f - 2.0f * t);
}

/// Radial height profile for the radially symmetric shapes; dn is normalized
/// interior depth. Flat rises to a plateau within a thin boundary band, so
/// nearly all of its height is already present next to the boundary; the
/// sessile dome has zero slope at the boundary and peaks at the center.
/// Pedunculated lesions are not radial — they use the head-plus-stalk layout
/// built by stalk_relief below.
float profile(LesionShape s, float dn) {
    switch (s) {
        case LesionShape::Flat: return smooth01(dn / 0.18f);
        case LesionShape::Sessile: return smooth01(dn);
        case LesionShape::Pedunculated: return 0.0f;
    }
    return 0.0f;
}

constexpr float kStalkLevel = 0.35f;  // stalk ridge height relative to the head

/// Height layout for pedunculated lesions: a round head pushed to one end
/// of the footprint, joined to the opposite end by a narrow ridge (the
/// stalk). `head_sign` picks which end of the major axis carries the head;
/// the layout is otherwise a pure function of the footprint, so the probe
/// can rebuild it from the mask alone and try both ends.
std::vector<float> stalk_relief(const std::vector<float>& mask, int size, int head_sign) {
    double sx = 0.0, sy = 0.0, n = 0.0;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            if (mask[(size_t)y * size + x] > 0.5f) {
                sx += x;
                sy += y;
                n += 1.0;
            }
    std::vector<float> h((size_t)size * size, 0.0f);
    if (n < 1.0) return h;
    const double cx = sx / n, cy = sy / n;
    double mxx = 0.0, mxy = 0.0, myy = 0.0;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            if (mask[(size_t)y * size + x] > 0.5f) {
                const double dx = x - cx, dy = y - cy;
                mxx += dx * dx;
                mxy += dx * dy;
                myy += dy * dy;
            }
    mxx /= n;
    mxy /= n;
    myy /= n;
    // Principal axes of the footprint; for a solid ellipse the semi-axes are
    // twice the square roots of the covariance eigenvalues.
    const double tr = 0.5 * (mxx + myy);
    const double det = std::sqrt(std::max(0.25 * (mxx - myy) * (mxx - myy) + mxy * mxy, 0.0));
    const double a = 2.0 * std::sqrt(std::max(tr + det, 1e-6));
    const double b = 2.0 * std::sqrt(std::max(tr - det, 1e-6));
    const double theta = 0.5 * std::atan2(2.0 * mxy, mxx - myy);
    const double sgn = head_sign >= 0 ? 1.0 : -1.0;
    const double ux = sgn * std::cos(theta), uy = sgn * std::sin(theta);
    const double rh = std::max(0.55 * b, 1.5);  // head radius
    const double off = std::max(a - 0.8 * rh, 0.35 * a);
    const double hx = cx + ux * off, hy = cy + uy * off;
    const double ws = std::max(0.30 * b, 1.0);  // stalk ridge half-width
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const size_t i = (size_t)y * size + x;
            if (mask[i] <= 0.5f) continue;
            const double head = smooth01((float)(1.0 - std::hypot(x - hx, y - hy) / rh));
            const double along = (x - cx) * ux + (y - cy) * uy;
            const double perp = std::abs(-(x - cx) * uy + (y - cy) * ux);
            const double ridge =
                along <= off ? kStalkLevel * smooth01((float)(1.0 - perp / ws)) : 0.0;
            h[i] = (float)std::max(head, ridge);
        }
    return h;
}

/// Unit-amplitude height field of a shape over a footprint. Used by the
/// renderer (scaled by the prominence amplitude) and by the probe as a
/// matched-filter template.
std::vector<float> height_template(LesionShape s, const std::vector<float>& mask,
                                   const std::vector<float>& dn, int size, int head_sign) {
    if (s == LesionShape::Pedunculated) return stalk_relief(mask, size, head_sign);
    std::vector<float> h((size_t)size * size, 0.0f);
    for (size_t i = 0; i < h.size(); ++i) {
        if (mask[i] > 0.5f) h[i] = profile(s, dn[i]);
    }
    return h;
}

/// One bilinear value-noise octave with `cells` cells per image edge.
std::vector<float> value_noise(Rng& rng, int size, int cells) {
    const int nodes = cells + 1;
    std::vector<float> grid((size_t)nodes * nodes);
    for (auto& v : grid) v = rng.uniform_f(-1.0f, 1.0f);
    std::vector<float> out((size_t)size * size);
    const float scale = static_cast<float>(cells) / static_cast<float>(size);
    for (int y = 0; y < size; ++y) {
        const float gy = (y + 0.5f) * scale - 0.5f;
        const int y0 = std::clamp(static_cast<int>(std::floor(gy)), 0, cells - 1);
        const float ty = std::clamp(gy - y0, 0.0f, 1.0f);
        for (int x = 0; x < size; ++x) {
            const float gx = (x + 0.5f) * scale - 0.5f;
            const int x0 = std::clamp(static_cast<int>(std::floor(gx)), 0, cells - 1);
            const float tx = std::clamp(gx - x0, 0.0f, 1.0f);
            const float a = grid[(size_t)y0 * nodes + x0];
            const float b = grid[(size_t)y0 * nodes + x0 + 1];
            const float c = grid[(size_t)(y0 + 1) * nodes + x0];
            const float d = grid[(size_t)(y0 + 1) * nodes + x0 + 1];
            const float top = a + (b - a) * tx;
            const float bot = c + (d - c) * tx;
            out[(size_t)y * size + x] = top + (bot - top) * ty;
        }
    }
    return out;
}

}  // namespace

LesionSpec spec_from_index(int i) {
    if (i < 0 || i >= kSpecCount) {
        throw std::out_of_range("spec_from_index: " + std::to_string(i));
    }
    LesionSpec s;
    s.shape = static_cast<LesionShape>(i % 3);
    s.surface = static_cast<LesionSurface>((i / 3) % 2);
    s.size = static_cast<LesionSize>((i / 6) % 2);
    s.prominence = static_cast<LesionProminence>((i / 12) % 2);
    return s;
}

int spec_index(const LesionSpec& spec) {
    return static_cast<int>(spec.shape) + 3 * static_cast<int>(spec.surface) +
           6 * static_cast<int>(spec.size) + 12 * static_cast<int>(spec.prominence);
}

LesionSpec random_spec(Rng& rng) { return spec_from_index(rng.uniform_int(0, kSpecCount - 1)); }

std::string to_string(LesionShape v) {
    switch (v) {
        case LesionShape::Flat: return "flat";
        case LesionShape::Sessile: return "sessile";
        case LesionShape::Pedunculated: return "pedunculated";
    }
    return "?";
}
std::string to_string(LesionSurface v) {
    return v == LesionSurface::Smooth ? "smooth" : "irregular";
}
std::string to_string(LesionSize v) { return v == LesionSize::Small ? "small" : "large"; }
std::string to_string(LesionProminence v) {
    return v == LesionProminence::Subtle ? "subtle" : "conspicuous";
}

namespace {
[[noreturn]] void bad_attr(const std::string& kind, const std::string& s) {
    throw std::invalid_argument("unknown " + kind + " attribute: '" + s + "'");
}
}  // namespace

LesionShape parse_shape(const std::string& s) {
    if (s == "flat") return LesionShape::Flat;
    if (s == "sessile") return LesionShape::Sessile;
    if (s == "pedunculated") return LesionShape::Pedunculated;
    bad_attr("shape", s);
}
LesionSurface parse_surface(const std::string& s) {
    if (s == "smooth") return LesionSurface::Smooth;
    if (s == "irregular") return LesionSurface::Irregular;
    bad_attr("surface", s);
}
LesionSize parse_size(const std::string& s) {
    if (s == "small") return LesionSize::Small;
    if (s == "large") return LesionSize::Large;
    bad_attr("size", s);
}
LesionProminence parse_prominence(const std::string& s) {
    if (s == "subtle") return LesionProminence::Subtle;
    if (s == "conspicuous") return LesionProminence::Conspicuous;
    bad_attr("prominence", s);
}

void size_fraction_range(LesionSize size, double& lo, double& hi) {
    if (size == LesionSize::Small) {
        lo = 0.030;
        hi = 0.055;
    } else {
        lo = 0.075;
        hi = 0.120;
    }
}

std::vector<float> generate_normal(Rng& rng, int size) {
    if (size < 16) throw std::invalid_argument("generate_normal: size must be >= 16");
    const auto f1 = value_noise(rng, size, std::max(2, size / 8));
    const auto f2 = value_noise(rng, size, std::max(3, size / 4));
    const auto f3 = value_noise(rng, size, std::max(4, size / 2));
    const auto cc = value_noise(rng, size, std::max(3, size / 4));
    const auto cb = value_noise(rng, size, std::max(3, size / 4));

    // Brightness carries the texture; the hue stays in a tight pink band.
    // Red and green share their small chroma wobble so the red-minus-green
    // field of healthy tissue is nearly constant, and blue never rises above
    // green, keeping both probe channels quiet on normals.
    std::vector<float> out((size_t)size * size * 3);
    for (size_t i = 0; i < (size_t)size * size; ++i) {
        const float f = (f1[i] + 0.5f * f2[i] + 0.25f * f3[i]) / 1.75f;
        out[i * 3 + 0] = std::clamp(0.58f + 0.11f * f + 0.025f * cc[i], 0.02f, 0.98f);
        out[i * 3 + 1] = std::clamp(0.34f + 0.11f * f + 0.020f * cc[i], 0.02f, 0.98f);
        out[i * 3 + 2] = std::clamp(0.40f + 0.11f * f + 0.020f * cb[i], 0.02f, 0.98f);
    }
    return out;
}

std::vector<float> sample_mask(Rng& rng, double lo_frac, double hi_frac, int size) {
    if (!(lo_frac > 0.0) || !(hi_frac <= 0.25) || lo_frac > hi_frac) {
        throw std::invalid_argument("sample_mask: bounds must satisfy 0 < lo <= hi <= 0.25");
    }
    const double frac = lo_frac < hi_frac ? rng.uniform(lo_frac, hi_frac) : lo_frac;
    const double target = frac * size * size;
    const double s = std::sqrt(target / kPi);

    double rho = rng.uniform(0.55, 1.0);  // minor/major axis ratio
    double major = s / std::sqrt(rho);
    // Keep the whole ellipse at least 2 px away from the border.
    while (2.0 * (major + 3.0) > size - 2 && rho < 0.999) {
        rho = std::min(1.0, rho + 0.1);
        major = s / std::sqrt(rho);
    }
    if (2.0 * (major + 3.0) > size) {
        throw std::invalid_argument("sample_mask: image too small for the requested lesion");
    }
    const double margin = major + 3.0;
    const double phi = rng.uniform(0.0, kPi);
    const double cx = rng.uniform(margin, size - margin);
    const double cy = rng.uniform(margin, size - margin);
    const double cphi = std::cos(phi), sphi = std::sin(phi);
    const double a = s / std::sqrt(rho), b = s * std::sqrt(rho);

    auto count_at = [&](double t, std::vector<float>* out) {
        int64_t count = 0;
        if (out) out->assign((size_t)size * size, 0.0f);
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                const double dx = (x + 0.5) - cx;
                const double dy = (y + 0.5) - cy;
                const double u = (dx * cphi + dy * sphi) / a;
                const double v = (-dx * sphi + dy * cphi) / b;
                if (u * u + v * v <= t * t) {
                    ++count;
                    if (out) (*out)[(size_t)y * size + x] = 1.0f;
                }
            }
        }
        return count;
    };

    // The rasterized pixel count is monotone in the scale factor; a short
    // bisection pins it near the analytic target.
    double tl = 0.80, th = 1.25;
    for (int it = 0; it < 24; ++it) {
        const double tm = 0.5 * (tl + th);
        if (count_at(tm, nullptr) < static_cast<int64_t>(std::llround(target))) {
            tl = tm;
        } else {
            th = tm;
        }
    }
    std::vector<float> mask;
    count_at(th, &mask);
    return mask;
}

std::vector<float> sample_mask(Rng& rng, const LesionSpec& spec, int size) {
    double lo, hi;
    size_fraction_range(spec.size, lo, hi);
    return sample_mask(rng, lo, hi, size);
}

std::vector<float> interior_depth(const std::vector<float>& mask, int size) {
    constexpr float kInf = 1e9f;
    constexpr float kOrth = 1.0f, kDiag = 1.41421356f;
    std::vector<float> d((size_t)size * size);
    bool any_zero = false, any_one = false;
    for (size_t i = 0; i < d.size(); ++i) {
        const bool inside = mask[i] > 0.5f;
        d[i] = inside ? kInf : 0.0f;
        any_zero |= !inside;
        any_one |= inside;
    }
    if (!any_one) return d;  // depth identically zero
    if (!any_zero) {
        // No exterior: measure from the border instead.
        for (int x = 0; x < size; ++x) d[(size_t)x] = d[(size_t)(size - 1) * size + x] = kOrth;
        for (int y = 0; y < size; ++y) d[(size_t)y * size] = d[(size_t)y * size + size - 1] = kOrth;
    }

    auto at = [&](int y, int x) -> float& { return d[(size_t)y * size + x]; };
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            float v = at(y, x);
            if (x > 0) v = std::min(v, at(y, x - 1) + kOrth);
            if (y > 0) v = std::min(v, at(y - 1, x) + kOrth);
            if (y > 0 && x > 0) v = std::min(v, at(y - 1, x - 1) + kDiag);
            if (y > 0 && x < size - 1) v = std::min(v, at(y - 1, x + 1) + kDiag);
            at(y, x) = v;
        }
    }
    float dmax = 0.0f;
    for (int y = size - 1; y >= 0; --y) {
        for (int x = size - 1; x >= 0; --x) {
            float v = at(y, x);
            if (x < size - 1) v = std::min(v, at(y, x + 1) + kOrth);
            if (y < size - 1) v = std::min(v, at(y + 1, x) + kOrth);
            if (y < size - 1 && x < size - 1) v = std::min(v, at(y + 1, x + 1) + kDiag);
            if (y < size - 1 && x > 0) v = std::min(v, at(y + 1, x - 1) + kDiag);
            at(y, x) = v;
            dmax = std::max(dmax, v);
        }
    }
    if (dmax > 0.0f) {
        for (auto& v : d) v /= dmax;
    }
    return d;
}

std::vector<float> render_abnormality(const std::vector<float>& normal,
                                      const std::vector<float>& mask, int size,
                                      const LesionSpec& spec, Rng& rng) {
    if (normal.size() != (size_t)size * size * 3 || mask.size() != (size_t)size * size) {
        throw std::invalid_argument("render_abnormality: buffer sizes do not match");
    }
    const std::vector<float> dn = interior_depth(mask, size);
    const float amp = shape_amplitude(spec.shape) * prominence_factor(spec.prominence);
    const int head_sign = rng.uniform() < 0.5 ? -1 : 1;
    const std::vector<float> relief = height_template(spec.shape, mask, dn, size, head_sign);

    // Per-pixel speckle noise for the irregular surface, kept away from the
    // footprint boundary and gated on lesion visibility so texture never
    // appears on a part of the footprint where the lesion itself is absent.
    std::vector<float> noise;
    if (spec.surface == LesionSurface::Irregular) {
        noise.resize((size_t)size * size);
        for (auto& v : noise) v = rng.uniform_f(-1.0f, 1.0f);
    }

    std::vector<float> out = normal;
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const size_t i = (size_t)y * size + x;
            if (mask[i] <= 0.5f) continue;
            const float w = amp * relief[i];
            const float mix = std::clamp(kMixScale * w, 0.0f, 1.0f);
            out[i * 3 + 0] += (kLesionR - out[i * 3 + 0]) * mix;
            out[i * 3 + 1] += (kLesionG - out[i * 3 + 1]) * mix;
            out[i * 3 + 2] += (kLesionB - out[i * 3 + 2]) * mix;
            if (!noise.empty()) {
                const float band = smooth01(dn[i] / 0.25f);
                const float gate = smooth01(w / 0.08f);
                const float wt =
                    std::clamp(kTexAmp * band * std::max(noise[i], 0.0f) * gate, 0.0f, 1.0f);
                out[i * 3 + 2] += (0.02f - out[i * 3 + 2]) * wt;
            }
        }
    }
    return out;
}

ProbeMeasurements probe_measure(const std::vector<float>& image, const std::vector<float>& mask,
                                int size) {
    if (image.size() != (size_t)size * size * 3 || mask.size() != (size_t)size * size) {
        throw std::invalid_argument("probe_measure: buffer sizes do not match");
    }
    const std::vector<float> dn = interior_depth(mask, size);

    // Shape/prominence field: red minus green. The speckle tint is neutral
    // in this channel pair, so only the lesion body registers.
    std::vector<float> phi((size_t)size * size);
    for (size_t i = 0; i < phi.size(); ++i) {
        phi[i] = image[i * 3 + 0] - image[i * 3 + 1];
    }

    // Baseline level from a ring just outside the footprint (within 3 px).
    std::vector<unsigned char> ring_px(mask.size(), 0);
    double ring_sum = 0.0;
    int64_t ring_n = 0;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const size_t i = (size_t)y * size + x;
            if (mask[i] > 0.5f) continue;
            bool near = false;
            for (int oy = -3; oy <= 3 && !near; ++oy)
                for (int ox = -3; ox <= 3 && !near; ++ox) {
                    const int ny = y + oy, nx = x + ox;
                    if (ny < 0 || ny >= size || nx < 0 || nx >= size) continue;
                    near = mask[(size_t)ny * size + nx] > 0.5f;
                }
            if (near) {
                ring_px[i] = 1;
                ring_sum += phi[i];
                ++ring_n;
            }
        }
    const double ring = ring_n > 0 ? ring_sum / ring_n : 0.24;

    double area = 0.0;
    for (float v : mask) area += v > 0.5f ? 1.0 : 0.0;

    ProbeMeasurements m{};
    const double tint_gap = std::max((kLesionR - kLesionG) - ring, 1e-9);

    // Stalk presence: the head-plus-stalk layout piles its mass at one end
    // of the footprint, so the centroid of the baseline-corrected height
    // field sits well away from the footprint centroid. Radially symmetric
    // reliefs keep the two centroids together. Heights below a third of the
    // near-peak level are ignored so that background tint noise and the low
    // stalk skirt do not wash the offset out.
    std::vector<double> hs;
    hs.reserve((size_t)area);
    for (size_t i = 0; i < mask.size(); ++i) {
        if (mask[i] > 0.5f) hs.push_back((double)phi[i] - ring);
    }
    double h_p90 = 0.0;
    if (!hs.empty()) {
        std::vector<double> sorted = hs;
        std::sort(sorted.begin(), sorted.end());
        h_p90 = sorted[sorted.size() * 9 / 10];
    }
    const double h_floor = 0.35 * std::max(h_p90, 0.0);
    double fx = 0.0, fy = 0.0;            // footprint centroid accumulators
    double wx = 0.0, wy = 0.0, wn = 0.0;  // height-weighted accumulators
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const size_t i = (size_t)y * size + x;
            if (mask[i] <= 0.5f) continue;
            fx += x;
            fy += y;
            const double h = std::max((double)phi[i] - ring - h_floor, 0.0);
            wx += h * x;
            wy += h * y;
            wn += h;
        }
    if (area > 0.0 && wn > 0.0) {
        const double radius = std::sqrt(area / kPi);
        m.stalk_offset =
            std::hypot(wx / wn - fx / area, wy / wn - fy / area) / std::max(radius, 1e-9);
    }

    // Boundary-band height fraction: how much of the interior height is
    // already attained right next to the boundary. A plateau with a thin
    // rise band scores near one, a dome that tapers to zero slope at the
    // boundary scores near zero. (This integrates the boundary gradient:
    // band height equals the gradient accumulated across the band.) The
    // band is the ring of footprint pixels touching the exterior, so it
    // exists at every footprint size.
    auto in_band = [&](int y, int x) {
        if (mask[(size_t)y * size + x] <= 0.5f) return false;
        if (dn[(size_t)y * size + x] <= 0.35f) return true;
        for (int oy = -1; oy <= 1; ++oy)
            for (int ox = -1; ox <= 1; ++ox) {
                const int ny = y + oy, nx = x + ox;
                if (ny < 0 || ny >= size || nx < 0 || nx >= size) return true;
                if (mask[(size_t)ny * size + nx] <= 0.5f) return true;
            }
        return false;
    };
    double outer_sum = 0.0, inner_sum = 0.0;
    int64_t outer_n = 0, inner_n = 0;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const size_t i = (size_t)y * size + x;
            if (mask[i] <= 0.5f) continue;
            const double h = (double)phi[i] - ring;
            if (in_band(y, x)) {
                outer_sum += h;
                ++outer_n;
            }
            if (dn[i] >= 0.65f) {
                inner_sum += h;
                ++inner_n;
            }
        }
    const double inner_mean = inner_n > 0 ? inner_sum / inner_n : 0.0;
    const double outer_mean = outer_n > 0 ? outer_sum / outer_n : 0.0;
    m.edge_ratio = outer_mean / std::max(inner_mean, 1e-9);

    // Literal boundary-band gradient energy on luminance: mean gradient
    // magnitude over the band of footprint pixels nearest the boundary.
    // Speckled surfaces raise it; the smooth tint keeps it low.
    double grad_sum = 0.0;
    int64_t grad_n = 0;
    auto lum = [&](int y, int x) {
        const size_t j = ((size_t)y * size + x) * 3;
        return ((double)image[j] + image[j + 1] + image[j + 2]) / 3.0;
    };
    for (int y = 1; y + 1 < size; ++y)
        for (int x = 1; x + 1 < size; ++x) {
            const size_t i = (size_t)y * size + x;
            if (mask[i] <= 0.5f || !in_band(y, x)) continue;
            const double gx = 0.5 * (lum(y, x + 1) - lum(y, x - 1));
            const double gy = 0.5 * (lum(y + 1, x) - lum(y - 1, x));
            grad_sum += std::hypot(gx, gy);
            ++grad_n;
        }
    m.boundary_grad = grad_n > 0 ? grad_sum / grad_n : 0.0;

    // Prominence: least-squares amplitude of the classified shape's height
    // template against the observed height field (for the stalk layout the
    // better of the two head ends is kept), relative to a conspicuous
    // render. The template is rebuilt from the mask, so no fitting over
    // competing shapes is involved.
    const bool stalk = m.stalk_offset > kStalkOffsetThresh;
    const bool plateau = m.edge_ratio > kEdgeRatioThresh;
    const LesionShape best_shape = stalk ? LesionShape::Pedunculated
                                   : plateau ? LesionShape::Flat
                                             : LesionShape::Sessile;
    double alpha = 0.0;
    for (const int sgn : {-1, 1}) {
        const std::vector<float> tmpl = height_template(best_shape, mask, dn, size, sgn);
        double num = 0.0, den = 0.0;
        for (size_t i = 0; i < mask.size(); ++i) {
            if (mask[i] <= 0.5f) continue;
            num += ((double)phi[i] - ring) * tmpl[i];
            den += (double)tmpl[i] * tmpl[i];
        }
        alpha = std::max(alpha, den > 0.0 ? num / den : 0.0);
        if (best_shape != LesionShape::Pedunculated) break;  // ends coincide
    }
    m.amp_estimate =
        alpha / (tint_gap * (double)kMixScale * (double)shape_amplitude(best_shape));

    // Speckle detector: green minus blue is strictly negative for both the
    // background and the lesion tint, positive only where speckle has drawn
    // the blue channel down.
    int64_t tex_n = 0;
    for (size_t i = 0; i < mask.size(); ++i) {
        if (mask[i] <= 0.5f) continue;
        if (image[i * 3 + 1] - image[i * 3 + 2] > 0.0f) ++tex_n;
    }
    m.texture_fraction = area > 0.0 ? (double)tex_n / area : 0.0;
    m.area_fraction = area / ((double)size * size);
    return m;
}

LesionSpec probe_classify(const std::vector<float>& image, const std::vector<float>& mask,
                          int size) {
    const ProbeMeasurements m = probe_measure(image, mask, size);
    LesionSpec spec;
    spec.shape = m.stalk_offset > kStalkOffsetThresh ? LesionShape::Pedunculated
                 : m.edge_ratio > kEdgeRatioThresh   ? LesionShape::Flat
                                                     : LesionShape::Sessile;
    spec.prominence =
        m.amp_estimate > 0.775 ? LesionProminence::Conspicuous : LesionProminence::Subtle;
    spec.surface =
        m.texture_fraction > 0.020 ? LesionSurface::Irregular : LesionSurface::Smooth;
    spec.size = m.area_fraction < 0.065 ? LesionSize::Small : LesionSize::Large;
    return spec;
}

}  // namespace synthval::toy
