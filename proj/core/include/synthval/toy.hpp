#pragma once

#include <string>
#include <vector>

#include "synthval/rng.hpp"

namespace synthval::toy {

/// Attribute grid of the procedural lesion domain. Every combination is
/// renderable by the oracle and recoverable by the fixed probe.
enum class LesionShape { Flat, Sessile, Pedunculated };
enum class LesionSurface { Smooth, Irregular };
enum class LesionSize { Small, Large };
enum class LesionProminence { Subtle, Conspicuous };

struct LesionSpec {
    LesionShape shape = LesionShape::Sessile;
    LesionSurface surface = LesionSurface::Smooth;
    LesionSize size = LesionSize::Small;
    LesionProminence prominence = LesionProminence::Conspicuous;
    bool operator==(const LesionSpec&) const = default;
};

constexpr int kSpecCount = 24;
LesionSpec spec_from_index(int i);
int spec_index(const LesionSpec& spec);
LesionSpec random_spec(Rng& rng);

std::string to_string(LesionShape v);
std::string to_string(LesionSurface v);
std::string to_string(LesionSize v);
std::string to_string(LesionProminence v);
LesionShape parse_shape(const std::string& s);
LesionSurface parse_surface(const std::string& s);
LesionSize parse_size(const std::string& s);
LesionProminence parse_prominence(const std::string& s);

/// Mask area as a fraction of the image, per size bin. The bins do not
/// touch, so the size attribute is recoverable from the mask alone.
void size_fraction_range(LesionSize size, double& lo, double& hi);

/// Background tissue: multi-octave value noise in a pink hue band,
/// [size,size,3] floats in [0,1].
std::vector<float> generate_normal(Rng& rng, int size);

/// Elliptical footprint with area in [lo_frac, hi_frac] of the image, clear
/// of the image border; [size,size] floats in {0,1}. Throws on bounds that
/// no in-border ellipse can satisfy.
std::vector<float> sample_mask(Rng& rng, double lo_frac, double hi_frac, int size);

/// Convenience overload drawing the bounds from the spec's size bin.
std::vector<float> sample_mask(Rng& rng, const LesionSpec& spec, int size);

/// Normalized interior depth: 0 outside and at the boundary, 1 at the
/// deepest interior point. Chamfer distance, deterministic.
std::vector<float> interior_depth(const std::vector<float>& mask, int size);

/// Oracle renderer: composites a lesion into `normal`, modifying pixels
/// strictly inside `mask`. The profile, tint and texture are fixed
/// functions of the spec, so rendered attributes are ground truth.
std::vector<float> render_abnormality(const std::vector<float>& normal,
                                      const std::vector<float>& mask, int size,
                                      const LesionSpec& spec, Rng& rng);

/// Raw discriminants behind the probe, exposed so tests can audit margins.
struct ProbeMeasurements {
    double stalk_offset;     // lesion-mass centroid offset / footprint radius
    double edge_ratio;       // boundary-band height over interior height
    double boundary_grad;    // mean luminance gradient magnitude, boundary band
    double amp_estimate;     // prominence scale relative to a conspicuous render
    double texture_fraction; // share of footprint pixels carrying the speckle tint
    double area_fraction;    // footprint pixels / image pixels
};

ProbeMeasurements probe_measure(const std::vector<float>& image, const std::vector<float>& mask,
                                int size);

/// Fixed, non-learned attribute recovery from an image + footprint. Used to
/// audit renders and generated samples; no trained weights involved.
LesionSpec probe_classify(const std::vector<float>& image, const std::vector<float>& mask,
                          int size);

}  // namespace synthval::toy
