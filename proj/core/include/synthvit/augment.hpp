#pragma once

#include "synthvit/rng.hpp"
#include "synthvit/tensor.hpp"

namespace synthvit {

struct AugmentSpec {
    /// Rotation angle drawn from [-rotation_degrees, +rotation_degrees].
    double rotation_degrees = 20.0;
    /// Brightness factor drawn from [lo, hi]; output is clamped to [0,1].
    double brightness_lo = 0.8;
    double brightness_hi = 1.2;

    void validate() const;
    bool is_identity() const;
};

/// Rotate [H,W,C] about its center. Positive angles turn the image
/// clockwise (rows rendered top-down): output (r,c) samples the input at
///   col = cos(a)*(c-cx) + sin(a)*(r-cy) + cx
///   row = -sin(a)*(c-cx) + cos(a)*(r-cy) + cy
/// with bilinear interpolation and coordinates reflected at the borders.
/// Exact multiples of 90 degrees use exact sines/cosines, so they reduce to
/// pure index permutations.
Tensor rotate_bilinear(const Tensor& image, double degrees);

Tensor adjust_brightness(const Tensor& image, double factor);

/// One rotation draw followed by one brightness draw from `rng`, then
/// rotate_bilinear + adjust_brightness + clamp. Collapsed ranges (0 degrees,
/// factor 1) reproduce the input exactly.
Tensor augment(const Tensor& image, const AugmentSpec& spec, Rng& rng);

}  // namespace synthvit
