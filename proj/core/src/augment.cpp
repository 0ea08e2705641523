#include "synthvit/augment.hpp"

#include <algorithm>
#include <cmath>

#include "synthvit/errors.hpp"

namespace synthvit {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Fold a sample coordinate back into [0, n-1] by mirroring at the borders.
double reflect_coord(double x, std::size_t n) {
    const double n1 = static_cast<double>(n - 1);
    if (n1 == 0.0) return 0.0;
    const double period = 2.0 * n1;
    x = std::fmod(x, period);
    if (x < 0.0) x += period;
    return x > n1 ? period - x : x;
}

}  // namespace

void AugmentSpec::validate() const {
    if (rotation_degrees < 0.0) {
        throw ParameterError("augment: rotation_degrees must be >= 0, got " +
                             std::to_string(rotation_degrees));
    }
    if (brightness_lo < 0.0 || brightness_hi < brightness_lo) {
        throw ParameterError("augment: brightness range [" + std::to_string(brightness_lo) + ", " +
                             std::to_string(brightness_hi) + "] is invalid");
    }
}

bool AugmentSpec::is_identity() const {
    return rotation_degrees == 0.0 && brightness_lo == 1.0 && brightness_hi == 1.0;
}

Tensor rotate_bilinear(const Tensor& image, double degrees) {
    const auto& s = image.shape();
    if (s.size() != 3) throw DimensionError("rotate: expects [H,W,C], got " + shape_str(s));
    const std::size_t h = s[0], w = s[1], c = s[2];

    double cos_a;
    double sin_a;
    if (std::fmod(degrees, 90.0) == 0.0) {
        // Exact quarter turns avoid 1-ulp trig noise so that the sampling
        // grid lands exactly on pixel centers.
        const long long quarters = ((static_cast<long long>(degrees / 90.0) % 4) + 4) % 4;
        static constexpr double kCos[4] = {1.0, 0.0, -1.0, 0.0};
        static constexpr double kSin[4] = {0.0, 1.0, 0.0, -1.0};
        cos_a = kCos[quarters];
        sin_a = kSin[quarters];
    } else {
        const double rad = degrees * kPi / 180.0;
        cos_a = std::cos(rad);
        sin_a = std::sin(rad);
    }
    if (cos_a == 1.0 && sin_a == 0.0) return image;

    const double cy = static_cast<double>(h - 1) / 2.0;
    const double cx = static_cast<double>(w - 1) / 2.0;
    Tensor out(s);
    double* od = out.data();
    const double* id = image.data();
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t col = 0; col < w; ++col) {
            const double u = static_cast<double>(col) - cx;
            const double v = static_cast<double>(r) - cy;
            const double src_x = reflect_coord(cos_a * u + sin_a * v + cx, w);
            const double src_y = reflect_coord(-sin_a * u + cos_a * v + cy, h);
            const std::size_t x0 = static_cast<std::size_t>(src_x);
            const std::size_t y0 = static_cast<std::size_t>(src_y);
            const std::size_t x1 = std::min(x0 + 1, w - 1);
            const std::size_t y1 = std::min(y0 + 1, h - 1);
            const double wx = src_x - static_cast<double>(x0);
            const double wy = src_y - static_cast<double>(y0);
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double v00 = id[(y0 * w + x0) * c + ch];
                const double v01 = id[(y0 * w + x1) * c + ch];
                const double v10 = id[(y1 * w + x0) * c + ch];
                const double v11 = id[(y1 * w + x1) * c + ch];
                const double top = v00 + (v01 - v00) * wx;
                const double bot = v10 + (v11 - v10) * wx;
                od[(r * w + col) * c + ch] = top + (bot - top) * wy;
            }
        }
    }
    return out;
}

Tensor adjust_brightness(const Tensor& image, double factor) {
    if (factor < 0.0) throw ParameterError("brightness factor must be >= 0");
    if (factor == 1.0) return image;
    Tensor out(image.shape());
    const double* id = image.data();
    double* od = out.data();
    for (std::size_t i = 0; i < out.numel(); ++i) {
        od[i] = std::clamp(id[i] * factor, 0.0, 1.0);
    }
    return out;
}

Tensor augment(const Tensor& image, const AugmentSpec& spec, Rng& rng) {
    spec.validate();
    const double angle = rng.uniform(-spec.rotation_degrees, spec.rotation_degrees);
    const double factor = rng.uniform(spec.brightness_lo, spec.brightness_hi);
    return adjust_brightness(rotate_bilinear(image, angle), factor);
}

}  // namespace synthvit
