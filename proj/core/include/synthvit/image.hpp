#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "synthvit/tensor.hpp"

namespace synthvit {

/// Decode an 8-bit PNG into [H,W,3] with values p/255 in [0,1]. Grayscale
/// and paletted files are expanded to RGB; 16-bit files are rejected.
/// Undecodable input raises ImageFormatError naming the path.
Tensor read_png(const std::string& path);

/// Encode [H,W,C] (C = 1 or 3) values in [0,1] as an 8-bit PNG; each value
/// is mapped by round(v * 255) after clamping. Fixed encoder settings keep
/// the output bytes a pure function of the pixels.
void write_png(const std::string& path, const Tensor& image);

/// Bilinear resample [H,W,C] to [size,size,C] using half-pixel sample
/// centers (src = (dst + 0.5) * scale - 0.5) with clamp-to-edge.
Tensor resize_bilinear(const Tensor& image, std::size_t size);

/// read_png followed by resize_bilinear when the source is not already
/// square with the target size.
Tensor load_image(const std::string& path, std::size_t target_size);

/// [0,1] classifier range -> [-1,1] diffusion range and back.
Tensor to_diffusion_range(const Tensor& image);
Tensor from_diffusion_range(const Tensor& image);

}  // namespace synthvit
