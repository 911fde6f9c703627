#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "liclab/tensor.hpp"

namespace liclab {

// Images move through the lab as [3, H, W] float tensors on [0, 1];
// byte <-> float mapping is v = b / 255 and b = round(clamp(v) * 255).

std::vector<std::uint8_t> encode_ppm(const Tensor& img);  // P6, 8-bit
Tensor decode_ppm(const std::vector<std::uint8_t>& bytes);
void write_ppm(const std::string& path, const Tensor& img);
Tensor read_ppm(const std::string& path);

// P5 grayscale export for spectra and channel reconstructions; img is [H, W]
// already mapped to [0, 1].
std::vector<std::uint8_t> encode_pgm(const Tensor& img);
void write_pgm(const std::string& path, const Tensor& img);

// Edge-replicate padding up to multiples of 16, batched as [1, 3, Hp, Wp].
Tensor pad_to_grid(const Tensor& img);
// Top-left crop of a [1, 3, H, W] reconstruction back to [3, h, w].
Tensor crop_image(const Tensor& batch, int h, int w);

std::uint8_t pixel_byte(float v);

}  // namespace liclab
