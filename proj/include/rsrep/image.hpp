#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "rsrep/tensor.hpp"

namespace rsrep {

/// 8-bit-range RGB image stored as HWC floats in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int h, int w, float fill = 0.0f)
      : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, fill) {}

  float& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  float at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  bool operator==(const Image&) const = default;
};

/// Decodes any format OpenCV understands (PNG, JPEG, TIFF, ...) to RGB.
Image decode_image(const std::filesystem::path& path);
/// Writes a PNG, quantizing to 8 bits.
void write_png(const std::filesystem::path& path, const Image& img);

/// Separable bilinear resampling. With antialiasing the triangle filter is
/// widened by the downscale factor, so shrinking averages every source pixel.
Image resize_bilinear(const Image& img, int out_h, int out_w, bool antialias = true);
Image crop(const Image& img, int top, int left, int h, int w);
Image center_crop(const Image& img, int size);
Image flip_horizontal(const Image& img);
Image flip_vertical(const Image& img);
/// Counter-clockwise rotation by quarter_turns * 90 degrees.
Image rotate_quarter_turns(const Image& img, int quarter_turns);

Image adjust_brightness(const Image& img, double factor);
Image adjust_contrast(const Image& img, double factor);
Image adjust_saturation(const Image& img, double factor);
/// Shifts hue by `shift` of a full turn, shift in [-0.5, 0.5].
Image adjust_hue(const Image& img, double shift);
/// ITU-R 601 luma replicated into all three channels.
Image to_grayscale(const Image& img);
Image gaussian_blur(const Image& img, double sigma);

struct Normalization {
  std::array<double, 3> mean{0.485, 0.456, 0.406};
  std::array<double, 3> std{0.229, 0.224, 0.225};
  bool operator==(const Normalization&) const = default;
};

/// CHW tensor of (x - mean) / std. A zero std is replaced by 1 (with a
/// warning on stderr).
Tensor to_tensor(const Image& img, const Normalization& norm);

}  // namespace rsrep
