#include "rsrep/image.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "rsrep/errors.hpp"

namespace rsrep {
namespace {

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

struct AxisWeights {
  std::vector<int> first;
  std::vector<std::vector<double>> weights;
};

// Per-output-pixel source window and normalized triangle-filter weights.
AxisWeights axis_weights(int in, int out, bool antialias) {
  const double scale = static_cast<double>(in) / out;
  const double filter_scale = antialias ? std::max(scale, 1.0) : 1.0;
  const double support = filter_scale;
  AxisWeights aw;
  aw.first.resize(out);
  aw.weights.resize(out);
  for (int o = 0; o < out; ++o) {
    const double center = (o + 0.5) * scale;
    int lo = std::max(static_cast<int>(std::floor(center - support + 0.5)), 0);
    int hi = std::min(static_cast<int>(std::floor(center + support + 0.5)), in);
    std::vector<double> w;
    double total = 0.0;
    for (int i = lo; i < hi; ++i) {
      const double t = std::abs((i + 0.5 - center) / filter_scale);
      const double k = std::max(0.0, 1.0 - t);
      w.push_back(k);
      total += k;
    }
    if (total <= 0.0) {
      // Degenerate window: nearest source pixel.
      lo = std::clamp(static_cast<int>(center), 0, in - 1);
      w.assign(1, 1.0);
      total = 1.0;
    }
    for (double& k : w) k /= total;
    aw.first[o] = lo;
    aw.weights[o] = std::move(w);
  }
  return aw;
}

Image blend(const Image& img, const Image& other, double factor) {
  Image out(img.height, img.width);
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    out.pixels[i] = clamp01(factor * img.pixels[i] + (1.0 - factor) * other.pixels[i]);
  return out;
}

double luma(float r, float g, float b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

}  // namespace

Image decode_image(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw IoError("cannot decode image " + path.string());
  Image img(bgr.rows, bgr.cols);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = row[x][2 - c] / 255.0f;
  }
  return img;
}

void write_png(const std::filesystem::path& path, const Image& img) {
  cv::Mat bgr(img.height, img.width, CV_8UC3);
  for (int y = 0; y < img.height; ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        row[x][2 - c] = static_cast<unsigned char>(std::lround(clamp01(img.at(y, x, c)) * 255.0));
  }
  if (!cv::imwrite(path.string(), bgr)) throw IoError("cannot write " + path.string());
}

Image resize_bilinear(const Image& img, int out_h, int out_w, bool antialias) {
  if (img.height <= 0 || img.width <= 0 || out_h <= 0 || out_w <= 0) {
    throw DimensionError("resize: empty image or target");
  }
  if (out_h == img.height && out_w == img.width) return img;
  const AxisWeights wx = axis_weights(img.width, out_w, antialias);
  const AxisWeights wy = axis_weights(img.height, out_h, antialias);

  std::vector<double> horiz(static_cast<std::size_t>(img.height) * out_w * 3);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < out_w; ++x)
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        const auto& w = wx.weights[x];
        for (std::size_t k = 0; k < w.size(); ++k) acc += w[k] * img.at(y, wx.first[x] + int(k), c);
        horiz[(static_cast<std::size_t>(y) * out_w + x) * 3 + c] = acc;
      }
  Image out(out_h, out_w);
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x)
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        const auto& w = wy.weights[y];
        for (std::size_t k = 0; k < w.size(); ++k)
          acc += w[k] * horiz[(static_cast<std::size_t>(wy.first[y] + int(k)) * out_w + x) * 3 + c];
        out.at(y, x, c) = clamp01(acc);
      }
  return out;
}

Image crop(const Image& img, int top, int left, int h, int w) {
  if (top < 0 || left < 0 || h <= 0 || w <= 0 || top + h > img.height || left + w > img.width) {
    throw DimensionError("crop window outside the image");
  }
  Image out(h, w);
  for (int y = 0; y < h; ++y)
    std::copy_n(&img.pixels[(static_cast<std::size_t>(top + y) * img.width + left) * 3], w * 3,
                &out.pixels[static_cast<std::size_t>(y) * w * 3]);
  return out;
}

Image center_crop(const Image& img, int size) {
  if (size > img.height || size > img.width) {
    throw DimensionError("center crop of " + std::to_string(size) + " exceeds image " +
                         std::to_string(img.height) + "x" + std::to_string(img.width));
  }
  // Rounded like torchvision: offsets of (H - size) / 2.
  const int top = static_cast<int>(std::lround((img.height - size) / 2.0));
  const int left = static_cast<int>(std::lround((img.width - size) / 2.0));
  return crop(img, top, left, size, size);
}

Image flip_horizontal(const Image& img) {
  Image out(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
  return out;
}

Image flip_vertical(const Image& img) {
  Image out(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(img.height - 1 - y, x, c);
  return out;
}

Image rotate_quarter_turns(const Image& img, int quarter_turns) {
  const int k = ((quarter_turns % 4) + 4) % 4;
  if (k == 0) return img;
  if (k == 2) return flip_vertical(flip_horizontal(img));
  Image out(img.width, img.height);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int c = 0; c < 3; ++c) {
        // k == 1: counter-clockwise; k == 3: clockwise.
        out.at(y, x, c) = k == 1 ? img.at(x, img.width - 1 - y, c) : img.at(img.height - 1 - x, y, c);
      }
  return out;
}

Image adjust_brightness(const Image& img, double factor) {
  return blend(img, Image(img.height, img.width, 0.0f), factor);
}

Image adjust_contrast(const Image& img, double factor) {
  double mean = 0.0;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) mean += luma(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2));
  mean /= static_cast<double>(img.height) * img.width;
  return blend(img, Image(img.height, img.width, static_cast<float>(mean)), factor);
}

Image adjust_saturation(const Image& img, double factor) { return blend(img, to_grayscale(img), factor); }

Image adjust_hue(const Image& img, double shift) {
  if (shift < -0.5 || shift > 0.5) throw ConfigError("hue shift must lie in [-0.5, 0.5]");
  Image out(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const double r = img.at(y, x, 0), g = img.at(y, x, 1), b = img.at(y, x, 2);
      const double maxc = std::max({r, g, b}), minc = std::min({r, g, b});
      const double v = maxc, delta = maxc - minc;
      const double s = maxc > 0.0 ? delta / maxc : 0.0;
      double h = 0.0;
      if (delta > 0.0) {
        if (maxc == r) h = (g - b) / delta;
        else if (maxc == g) h = 2.0 + (b - r) / delta;
        else h = 4.0 + (r - g) / delta;
        h /= 6.0;
      }
      h = h + shift;
      h -= std::floor(h);
      const double h6 = h * 6.0;
      const int sector = static_cast<int>(h6) % 6;
      const double f = h6 - std::floor(h6);
      const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
      double rgb[3];
      switch (sector) {
        case 0: rgb[0] = v, rgb[1] = t, rgb[2] = p; break;
        case 1: rgb[0] = q, rgb[1] = v, rgb[2] = p; break;
        case 2: rgb[0] = p, rgb[1] = v, rgb[2] = t; break;
        case 3: rgb[0] = p, rgb[1] = q, rgb[2] = v; break;
        case 4: rgb[0] = t, rgb[1] = p, rgb[2] = v; break;
        default: rgb[0] = v, rgb[1] = p, rgb[2] = q; break;
      }
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = clamp01(rgb[c]);
    }
  return out;
}

Image to_grayscale(const Image& img) {
  Image out(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const float l = clamp01(luma(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2)));
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = l;
    }
  return out;
}

Image gaussian_blur(const Image& img, double sigma) {
  if (sigma <= 0.0) return img;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    total += kernel[i + radius];
  }
  for (double& k : kernel) k /= total;

  auto pass = [&](const Image& src, bool horizontal) {
    Image dst(src.height, src.width);
    for (int y = 0; y < src.height; ++y)
      for (int x = 0; x < src.width; ++x)
        for (int c = 0; c < 3; ++c) {
          double acc = 0.0;
          for (int i = -radius; i <= radius; ++i) {
            const int yy = horizontal ? y : std::clamp(y + i, 0, src.height - 1);
            const int xx = horizontal ? std::clamp(x + i, 0, src.width - 1) : x;
            acc += kernel[i + radius] * src.at(yy, xx, c);
          }
          dst.at(y, x, c) = clamp01(acc);
        }
    return dst;
  };
  return pass(pass(img, true), false);
}

Tensor to_tensor(const Image& img, const Normalization& norm) {
  Tensor t({3, img.height, img.width});
  const std::size_t plane = static_cast<std::size_t>(img.height) * img.width;
  for (int c = 0; c < 3; ++c) {
    double sd = norm.std[c];
    if (sd == 0.0) {
      std::cerr << "warning: channel " << c << " has zero std; normalizing with std 1\n";
      sd = 1.0;
    }
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        t[c * plane + static_cast<std::size_t>(y) * img.width + x] = (img.at(y, x, c) - norm.mean[c]) / sd;
  }
  return t;
}

}  // namespace rsrep
