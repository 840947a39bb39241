#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace avc {

/// 8-bit RGB image, interleaved row-major (HWC).
struct RgbImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels[(y * width + x) * 3 + c];
  }
};

/// Decodes PNG or JPEG (detected from the file signature) to RGB.
RgbImage load_image(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const RgbImage& image);
void write_jpeg(const std::filesystem::path& path, const RgbImage& image, int quality = 95);

/// Bilinear resize with half-pixel centers and edge clamping. Returns planar
/// float channels [3, out_h, out_w] in the 0..255 range.
std::vector<float> resize_bilinear(const RgbImage& image, std::size_t out_h, std::size_t out_w);

/// Normalized 3x224x224 RGB frame with values in [-1, 1].
struct FrameImage {
  static constexpr std::size_t kSize = 224;
  std::size_t size = kSize;  // square side; kSize unless downsampled
  std::vector<float> pixels;
};

/// Resize to 224x224 and map x -> (x / 255 - 0.5) / 0.5.
FrameImage to_frame(const RgbImage& image);
FrameImage load_frame(const std::filesystem::path& path);

/// Box-filter reduction to `size` x `size`; the current side must be an
/// integer multiple of `size`.
FrameImage area_downsample(const FrameImage& frame, std::size_t size);

}  // namespace avc
