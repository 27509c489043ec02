#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace avatarcraft {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Row-major interleaved 8-bit RGB raster. Engine renders are always
/// kCanvas x kCanvas; decoded external images may have other sizes until
/// they are checked with require_canvas().
class ImageBuffer {
 public:
  static constexpr int kCanvas = 128;
  static constexpr int kChannels = 3;

  ImageBuffer() : ImageBuffer(kCanvas, kCanvas) {}
  ImageBuffer(int width, int height, Rgb fill = {});
  ImageBuffer(int width, int height, std::vector<std::uint8_t> bytes);

  int width() const { return width_; }
  int height() const { return height_; }

  std::uint8_t* data() { return bytes_.data(); }
  const std::uint8_t* data() const { return bytes_.data(); }
  std::span<const std::uint8_t> bytes() const { return bytes_; }
  std::size_t size() const { return bytes_.size(); }

  std::uint8_t& at(int x, int y, int c) {
    return bytes_[(static_cast<std::size_t>(y) * width_ + x) * kChannels + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return bytes_[(static_cast<std::size_t>(y) * width_ + x) * kChannels + c];
  }

  Rgb pixel(int x, int y) const { return {at(x, y, 0), at(x, y, 1), at(x, y, 2)}; }
  void set(int x, int y, Rgb c) {
    std::uint8_t* p = &at(x, y, 0);
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
  }

  bool is_canvas() const { return width_ == kCanvas && height_ == kCanvas; }
  /// Throws std::invalid_argument unless the image is kCanvas x kCanvas.
  void require_canvas() const;

  /// Lowercase hex SHA-256 of the raw pixel bytes.
  std::string sha256() const;

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

 private:
  int width_;
  int height_;
  std::vector<std::uint8_t> bytes_;
};

/// Mean absolute per-channel difference in 0..255 units.
double mean_abs_diff(const ImageBuffer& a, const ImageBuffer& b);

}  // namespace avatarcraft
