#include "avatarcraft/image.hpp"

#include <cstdlib>
#include <stdexcept>

#include "avatarcraft/io.hpp"

namespace avatarcraft {

ImageBuffer::ImageBuffer(int width, int height, Rgb fill)
    : width_(width), height_(height) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("image dimensions must be positive");
  bytes_.resize(static_cast<std::size_t>(width) * height * kChannels);
  for (std::size_t i = 0; i < bytes_.size(); i += kChannels) {
    bytes_[i] = fill.r;
    bytes_[i + 1] = fill.g;
    bytes_[i + 2] = fill.b;
  }
}

ImageBuffer::ImageBuffer(int width, int height, std::vector<std::uint8_t> bytes)
    : width_(width), height_(height), bytes_(std::move(bytes)) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("image dimensions must be positive");
  if (bytes_.size() != static_cast<std::size_t>(width) * height * kChannels)
    throw std::invalid_argument("image byte count does not match dimensions");
}

void ImageBuffer::require_canvas() const {
  if (!is_canvas())
    throw std::invalid_argument("image must be " + std::to_string(kCanvas) + "x" +
                                std::to_string(kCanvas) + ", got " + std::to_string(width_) +
                                "x" + std::to_string(height_));
}

std::string ImageBuffer::sha256() const { return io::sha256_hex(bytes()); }

double mean_abs_diff(const ImageBuffer& a, const ImageBuffer& b) {
  if (a.width() != b.width() || a.height() != b.height())
    throw std::invalid_argument("mean_abs_diff: size mismatch");
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    total += static_cast<std::uint64_t>(std::abs(int(a.data()[i]) - int(b.data()[i])));
  return static_cast<double>(total) / static_cast<double>(a.size());
}

}  // namespace avatarcraft
