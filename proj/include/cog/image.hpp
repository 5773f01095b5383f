#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cog {

// Row-major RGB8 raster. Immutable by convention once produced; operations
// return new buffers.
class ImageBuffer {
 public:
  ImageBuffer() = default;
  ImageBuffer(int width, int height)
      : width_(width), height_(height),
        pixels_(static_cast<size_t>(width) * height * 3, 0) {
    if (width <= 0 || height <= 0) {
      throw std::invalid_argument("ImageBuffer: dimensions must be positive");
    }
  }
  ImageBuffer(int width, int height, std::vector<uint8_t> pixels)
      : width_(width), height_(height), pixels_(std::move(pixels)) {
    if (width <= 0 || height <= 0 ||
        pixels_.size() != static_cast<size_t>(width) * height * 3) {
      throw std::invalid_argument("ImageBuffer: pixel count mismatch");
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return pixels_.empty(); }

  std::span<const uint8_t> pixels() const { return pixels_; }
  std::span<uint8_t> pixels_mut() { return pixels_; }

  const uint8_t* at(int x, int y) const {
    return pixels_.data() + (static_cast<size_t>(y) * width_ + x) * 3;
  }
  uint8_t* at(int x, int y) {
    return pixels_.data() + (static_cast<size_t>(y) * width_ + x) * 3;
  }

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<uint8_t> pixels_;
};

// PNG is the canonical lossless format; JPEG is accepted as input only.
ImageBuffer load_image(const std::string& path);
void save_png(const ImageBuffer& image, const std::string& path);
std::vector<uint8_t> encode_png(const ImageBuffer& image);

// In-memory JPEG encode/decode round trip at the given quality (0-100).
ImageBuffer jpeg_roundtrip(const ImageBuffer& image, int quality);

// Nearest-preserving area downscale; aspect ratio is the caller's problem.
ImageBuffer resize_image(const ImageBuffer& image, int new_width, int new_height);

}  // namespace cog
