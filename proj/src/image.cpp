#include "cog/image.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <stdexcept>

namespace cog {

namespace {

ImageBuffer from_mat(const cv::Mat& bgr) {
  if (bgr.empty()) {
    throw std::runtime_error("image decode produced an empty frame");
  }
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  std::vector<uint8_t> pixels(rgb.total() * 3);
  if (rgb.isContinuous()) {
    std::copy(rgb.data, rgb.data + pixels.size(), pixels.begin());
  } else {
    for (int y = 0; y < rgb.rows; ++y) {
      std::copy_n(rgb.ptr<uint8_t>(y), static_cast<size_t>(rgb.cols) * 3,
                  pixels.begin() + static_cast<size_t>(y) * rgb.cols * 3);
    }
  }
  return ImageBuffer(rgb.cols, rgb.rows, std::move(pixels));
}

cv::Mat to_mat(const ImageBuffer& image) {
  cv::Mat rgb(image.height(), image.width(), CV_8UC3,
              const_cast<uint8_t*>(image.pixels().data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  return bgr;
}

}  // namespace

ImageBuffer load_image(const std::string& path) {
  cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
  if (bgr.empty()) {
    throw std::runtime_error("failed to read image: " + path);
  }
  return from_mat(bgr);
}

void save_png(const ImageBuffer& image, const std::string& path) {
  if (!cv::imwrite(path, to_mat(image), {cv::IMWRITE_PNG_COMPRESSION, 6})) {
    throw std::runtime_error("failed to write PNG: " + path);
  }
}

std::vector<uint8_t> encode_png(const ImageBuffer& image) {
  std::vector<uint8_t> out;
  if (!cv::imencode(".png", to_mat(image), out,
                    {cv::IMWRITE_PNG_COMPRESSION, 6})) {
    throw std::runtime_error("PNG encode failed");
  }
  return out;
}

ImageBuffer jpeg_roundtrip(const ImageBuffer& image, int quality) {
  std::vector<uint8_t> buf;
  if (!cv::imencode(".jpg", to_mat(image), buf,
                    {cv::IMWRITE_JPEG_QUALITY, quality})) {
    throw std::runtime_error("JPEG encode failed");
  }
  cv::Mat decoded = cv::imdecode(buf, cv::IMREAD_COLOR);
  return from_mat(decoded);
}

ImageBuffer resize_image(const ImageBuffer& image, int new_width, int new_height) {
  if (new_width <= 0 || new_height <= 0) {
    throw std::invalid_argument("resize_image: dimensions must be positive");
  }
  cv::Mat bgr = to_mat(image);
  cv::Mat resized;
  cv::resize(bgr, resized, cv::Size(new_width, new_height), 0, 0, cv::INTER_AREA);
  return from_mat(resized);
}

}  // namespace cog
