#ifndef LUMIX_PPM_HPP
#define LUMIX_PPM_HPP

// Binary PPM (P6) output for inspecting images. Pixel values are clamped
// to [0, 1]. One-channel images are written as gray, three-channel images
// as RGB, anything else uses the first channel.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "lumix/error.hpp"
#include "lumix/mixing.hpp"

namespace lumix {

inline std::vector<unsigned char> encode_ppm(std::span<const double> image, const ImageShape& shape) {
  detail::require(image.size() == shape.size(), ErrorKind::shape_mismatch, "encode_ppm: image size mismatch");
  const std::string header =
      "P6\n" + std::to_string(shape.width) + " " + std::to_string(shape.height) + "\n255\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  const std::size_t plane = shape.pixels();
  auto byte = [](double v) {
    return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
  };
  for (std::size_t p = 0; p < plane; ++p) {
    for (std::size_t c = 0; c < 3; ++c) {
      const std::size_t src = shape.channels == 3 ? c : 0;
      out.push_back(byte(image[src * plane + p]));
    }
  }
  return out;
}

inline void write_ppm(const std::string& path, std::span<const double> image, const ImageShape& shape) {
  const auto bytes = encode_ppm(image, shape);
  std::ofstream out(path, std::ios::binary);
  if (!out) detail::fail(ErrorKind::io_open, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace lumix

#endif  // LUMIX_PPM_HPP
