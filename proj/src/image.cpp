#include "mushroom/image.hpp"

#include "mushroom/errors.hpp"
#include "mushroom/text_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace mushroom {

namespace {

class HeaderReader {
public:
  explicit HeaderReader(std::string_view bytes) : bytes_(bytes) {}

  long long next_int(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) ++pos_;
    if (start == pos_) throw DataError(std::string("image header: missing ") + what);
    return parse_int(bytes_.substr(start, pos_ - start), what);
  }

  std::size_t payload_start() {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
      throw DataError("image header: expected whitespace before pixel data");
    }
    return pos_ + 1;
  }

private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 2;
};

} // namespace

Image Image::blank(int channels, int height, int width, double fill) {
  if (channels <= 0 || height <= 0 || width <= 0) throw ArgumentError("image extents must be positive");
  Image img;
  img.channels = channels;
  img.height = height;
  img.width = width;
  img.data.assign(static_cast<std::size_t>(channels) * height * width, fill);
  return img;
}

Image decode_pnm(std::string_view bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw DataError("unsupported image format (expected binary PGM P5 or PPM P6)");
  }
  const int channels = bytes[1] == '6' ? 3 : 1;
  HeaderReader header(bytes);
  const long long width = header.next_int("width");
  const long long height = header.next_int("height");
  const long long maxval = header.next_int("maxval");
  if (width <= 0 || height <= 0 || width > 1 << 15 || height > 1 << 15) throw DataError("image extents out of range");
  if (maxval <= 0 || maxval > 255) throw DataError("image maxval must lie in [1,255], got " + std::to_string(maxval));
  const std::size_t start = header.payload_start();
  const std::size_t n = static_cast<std::size_t>(channels * width * height);
  if (bytes.size() - start < n) throw DataError("image pixel data truncated");

  Image img = Image::blank(channels, static_cast<int>(height), static_cast<int>(width));
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < channels; ++c) {
        const auto byte = static_cast<unsigned char>(bytes[start + (static_cast<std::size_t>(y) * img.width + x) * channels + c]);
        img.at(c, y, x) = static_cast<double>(byte) / static_cast<double>(maxval);
      }
  return img;
}

std::string encode_pnm(const Image& img) {
  if (img.channels != 1 && img.channels != 3) {
    throw ArgumentError("only 1- or 3-channel images can be written, got " + std::to_string(img.channels));
  }
  std::string out = std::string(img.channels == 3 ? "P6" : "P5") + "\n" + std::to_string(img.width) + " " +
                    std::to_string(img.height) + "\n255\n";
  const std::size_t header = out.size();
  out.resize(header + img.data.size());
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        const double v = std::clamp(img.at(c, y, x), 0.0, 1.0);
        out[header + (static_cast<std::size_t>(y) * img.width + x) * img.channels + c] =
            static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
      }
  return out;
}

Image read_image(const std::string& path) {
  try {
    return decode_pnm(read_text_file(path));
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

void write_image(const Image& img, const std::string& path) { write_text_file(path, encode_pnm(img)); }

Image resize_bilinear(const Image& img, int height, int width) {
  if (height == img.height && width == img.width) return img;
  Image out = Image::blank(img.channels, height, width);
  const double sy = static_cast<double>(img.height) / height;
  const double sx = static_cast<double>(img.width) / width;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < img.channels; ++c) {
        const double top = img.at(c, y0, x0) * (1.0 - wx) + img.at(c, y0, x1) * wx;
        const double bottom = img.at(c, y1, x0) * (1.0 - wx) + img.at(c, y1, x1) * wx;
        out.at(c, y, x) = top * (1.0 - wy) + bottom * wy;
      }
    }
  }
  return out;
}

Image to_rgb(Image img) {
  if (img.channels == 3) return img;
  if (img.channels != 1) throw DataError("images must have 1 or 3 channels, got " + std::to_string(img.channels));
  Image out = Image::blank(3, img.height, img.width);
  for (int c = 0; c < 3; ++c) std::copy(img.data.begin(), img.data.end(), out.data.begin() + c * img.data.size());
  return out;
}

Tensor images_to_tensor(const std::vector<const Image*>& images, DType dtype) {
  if (images.empty()) throw ArgumentError("images_to_tensor: empty batch");
  const Image& first = *images.front();
  std::vector<double> data;
  data.reserve(images.size() * first.data.size());
  for (const Image* img : images) {
    if (img->channels != first.channels || img->height != first.height || img->width != first.width) {
      throw ShapeError("images_to_tensor: batch images differ in size");
    }
    data.insert(data.end(), img->data.begin(), img->data.end());
  }
  return Tensor::from_data(Shape{static_cast<std::int64_t>(images.size()), first.channels, first.height, first.width},
                           std::move(data), dtype);
}

} // namespace mushroom
