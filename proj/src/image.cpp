#include "grasp/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>

#include "grasp/errors.hpp"

namespace grasp {

namespace {

constexpr double kPi = 3.14159265358979323846;

void check_nonempty(const Image& img, const char* what) {
  if (img.width < 1 || img.height < 1 ||
      img.data.size() != static_cast<std::size_t>(img.width) * img.height * 3) {
    throw ShapeError(std::string(what) + ": malformed image " +
                     std::to_string(img.width) + "x" + std::to_string(img.height));
  }
}

}  // namespace

float sample_bilinear(const Image& img, float x, float y, int c) {
  const float cx = std::min(std::max(x, 0.0f), static_cast<float>(img.width - 1));
  const float cy = std::min(std::max(y, 0.0f), static_cast<float>(img.height - 1));
  const int x0 = static_cast<int>(cx);
  const int y0 = static_cast<int>(cy);
  const int x1 = std::min(x0 + 1, img.width - 1);
  const int y1 = std::min(y0 + 1, img.height - 1);
  const float fx = cx - static_cast<float>(x0);
  const float fy = cy - static_cast<float>(y0);
  const float top = img.at(x0, y0, c) * (1.0f - fx) + img.at(x1, y0, c) * fx;
  const float bot = img.at(x0, y1, c) * (1.0f - fx) + img.at(x1, y1, c) * fx;
  return top * (1.0f - fy) + bot * fy;
}

Image rotate_image(const Image& img, float angle_deg, float cx, float cy) {
  check_nonempty(img, "rotate_image");
  Image out(img.width, img.height);
  const double a = static_cast<double>(angle_deg) * kPi / 180.0;
  const float cs = static_cast<float>(std::cos(a));
  const float sn = static_cast<float>(std::sin(a));
#pragma omp parallel for schedule(static)
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const float dx = static_cast<float>(x) - cx;
      const float dy = static_cast<float>(y) - cy;
      const float sx = cx + dx * cs + dy * sn;
      const float sy = cy - dx * sn + dy * cs;
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = sample_bilinear(img, sx, sy, c);
    }
  }
  return out;
}

Image crop_image(const Image& img, int cx, int cy, int size) {
  check_nonempty(img, "crop_image");
  const int half = size / 2;
  const int x0 = cx - half, y0 = cy - half;
  if (size < 1 || x0 < 0 || y0 < 0 || x0 + size > img.width || y0 + size > img.height) {
    throw ShapeError("crop " + std::to_string(size) + "px at (" +
                     std::to_string(cx) + "," + std::to_string(cy) +
                     ") leaves the " + std::to_string(img.width) + "x" +
                     std::to_string(img.height) + " frame");
  }
  Image out(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(x0 + x, y0 + y, c);
  return out;
}

Image extract_patch(const Image& frame, int cx, int cy, int size,
                    float angle_deg) {
  check_nonempty(frame, "extract_patch");
  const int half_chk = size / 2;
  if (size < 1 || cx - half_chk < 0 || cy - half_chk < 0 ||
      cx - half_chk + size > frame.width || cy - half_chk + size > frame.height) {
    throw ShapeError("patch " + std::to_string(size) + "px at (" +
                     std::to_string(cx) + "," + std::to_string(cy) +
                     ") leaves the " + std::to_string(frame.width) + "x" +
                     std::to_string(frame.height) + " frame");
  }
  const float fcx = static_cast<float>(frame.width) / 2.0f;
  const float fcy = static_cast<float>(frame.height) / 2.0f;
  const double a = static_cast<double>(angle_deg) * kPi / 180.0;
  const float cs = static_cast<float>(std::cos(a));
  const float sn = static_cast<float>(std::sin(a));
  const int half = size / 2;
  Image out(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      // position of this patch pixel in the rotated frame
      const float dx = static_cast<float>(cx - half + x) - fcx;
      const float dy = static_cast<float>(cy - half + y) - fcy;
      const float sx = fcx + dx * cs + dy * sn;
      const float sy = fcy - dx * sn + dy * cs;
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = sample_bilinear(frame, sx, sy, c);
    }
  }
  return out;
}

Image apply_brightness_contrast(const Image& img, float b, float c) {
  check_nonempty(img, "apply_brightness_contrast");
  if (!(b > 0.0f) || !(c > 0.0f)) {
    throw NumericError("brightness/contrast factors must be positive");
  }
  // Identity factors must reproduce the input bit for bit; the formula
  // alone would round x-0.5+0.5 for values off the binary grid.
  if (b == 1.0f && c == 1.0f) return img;
  Image out(img.width, img.height);
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const float v = (img.data[i] * b - 0.5f) * c + 0.5f;
    out.data[i] = std::min(1.0f, std::max(0.0f, v));
  }
  return out;
}

Tensor image_to_chw(const Image& img) {
  check_nonempty(img, "image_to_chw");
  Tensor t({3, img.height, img.width});
  const std::size_t plane = static_cast<std::size_t>(img.height) * img.width;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        t.data[c * plane + static_cast<std::size_t>(y) * img.width + x] =
            img.data[(static_cast<std::size_t>(y) * img.width + x) * 3 + c];
  return t;
}

Image chw_to_image(const Tensor& chw) {
  require_ndim(chw, 3, "chw_to_image");
  if (chw.dim(0) != 3) {
    throw ShapeError("chw_to_image expects [3,H,W], got " + shape_str(chw.shape));
  }
  Image img(chw.dim(2), chw.dim(1));
  const std::size_t plane = static_cast<std::size_t>(img.height) * img.width;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        img.data[(static_cast<std::size_t>(y) * img.width + x) * 3 + c] =
            chw.data[c * plane + static_cast<std::size_t>(y) * img.width + x];
  return img;
}

namespace {

std::uint8_t quantize(float v) {
  const float clamped = std::min(1.0f, std::max(0.0f, v));
  return static_cast<std::uint8_t>(std::lround(clamped * 255.0f));
}

void write_atomic(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw NotFoundError("cannot open " + tmp + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CorruptFileError("short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

// Reads one whitespace-delimited PNM header token, skipping '#' comments.
std::string pnm_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

}  // namespace

void save_ppm(const Image& img, const std::string& path) {
  check_nonempty(img, "save_ppm");
  std::string bytes = "P6\n" + std::to_string(img.width) + " " +
                      std::to_string(img.height) + "\n255\n";
  bytes.reserve(bytes.size() + img.data.size());
  for (float v : img.data) bytes.push_back(static_cast<char>(quantize(v)));
  write_atomic(path, bytes);
}

Image load_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open " + path);
  if (pnm_token(in) != "P6") throw CorruptFileError(path + ": not a binary PPM");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(pnm_token(in));
    h = std::stoi(pnm_token(in));
    maxval = std::stoi(pnm_token(in));
  } catch (const std::exception&) {
    throw CorruptFileError(path + ": malformed PPM header");
  }
  if (w < 1 || h < 1 || maxval != 255) {
    throw CorruptFileError(path + ": unsupported PPM geometry");
  }
  const std::size_t count = static_cast<std::size_t>(w) * h * 3;
  std::string raw(count, '\0');
  in.read(raw.data(), static_cast<std::streamsize>(count));
  if (static_cast<std::size_t>(in.gcount()) != count) {
    throw CorruptFileError(path + ": truncated pixel data");
  }
  Image img(w, h);
  for (std::size_t i = 0; i < count; ++i) {
    img.data[i] = static_cast<float>(static_cast<unsigned char>(raw[i])) / 255.0f;
  }
  return img;
}

void save_pgm(const Tensor& gray, const std::string& path) {
  require_ndim(gray, 2, "save_pgm");
  const int h = gray.dim(0), w = gray.dim(1);
  std::string bytes = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  bytes.reserve(bytes.size() + gray.size());
  for (float v : gray.data) bytes.push_back(static_cast<char>(quantize(v)));
  write_atomic(path, bytes);
}

}  // namespace grasp
