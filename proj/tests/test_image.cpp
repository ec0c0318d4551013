#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "grasp/errors.hpp"
#include "grasp/image.hpp"
#include "grasp/rng.hpp"

using namespace grasp;

namespace {

Image random_image(int w, int h, unsigned seed) {
  Image img(w, h);
  Rng rng(seed);
  for (auto& v : img.data) v = rng.uniform();
  return img;
}

// Smooth non-constant pattern; interpolation error stays small under it.
Image smooth_image(int w, int h) {
  Image img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      img.at(x, y, 0) = 0.5f + 0.4f * std::sin(0.05f * x);
      img.at(x, y, 1) = 0.5f + 0.4f * std::cos(0.07f * y);
      img.at(x, y, 2) = 0.5f + 0.2f * std::sin(0.03f * (x + y));
    }
  return img;
}

std::filesystem::path tmp_path(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("bilinear sampling interpolates and clamps at edges") {
  Image img(4, 3);
  img.at(1, 1, 0) = 0.2f;
  img.at(2, 1, 0) = 0.6f;
  img.at(1, 2, 0) = 1.0f;
  CHECK(sample_bilinear(img, 1.0f, 1.0f, 0) == doctest::Approx(0.2f));
  CHECK(sample_bilinear(img, 1.5f, 1.0f, 0) == doctest::Approx(0.4f));
  CHECK(sample_bilinear(img, 1.0f, 1.5f, 0) == doctest::Approx(0.6f));
  // out-of-range coordinates replicate the nearest edge pixel
  CHECK(sample_bilinear(img, -5.0f, 1.0f, 0) == doctest::Approx(img.at(0, 1, 0)));
  CHECK(sample_bilinear(img, 99.0f, 99.0f, 0) == doctest::Approx(img.at(3, 2, 0)));
}

TEST_CASE("rotation by zero degrees is the identity") {
  const Image img = random_image(33, 21, 7);
  const Image out = rotate_image(img, 0.0f, 16.5f, 10.5f);
  REQUIRE(out.data.size() == img.data.size());
  for (std::size_t i = 0; i < img.data.size(); ++i) CHECK(out.data[i] == img.data[i]);
}

TEST_CASE("rotating +90 then -90 degrees restores the interior") {
  const Image img = smooth_image(64, 64);
  const Image once = rotate_image(img, 90.0f, 32.0f, 32.0f);
  const Image back = rotate_image(once, -90.0f, 32.0f, 32.0f);
  // corners leave the frame under the first rotation; compare the inscribed
  // disc only, where both rotations sample valid data
  float worst = 0.0f;
  for (int y = 8; y < 56; ++y)
    for (int x = 8; x < 56; ++x) {
      const float dx = x - 32.0f, dy = y - 32.0f;
      if (dx * dx + dy * dy > 24.0f * 24.0f) continue;
      for (int c = 0; c < 3; ++c)
        worst = std::max(worst, std::abs(back.at(x, y, c) - img.at(x, y, c)));
    }
  CHECK(worst <= 0.02f);
}

TEST_CASE("rotation convention: +90 degrees sends the +x axis to +y") {
  // mark one pixel right of center; content at offset d moves to R(90)·d,
  // and R(90)(2,0) = (0,2), two pixels below the center with y down.
  Image img(9, 9);
  img.at(6, 4, 0) = 1.0f;  // (center + (2,0))
  const Image out = rotate_image(img, 90.0f, 4.0f, 4.0f);
  CHECK(out.at(4, 6, 0) == doctest::Approx(1.0f));  // (center + (0,2))
  CHECK(out.at(6, 4, 0) == doctest::Approx(0.0f));
}

TEST_CASE("rotating a uniform image changes nothing") {
  const Image img(17, 13, 0.37f);
  const Image out = rotate_image(img, 123.4f, 8.5f, 6.5f);
  for (float v : out.data) CHECK(v == doctest::Approx(0.37f));
}

TEST_CASE("crop copies the exact window and validates bounds") {
  const Image img = random_image(40, 30, 11);
  const Image out = crop_image(img, 20, 15, 8);
  REQUIRE(out.width == 8);
  REQUIRE(out.height == 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      for (int c = 0; c < 3; ++c) CHECK(out.at(x, y, c) == img.at(16 + x, 11 + y, c));
  CHECK_THROWS_AS(crop_image(img, 3, 15, 8), ShapeError);
  CHECK_THROWS_AS(crop_image(img, 20, 27, 8), ShapeError);
  CHECK_THROWS_AS(crop_image(img, 20, 15, 0), ShapeError);
}

TEST_CASE("extract_patch matches rotate-then-crop bit for bit") {
  const Image frame = random_image(160, 120, 3);
  for (float angle : {0.0f, 2.5f, -37.0f, 160.0f}) {
    const Image fused = extract_patch(frame, 70, 60, 32, angle);
    const Image two_step =
        crop_image(rotate_image(frame, angle, 80.0f, 60.0f), 70, 60, 32);
    REQUIRE(fused.data.size() == two_step.data.size());
    for (std::size_t i = 0; i < fused.data.size(); ++i)
      CHECK(fused.data[i] == two_step.data[i]);
  }
}

TEST_CASE("extract_patch at angle zero reproduces the raw crop exactly") {
  const Image frame = random_image(640, 480, 5);
  const Image patch = extract_patch(frame, 320, 240, 128, 0.0f);
  const Image crop = crop_image(frame, 320, 240, 128);
  for (std::size_t i = 0; i < patch.data.size(); ++i)
    CHECK(patch.data[i] == crop.data[i]);
  CHECK_THROWS_AS(extract_patch(frame, 10, 240, 128, 0.0f), ShapeError);
}

TEST_CASE("brightness and contrast transform") {
  Image img(2, 1);
  img.at(0, 0, 0) = 0.4f;
  img.at(1, 0, 0) = 0.9f;

  // identity parameters change nothing, including 8-bit values like 1/255
  // that the round trip through x-0.5 would otherwise round
  Image eightbit(16, 1);
  for (int i = 0; i < 48; ++i) eightbit.data[i] = static_cast<float>(i) / 255.0f;
  const Image same = apply_brightness_contrast(eightbit, 1.0f, 1.0f);
  for (std::size_t i = 0; i < eightbit.data.size(); ++i)
    CHECK(same.data[i] == eightbit.data[i]);

  // 0.4 * 1.5 = 0.6; contrast 1 leaves it alone
  const Image bright = apply_brightness_contrast(img, 1.5f, 1.0f);
  CHECK(bright.at(0, 0, 0) == doctest::Approx(0.6f));
  // 0.9 * 1.5 = 1.35 clamps to 1
  CHECK(bright.at(1, 0, 0) == doctest::Approx(1.0f));

  // 0.5 is the fixed point of contrast at brightness 1
  Image mid(1, 1, 0.5f);
  const Image stretched = apply_brightness_contrast(mid, 1.0f, 1.5f);
  for (int c = 0; c < 3; ++c) CHECK(stretched.at(0, 0, c) == doctest::Approx(0.5f));

  // (0.9 - 0.5) * 1.5 + 0.5 = 1.1 clamps to 1; (0.4 - 0.5) * 1.5 + 0.5 = 0.35
  const Image contrasty = apply_brightness_contrast(img, 1.0f, 1.5f);
  CHECK(contrasty.at(0, 0, 0) == doctest::Approx(0.35f));
  CHECK(contrasty.at(1, 0, 0) == doctest::Approx(1.0f));

  CHECK_THROWS_AS(apply_brightness_contrast(img, 0.0f, 1.0f), NumericError);
  CHECK_THROWS_AS(apply_brightness_contrast(img, 1.0f, -0.5f), NumericError);
}

TEST_CASE("CHW conversion round-trips and orders planes") {
  const Image img = random_image(6, 4, 9);
  const Tensor chw = image_to_chw(img);
  REQUIRE(chw.shape == std::vector<int>({3, 4, 6}));
  CHECK(chw.data[0] == img.at(0, 0, 0));
  CHECK(chw.data[4 * 6] == img.at(0, 0, 1));         // G plane follows R
  CHECK(chw.data[2 * 4 * 6 + 6 + 1] == img.at(1, 1, 2));
  const Image back = chw_to_image(chw);
  REQUIRE(back.width == img.width);
  REQUIRE(back.height == img.height);
  for (std::size_t i = 0; i < img.data.size(); ++i) CHECK(back.data[i] == img.data[i]);

  Tensor bad({2, 4, 6});
  CHECK_THROWS_AS(chw_to_image(bad), ShapeError);
}

TEST_CASE("PPM round-trip preserves 8-bit quantized values") {
  const Image img = random_image(20, 14, 17);
  const auto path = tmp_path("grasp_test_roundtrip.ppm");
  save_ppm(img, path.string());
  const Image back = load_ppm(path.string());
  REQUIRE(back.width == img.width);
  REQUIRE(back.height == img.height);
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const float quant = std::round(img.data[i] * 255.0f) / 255.0f;
    CHECK(back.data[i] == doctest::Approx(quant).epsilon(1e-6));
  }
  // a second save/load is the identity: quantization already happened
  save_ppm(back, path.string());
  const Image again = load_ppm(path.string());
  for (std::size_t i = 0; i < back.data.size(); ++i) CHECK(again.data[i] == back.data[i]);
  std::filesystem::remove(path);
}

TEST_CASE("PPM loader accepts comments and rejects malformed files") {
  const auto path = tmp_path("grasp_test_header.ppm");
  {
    std::ofstream out(path, std::ios::binary);
    out << "P6\n# camera frame\n2 1\n255\n";
    const unsigned char px[6] = {255, 0, 0, 0, 255, 0};
    out.write(reinterpret_cast<const char*>(px), 6);
  }
  const Image img = load_ppm(path.string());
  REQUIRE(img.width == 2);
  REQUIRE(img.height == 1);
  CHECK(img.at(0, 0, 0) == doctest::Approx(1.0f));
  CHECK(img.at(1, 0, 1) == doctest::Approx(1.0f));

  {
    std::ofstream out(path, std::ios::binary);
    out << "P5\n2 1\n255\n";
  }
  CHECK_THROWS_AS(load_ppm(path.string()), CorruptFileError);

  {
    std::ofstream out(path, std::ios::binary);
    out << "P6\n2 1\n65535\n";
  }
  CHECK_THROWS_AS(load_ppm(path.string()), CorruptFileError);

  {
    std::ofstream out(path, std::ios::binary);
    out << "P6\n2 1\n255\nab";  // 6 bytes expected, 2 given
  }
  CHECK_THROWS_AS(load_ppm(path.string()), CorruptFileError);

  CHECK_THROWS_AS(load_ppm("/nonexistent/nowhere.ppm"), NotFoundError);
  std::filesystem::remove(path);
}

TEST_CASE("PGM writer emits a valid 8-bit grayscale file") {
  Tensor gray({2, 3});
  for (int i = 0; i < 6; ++i) gray.data[i] = static_cast<float>(i) / 5.0f;
  const auto path = tmp_path("grasp_test_gray.pgm");
  save_pgm(gray, path.string());
  std::ifstream in(path, std::ios::binary);
  std::string header;
  std::getline(in, header);
  CHECK(header == "P5");
  std::getline(in, header);
  CHECK(header == "3 2");
  std::getline(in, header);
  CHECK(header == "255");
  unsigned char px[6];
  in.read(reinterpret_cast<char*>(px), 6);
  REQUIRE(in.gcount() == 6);
  CHECK(px[0] == 0);
  CHECK(px[5] == 255);
  CHECK(px[3] == static_cast<unsigned char>(std::lround(255.0 * 3.0 / 5.0)));
  std::filesystem::remove(path);
}
