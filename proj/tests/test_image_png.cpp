#include <doctest.h>

#include <string>

#include "poisonbench/common.hpp"
#include "poisonbench/image.hpp"
#include "poisonbench/png_io.hpp"
#include "poisonbench/rng.hpp"
#include "test_util.hpp"

using namespace poisonbench;
using poisonbench::testutil::TempDir;

namespace {

Image random_image(int c, int h, int w, uint64_t seed) {
  Image img(c, h, w);
  Rng rng(seed);
  for (auto& p : img.pixels) p = static_cast<uint8_t>(rng.uniform_int(256));
  return img;
}

}  // namespace

TEST_CASE("quantize clips and rounds half to even") {
  FloatImage f(1, 1, 8);
  f.v = {-10.f, 0.4f, 0.5f, 1.5f, 2.5f, 254.6f, 255.4f, 900.f};
  Image q = quantize(f);
  CHECK(q.pixels[0] == 0);
  CHECK(q.pixels[1] == 0);
  CHECK(q.pixels[2] == 0);    // 0.5 -> 0 (even)
  CHECK(q.pixels[3] == 2);    // 1.5 -> 2
  CHECK(q.pixels[4] == 2);    // 2.5 -> 2 (even)
  CHECK(q.pixels[5] == 255);
  CHECK(q.pixels[6] == 255);
  CHECK(q.pixels[7] == 255);
}

TEST_CASE("to_float then quantize is the identity on uint8 data") {
  Image img = random_image(3, 9, 7, 17);
  CHECK(quantize(to_float(img)) == img);
}

TEST_CASE("luminance single channel is the channel") {
  Image img = random_image(1, 4, 4, 3);
  CHECK(luminance(img, 2, 1) == doctest::Approx(static_cast<float>(img.at(0, 2, 1))));
}

TEST_CASE("luminance rgb weights") {
  Image img(3, 1, 1);
  img.at(0, 0, 0) = 100;
  img.at(1, 0, 0) = 200;
  img.at(2, 0, 0) = 50;
  CHECK(luminance(img, 0, 0) ==
        doctest::Approx(0.299f * 100 + 0.587f * 200 + 0.114f * 50));
}

TEST_CASE("mean_abs_diff") {
  Image a(1, 2, 2, 10), b(1, 2, 2, 10);
  CHECK(mean_abs_diff(a, b) == 0.0);
  b.pixels[0] = 14;  // +4 over 4 pixels -> 1.0
  CHECK(mean_abs_diff(a, b) == doctest::Approx(1.0));
}

TEST_CASE("image_hash distinguishes contents and shapes") {
  Image a = random_image(3, 8, 8, 1);
  Image b = a;
  CHECK(image_hash(a) == image_hash(b));
  b.pixels[17] ^= 1;
  CHECK(image_hash(a) != image_hash(b));
  Image flat(1, 8, 24);
  Image tall(1, 24, 8);
  CHECK(image_hash(flat) != image_hash(tall));
}

TEST_CASE("png rgb round-trip is bit-exact") {
  TempDir tmp;
  Image img = random_image(3, 21, 13, 5);
  const std::string path = tmp.str("rgb.png");
  write_png(path, img);
  Image back = read_png(path);
  CHECK(back == img);
}

TEST_CASE("png grayscale round-trip is bit-exact") {
  TempDir tmp;
  Image img = random_image(1, 5, 33, 6);
  const std::string path = tmp.str("gray.png");
  write_png(path, img);
  CHECK(read_png(path) == img);
}

TEST_CASE("png in-memory encode/decode round-trip") {
  Image img = random_image(3, 16, 16, 8);
  auto bytes = encode_png(img);
  CHECK(bytes.size() > 8);
  // PNG signature
  CHECK(bytes[0] == 0x89);
  CHECK(bytes[1] == 'P');
  CHECK(decode_png(bytes.data(), bytes.size()) == img);
}

TEST_CASE("png rejects unsupported channel counts") {
  Image img(2, 4, 4);
  CHECK_THROWS_AS(encode_png(img), FormatError);
}

TEST_CASE("png decode rejects garbage") {
  std::vector<uint8_t> junk(64, 0x41);
  CHECK_THROWS_AS(decode_png(junk.data(), junk.size()), FormatError);
}

TEST_CASE("read_png missing file throws") {
  CHECK_THROWS(read_png("/nonexistent/definitely/missing.png"));
}
