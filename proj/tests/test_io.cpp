// Serialization: tensor blob byte layout and round trips, PGM round trips,
// and the error paths for malformed files.
#include <cstdio>
#include <filesystem>
#include <string>

#include "doctest.h"
#include "glide/io.hpp"
#include "glide/rng.hpp"

using namespace glide;

namespace {

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("tensor blob layout is exactly as documented") {
  Tensor<float> t = Tensor<float>::from({2, 3}, {1.0f, 2.0f, 3.0f, 4.0f, 5.0f, 6.0f});
  auto bytes = blob_bytes(t);
  REQUIRE(bytes.size() == 4 + 1 + 1 + 1 + 2 * 4 + 6 * 4);
  CHECK(bytes[0] == 'G');
  CHECK(bytes[1] == 'L');
  CHECK(bytes[2] == 'T');
  CHECK(bytes[3] == 'N');
  CHECK(bytes[4] == 1);  // version
  CHECK(bytes[5] == 0);  // f32
  CHECK(bytes[6] == 2);  // ndim
  // Little-endian u32 extents: 2 then 3.
  CHECK(bytes[7] == 2);
  CHECK(bytes[8] == 0);
  CHECK(bytes[9] == 0);
  CHECK(bytes[10] == 0);
  CHECK(bytes[11] == 3);
  // First payload float is 1.0f = 0x3f800000 little-endian.
  CHECK(bytes[15] == 0x00);
  CHECK(bytes[16] == 0x00);
  CHECK(bytes[17] == 0x80);
  CHECK(bytes[18] == 0x3f);

  Tensor<double> d = Tensor<double>::from({1}, {0.5});
  auto dbytes = blob_bytes(d);
  CHECK(dbytes[5] == 1);  // f64 dtype code
}

TEST_CASE("tensor blobs round trip through files in both precisions") {
  Rng rng(41, "test");
  Tensor<double> t = Tensor<double>::zeros({2, 3, 4, 5});
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-10, 10);
  const std::string p64 = tmp_path("glide_blob_f64.gltn");
  write_blob(p64, t);
  Tensor<double> back = read_blob<double>(p64);
  REQUIRE(back.shape == t.shape);
  for (int64_t i = 0; i < t.numel(); ++i) CHECK(back[i] == t[i]);

  Tensor<float> tf = t.cast<float>();
  const std::string p32 = tmp_path("glide_blob_f32.gltn");
  write_blob(p32, tf);
  Tensor<float> backf = read_blob<float>(p32);
  REQUIRE(backf.shape == tf.shape);
  for (int64_t i = 0; i < tf.numel(); ++i) CHECK(backf[i] == tf[i]);

  // Writing the same tensor twice produces identical bytes.
  auto b1 = blob_bytes(t), b2 = blob_bytes(t);
  CHECK(b1 == b2);
  std::remove(p64.c_str());
  std::remove(p32.c_str());
}

TEST_CASE("malformed tensor blobs are rejected with io errors") {
  Tensor<float> t = Tensor<float>::from({2, 2}, {1, 2, 3, 4});
  auto good = blob_bytes(t);

  auto expect_io_error = [](std::vector<unsigned char> bytes) {
    size_t cursor = 0;
    CHECK_THROWS_AS(parse_blob<float>(bytes, &cursor), Error);
    try {
      size_t c2 = 0;
      parse_blob<float>(bytes, &c2);
    } catch (const Error& e) {
      CHECK(e.category() == ErrorCategory::io);
    }
  };

  auto bad_magic = good;
  bad_magic[0] = 'X';
  expect_io_error(bad_magic);

  auto bad_version = good;
  bad_version[4] = 9;
  expect_io_error(bad_version);

  auto truncated = good;
  truncated.resize(truncated.size() - 3);
  expect_io_error(truncated);

  // Wrong dtype on read.
  size_t cursor = 0;
  CHECK_THROWS_AS(parse_blob<double>(good, &cursor), Error);

  // Trailing garbage after a file-level read.
  const std::string p = tmp_path("glide_blob_trailing.gltn");
  auto with_tail = good;
  with_tail.push_back(0xAB);
  write_file_bytes(p, with_tail.data(), with_tail.size());
  CHECK_THROWS_AS(read_blob<float>(p), Error);
  std::remove(p.c_str());
}

TEST_CASE("pgm files round trip 8-bit data exactly") {
  // Values on the exact 1/255 grid survive the write/read cycle untouched.
  const int H = 7, W = 5;
  Tensor<double> img = Tensor<double>::zeros({H, W});
  for (int64_t i = 0; i < img.numel(); ++i) img[i] = static_cast<double>((i * 13) % 256) / 255.0;
  const std::string p = tmp_path("glide_roundtrip.pgm");
  write_pgm(p, img);
  Tensor<double> back = read_pgm<double>(p);
  REQUIRE(back.shape == Shape{1, 1, H, W});
  for (int64_t i = 0; i < img.numel(); ++i) CHECK(back[i] == doctest::Approx(img[i]).epsilon(1e-12));
  std::remove(p.c_str());
}

TEST_CASE("pgm reader handles comments and rejects non-p5 input") {
  const std::string p = tmp_path("glide_comment.pgm");
  const std::string body = "P5\n# a comment line\n2 2\n# another\n255\n";
  std::vector<unsigned char> bytes(body.begin(), body.end());
  bytes.push_back(0);
  bytes.push_back(128);
  bytes.push_back(255);
  bytes.push_back(64);
  write_file_bytes(p, bytes.data(), bytes.size());
  Tensor<float> img = read_pgm<float>(p);
  REQUIRE(img.shape == Shape{1, 1, 2, 2});
  CHECK(img[0] == 0.0f);
  CHECK(img[1] == doctest::Approx(128.0f / 255.0f));
  CHECK(img[2] == 1.0f);
  CHECK(img[3] == doctest::Approx(64.0f / 255.0f));
  std::remove(p.c_str());

  const std::string p2 = tmp_path("glide_bad.pgm");
  const std::string ascii = "P2\n2 2\n255\n0 1 2 3\n";
  write_file_bytes(p2, ascii.data(), ascii.size());
  CHECK_THROWS_AS(read_pgm<float>(p2), Error);
  std::remove(p2.c_str());
}

TEST_CASE("missing files raise io errors, not crashes") {
  CHECK_THROWS_AS(read_file_bytes("/nonexistent/definitely/missing.bin"), Error);
  CHECK_THROWS_AS(read_blob<float>("/nonexistent/missing.gltn"), Error);
  CHECK_THROWS_AS(read_pgm<float>("/nonexistent/missing.pgm"), Error);
}

TEST_CASE("fmt_g produces C-locale shortest forms") {
  CHECK(fmt_g(0.5) == "0.5");
  CHECK(fmt_g(1.0) == "1");
  CHECK(fmt_g(-3.25) == "-3.25");
  CHECK(fmt_g(1e-7) == "1e-07");
  CHECK(fmt_g(0.1234567891234, 4) == "0.1235");
}
