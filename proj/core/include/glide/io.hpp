#pragma once

#include <bit>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "glide/tensor.hpp"

namespace glide {

static_assert(std::endian::native == std::endian::little,
              "blob serialization assumes a little-endian host");

// Raw file helpers (io.cpp).
std::vector<unsigned char> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const void* data, size_t n);

// Deterministic float formatting for logs and reports: shortest %.*g form,
// C locale semantics, no locale-dependent separators.
std::string fmt_g(double v, int precision = 9);

// --- Tensor blobs ---------------------------------------------------------
// Layout: magic "GLTN", version byte 1, u8 dtype (0 = f32, 1 = f64), u8 ndim,
// ndim little-endian u32 extents, then the row-major little-endian payload.
// No padding anywhere.

template <class T>
inline constexpr unsigned char blob_dtype_code() {
  if constexpr (std::is_same_v<T, float>) return 0;
  else return 1;
}

template <class T>
std::vector<unsigned char> blob_bytes(const Tensor<T>& t) {
  std::vector<unsigned char> out;
  out.reserve(7 + 4 * t.shape.size() + sizeof(T) * t.data->size());
  const char magic[4] = {'G', 'L', 'T', 'N'};
  out.insert(out.end(), magic, magic + 4);
  out.push_back(1);
  out.push_back(blob_dtype_code<T>());
  out.push_back(static_cast<unsigned char>(t.shape.size()));
  for (int d : t.shape) {
    const uint32_t v = static_cast<uint32_t>(d);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  const auto* p = reinterpret_cast<const unsigned char*>(t.data->data());
  out.insert(out.end(), p, p + sizeof(T) * t.data->size());
  return out;
}

template <class T>
void write_blob(const std::string& path, const Tensor<T>& t) {
  auto bytes = blob_bytes(t);
  write_file_bytes(path, bytes.data(), bytes.size());
}

// Parse a blob from a byte range; advances *cursor. Used both for standalone
// files and for blobs embedded in checkpoints.
template <class T>
Tensor<T> parse_blob(const std::vector<unsigned char>& buf, size_t* cursor) {
  size_t c = *cursor;
  auto need = [&](size_t n) {
    if (c + n > buf.size()) fail(ErrorCategory::io, "tensor blob: truncated");
  };
  need(7);
  if (buf[c] != 'G' || buf[c + 1] != 'L' || buf[c + 2] != 'T' || buf[c + 3] != 'N')
    fail(ErrorCategory::io, "tensor blob: bad magic");
  if (buf[c + 4] != 1) fail(ErrorCategory::io, "tensor blob: unsupported version");
  if (buf[c + 5] != blob_dtype_code<T>())
    fail(ErrorCategory::io, "tensor blob: dtype mismatch (file has code " +
                                std::to_string(static_cast<int>(buf[c + 5])) + ")");
  const int ndim = buf[c + 6];
  c += 7;
  need(4 * static_cast<size_t>(ndim));
  Shape shape(ndim);
  for (int i = 0; i < ndim; ++i) {
    uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<uint32_t>(buf[c + k]) << (8 * k);
    shape[i] = static_cast<int>(v);
    c += 4;
  }
  const int64_t n = numel(shape);
  need(sizeof(T) * static_cast<size_t>(n));
  auto data = std::make_shared<std::vector<T>>(static_cast<size_t>(n));
  std::memcpy(data->data(), buf.data() + c, sizeof(T) * static_cast<size_t>(n));
  c += sizeof(T) * static_cast<size_t>(n);
  *cursor = c;
  return Tensor<T>(shape, std::move(data));
}

template <class T>
Tensor<T> read_blob(const std::string& path) {
  auto bytes = read_file_bytes(path);
  size_t cursor = 0;
  Tensor<T> t = parse_blob<T>(bytes, &cursor);
  if (cursor != bytes.size()) fail(ErrorCategory::io, "tensor blob: trailing bytes in " + path);
  return t;
}

// --- PGM (P5) --------------------------------------------------------------
// 8-bit grayscale; values scaled by 255 on write and divided by maxval on
// read. Accepts [H,W] or [N=1,1,H,W] tensors.

void write_pgm(const std::string& path, const std::vector<unsigned char>& pixels, int w, int h);

template <class T>
void write_pgm(const std::string& path, const Tensor<T>& img) {
  int H = 0, W = 0;
  if (img.ndim() == 2) {
    H = img.dim(0);
    W = img.dim(1);
  } else if (img.ndim() == 4 && img.dim(0) == 1 && img.dim(1) == 1) {
    H = img.dim(2);
    W = img.dim(3);
  } else {
    fail(ErrorCategory::shape, "write_pgm: want [H,W] or [1,1,H,W], got " + shape_str(img.shape));
  }
  std::vector<unsigned char> px(static_cast<size_t>(H) * W);
  for (size_t i = 0; i < px.size(); ++i) {
    double v = static_cast<double>(img[static_cast<int64_t>(i)]) * 255.0;
    v = v < 0 ? 0 : (v > 255 ? 255 : v);
    px[i] = static_cast<unsigned char>(v + 0.5);
  }
  write_pgm(path, px, W, H);
}

// Reads a P5 graymap into a [1,1,H,W] tensor with values in [0,1].
template <class T>
Tensor<T> read_pgm(const std::string& path);

extern template Tensor<float> read_pgm<float>(const std::string&);
extern template Tensor<double> read_pgm<double>(const std::string&);

}  // namespace glide
