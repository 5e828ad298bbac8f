#pragma once

#include <algorithm>
#include <cmath>

#include "glide/base.hpp"
#include "glide/tensor.hpp"

namespace glide {

// Inclusive pixel bounding box.
struct PixelBox {
  int r0 = 0, c0 = 0, r1 = -1, c1 = -1;
  bool empty() const { return r1 < r0 || c1 < c0; }
  int height() const { return r1 - r0 + 1; }
  int width() const { return c1 - c0 + 1; }
};

// Continuous crop window in source-image pixel coordinates.
struct CropSpec {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  double margin_fraction = 0.1;
  int resized_to = 224;
  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
};

template <class T>
PixelBox tight_bbox(const Tensor<T>& mask) {
  check_shape(mask.ndim() == 4 && mask.dim(0) == 1 && mask.dim(1) == 1,
              "tight_bbox: want [1,1,H,W], got " + shape_str(mask.shape));
  const int H = mask.dim(2), W = mask.dim(3);
  PixelBox b{H, W, -1, -1};
  const T* p = mask.ptr();
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c)
      if (p[static_cast<int64_t>(r) * W + c] > T(0)) {
        b.r0 = std::min(b.r0, r);
        b.c0 = std::min(b.c0, c);
        b.r1 = std::max(b.r1, r);
        b.c1 = std::max(b.c1, c);
      }
  return b;
}

// Centroid of positive mask pixels, in (row, col) pixel-center coordinates.
template <class T>
std::pair<double, double> mask_centroid(const Tensor<T>& mask) {
  const int H = mask.dim(2), W = mask.dim(3);
  const T* p = mask.ptr();
  double sr = 0, sc = 0, n = 0;
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c)
      if (p[static_cast<int64_t>(r) * W + c] > T(0)) {
        sr += r + 0.5;
        sc += c + 0.5;
        n += 1;
      }
  if (n == 0) fail(ErrorCategory::data, "mask_centroid: empty mask");
  return {sr / n, sc / n};
}

// Crop window construction: tight mask bbox, dilated by margin_fraction on
// each side, short side padded (centered) so the aspect ratio stays at or
// below max_aspect, then clipped to the image. Bounding the aspect keeps the
// square resize from stretching thin objects into degenerate slivers.
inline CropSpec make_crop_spec(const PixelBox& box, int image_h, int image_w, int out_size,
                               double margin_fraction = 0.1, double max_aspect = 2.5) {
  if (box.empty()) fail(ErrorCategory::data, "make_crop: empty mask");
  CropSpec s;
  s.margin_fraction = margin_fraction;
  s.resized_to = out_size;
  double x0 = box.c0, x1 = box.c1 + 1.0, y0 = box.r0, y1 = box.r1 + 1.0;
  const double w = x1 - x0, h = y1 - y0;
  x0 -= margin_fraction * w;
  x1 += margin_fraction * w;
  y0 -= margin_fraction * h;
  y1 += margin_fraction * h;
  double bw = x1 - x0, bh = y1 - y0;
  if (bw >= bh) {
    const double want = bw / max_aspect;
    if (bh < want) {
      const double grow = (want - bh) / 2.0;
      y0 -= grow;
      y1 += grow;
    }
  } else {
    const double want = bh / max_aspect;
    if (bw < want) {
      const double grow = (want - bw) / 2.0;
      x0 -= grow;
      x1 += grow;
    }
  }
  s.x0 = std::max(0.0, x0);
  s.y0 = std::max(0.0, y0);
  s.x1 = std::min(static_cast<double>(image_w), x1);
  s.y1 = std::min(static_cast<double>(image_h), y1);
  return s;
}

// Bilinear sample of channel plane `p` (H x W) at continuous pixel-center
// coordinates, clamped at the borders.
template <class T>
inline double bilinear_at(const T* p, int H, int W, double y, double x) {
  const double fy = y - 0.5, fx = x - 0.5;
  int y0 = static_cast<int>(std::floor(fy)), x0 = static_cast<int>(std::floor(fx));
  const double wy = fy - y0, wx = fx - x0;
  const int y1 = std::clamp(y0 + 1, 0, H - 1), x1 = std::clamp(x0 + 1, 0, W - 1);
  y0 = std::clamp(y0, 0, H - 1);
  x0 = std::clamp(x0, 0, W - 1);
  const double v00 = p[static_cast<int64_t>(y0) * W + x0], v01 = p[static_cast<int64_t>(y0) * W + x1];
  const double v10 = p[static_cast<int64_t>(y1) * W + x0], v11 = p[static_cast<int64_t>(y1) * W + x1];
  return (1 - wy) * ((1 - wx) * v00 + wx * v01) + wy * ((1 - wx) * v10 + wx * v11);
}

// Resample the crop window to out_size x out_size. The image is sampled
// bilinearly; the mask with nearest-neighbor so it stays binary.
template <class T>
struct Crop {
  Tensor<T> image;  // [1,3,S,S]
  Tensor<T> mask;   // [1,1,S,S], binary
  CropSpec spec;
  double mask_fraction = 0;  // positive fraction of the resized mask
};

template <class T>
Crop<T> make_crop(const Tensor<T>& image, const Tensor<T>& mask, int out_size = 224,
                  double margin_fraction = 0.1, double max_aspect = 2.5) {
  check_shape(image.ndim() == 4 && image.dim(0) == 1 && image.dim(1) == 3,
              "make_crop: want [1,3,H,W] image, got " + shape_str(image.shape));
  const int H = image.dim(2), W = image.dim(3);
  check_shape(mask.dim(2) == H && mask.dim(3) == W,
              "make_crop: image/mask size mismatch " + shape_str(mask.shape));
  Crop<T> out;
  out.spec = make_crop_spec(tight_bbox(mask), H, W, out_size, margin_fraction, max_aspect);
  const int S = out_size;
  out.image = Tensor<T>::zeros({1, 3, S, S});
  out.mask = Tensor<T>::zeros({1, 1, S, S});
  const double sx = out.spec.width() / S, sy = out.spec.height() / S;
  const int64_t plane = static_cast<int64_t>(H) * W;
  int64_t positives = 0;
  for (int r = 0; r < S; ++r) {
    const double y = out.spec.y0 + (r + 0.5) * sy;
    for (int c = 0; c < S; ++c) {
      const double x = out.spec.x0 + (c + 0.5) * sx;
      for (int ch = 0; ch < 3; ++ch)
        out.image[(static_cast<int64_t>(ch) * S + r) * S + c] =
            static_cast<T>(bilinear_at(image.ptr() + ch * plane, H, W, y, x));
      const int nr = std::clamp(static_cast<int>(std::floor(y)), 0, H - 1);
      const int nc = std::clamp(static_cast<int>(std::floor(x)), 0, W - 1);
      const T mv = mask.ptr()[static_cast<int64_t>(nr) * W + nc] > T(0) ? T(1) : T(0);
      out.mask[static_cast<int64_t>(r) * S + c] = mv;
      positives += (mv > T(0));
    }
  }
  out.mask_fraction = static_cast<double>(positives) / (static_cast<double>(S) * S);
  return out;
}

// Bilinear resize of an [N,C,H,W] tensor to [N,C,S,S]. Returns the input
// unchanged (shared buffer) when it is already that size.
template <class T>
Tensor<T> resize_image(const Tensor<T>& img, int S) {
  check_shape(img.ndim() == 4, "resize_image: want [N,C,H,W], got " + shape_str(img.shape));
  const int N = img.dim(0), C = img.dim(1), H = img.dim(2), W = img.dim(3);
  if (H == S && W == S) return img;
  Tensor<T> out = Tensor<T>::zeros({N, C, S, S});
  const double sy = static_cast<double>(H) / S, sx = static_cast<double>(W) / S;
  const int64_t plane = static_cast<int64_t>(H) * W;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const T* src = img.ptr() + (static_cast<int64_t>(n) * C + c) * plane;
      T* dst = out.ptr() + ((static_cast<int64_t>(n) * C + c) * S) * S;
      for (int r = 0; r < S; ++r)
        for (int q = 0; q < S; ++q)
          dst[static_cast<int64_t>(r) * S + q] =
              static_cast<T>(bilinear_at(src, H, W, (r + 0.5) * sy, (q + 0.5) * sx));
    }
  return out;
}

}  // namespace glide
