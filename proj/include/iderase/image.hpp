#pragma once

#include <jpeglib.h>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "iderase/common.hpp"
#include "iderase/tensor.hpp"

namespace iderase {

// Images are CHW float tensors with 3 channels in [-1, 1]. 8-bit codes map
// through t = 2*u/255 - 1, which round-trips every code exactly.

inline float u8_to_unit(std::uint8_t u) {
  return static_cast<float>(2.0 * u / 255.0 - 1.0);
}

inline std::uint8_t unit_to_u8(float t) {
  double u = std::lround((static_cast<double>(t) + 1.0) * 255.0 / 2.0);
  return static_cast<std::uint8_t>(std::clamp<double>(u, 0.0, 255.0));
}

inline Tensor<float> from_u8_rgb(const std::vector<std::uint8_t>& hwc,
                                 std::int64_t h, std::int64_t w) {
  check(static_cast<std::int64_t>(hwc.size()) == h * w * 3,
        "from_u8_rgb: buffer size mismatch");
  Tensor<float> t({3, h, w});
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x)
      for (std::int64_t c = 0; c < 3; ++c)
        t.v[c * h * w + y * w + x] = u8_to_unit(hwc[(y * w + x) * 3 + c]);
  return t;
}

inline std::vector<std::uint8_t> to_u8_rgb(const Tensor<float>& chw) {
  check(chw.ndim() == 3 && chw.dim(0) == 3, "to_u8_rgb: need 3xHxW input");
  std::int64_t h = chw.dim(1), w = chw.dim(2);
  std::vector<std::uint8_t> out(static_cast<std::size_t>(h * w * 3));
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x)
      for (std::int64_t c = 0; c < 3; ++c)
        out[(y * w + x) * 3 + c] = unit_to_u8(chw.v[c * h * w + y * w + x]);
  return out;
}

// Clamp to the representable image range.
inline Tensor<float> clamp_unit(Tensor<float> t) {
  for (auto& x : t.v) x = std::clamp(x, -1.0f, 1.0f);
  return t;
}

// Plain bilinear resize (half-pixel centers, edge clamp). Non-differentiable
// utility for data loading; training-time resizing lives in the
// interference layer.
inline Tensor<float> bilinear_resize(const Tensor<float>& src, std::int64_t oh,
                                     std::int64_t ow) {
  check(src.ndim() == 3, "bilinear_resize: need CHW input");
  check(oh > 0 && ow > 0, "bilinear_resize: bad output size");
  std::int64_t c = src.dim(0), h = src.dim(1), w = src.dim(2);
  if (oh == h && ow == w) return src;
  Tensor<float> out({c, oh, ow});
  double sy = static_cast<double>(h) / oh, sx = static_cast<double>(w) / ow;
  for (std::int64_t y = 0; y < oh; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    std::int64_t y0 = static_cast<std::int64_t>(std::floor(fy));
    double wy = fy - y0;
    std::int64_t ya = std::clamp<std::int64_t>(y0, 0, h - 1);
    std::int64_t yb = std::clamp<std::int64_t>(y0 + 1, 0, h - 1);
    for (std::int64_t x = 0; x < ow; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      std::int64_t x0 = static_cast<std::int64_t>(std::floor(fx));
      double wx = fx - x0;
      std::int64_t xa = std::clamp<std::int64_t>(x0, 0, w - 1);
      std::int64_t xb = std::clamp<std::int64_t>(x0 + 1, 0, w - 1);
      for (std::int64_t ci = 0; ci < c; ++ci) {
        const float* p = src.data() + ci * h * w;
        double v = (1 - wy) * ((1 - wx) * p[ya * w + xa] + wx * p[ya * w + xb]) +
                   wy * ((1 - wx) * p[yb * w + xa] + wx * p[yb * w + xb]);
        out.v[ci * oh * ow + y * ow + x] = static_cast<float>(v);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// PNG
// ---------------------------------------------------------------------------

// Writes 8-bit RGB with optional tEXt entries (sorted by key, so output bytes
// are deterministic).
inline void png_write(const std::filesystem::path& path, const Tensor<float>& chw,
                      const std::map<std::string, std::string>& text = {}) {
  check(chw.ndim() == 3 && chw.dim(0) == 3, "png_write: need 3xHxW input");
  std::int64_t h = chw.dim(1), w = chw.dim(2);
  std::vector<std::uint8_t> rgb = to_u8_rgb(chw);

  std::FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) throw RuntimeFailure("cannot open for write: " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw RuntimeFailure("png writer init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw RuntimeFailure("png write failed: " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h),
               8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  std::vector<png_text> texts;
  texts.reserve(text.size());
  for (const auto& [k, v] : text) {
    png_text t{};
    t.compression = PNG_TEXT_COMPRESSION_NONE;
    t.key = const_cast<char*>(k.c_str());
    t.text = const_cast<char*>(v.c_str());
    t.text_length = v.size();
    texts.push_back(t);
  }
  if (!texts.empty())
    png_set_text(png, info, texts.data(), static_cast<int>(texts.size()));
  png_write_info(png, info);
  std::vector<png_bytep> rows(static_cast<std::size_t>(h));
  for (std::int64_t y = 0; y < h; ++y) rows[static_cast<std::size_t>(y)] = rgb.data() + y * w * 3;
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

struct PngImage {
  Tensor<float> chw;
  std::map<std::string, std::string> text;
};

inline PngImage png_read(const std::filesystem::path& path) {
  std::FILE* fp = std::fopen(path.string().c_str(), "rb");
  if (!fp) throw RuntimeFailure("cannot open image: " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                           nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw RuntimeFailure("png reader init failed");
  }
  std::vector<std::uint8_t> rgb;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw RuntimeFailure("png read failed (corrupt or not a png): " +
                         path.string());
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  png_uint_32 w = png_get_image_width(png, info);
  png_uint_32 h = png_get_image_height(png, info);
  int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  rgb.resize(static_cast<std::size_t>(w) * h * 3);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y)
    rows[y] = rgb.data() + static_cast<std::size_t>(y) * w * 3;
  png_read_image(png, rows.data());

  PngImage out;
  png_textp texts = nullptr;
  int n_text = 0;
  if (png_get_text(png, info, &texts, &n_text) > 0)
    for (int i = 0; i < n_text; ++i)
      out.text[texts[i].key] = texts[i].text ? texts[i].text : "";
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);

  out.chw = from_u8_rgb(rgb, static_cast<std::int64_t>(h), static_cast<std::int64_t>(w));
  return out;
}

// ---------------------------------------------------------------------------
// JPEG (in-memory, used by the compression degradation)
// ---------------------------------------------------------------------------

namespace detail {
struct JpegErr {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
};

inline void jpeg_err_exit(j_common_ptr cinfo) {
  auto* e = reinterpret_cast<JpegErr*>(cinfo->err);
  std::longjmp(e->jump, 1);
}
}  // namespace detail

inline std::vector<std::uint8_t> jpeg_encode(const Tensor<float>& chw, int quality) {
  check(chw.ndim() == 3 && chw.dim(0) == 3, "jpeg_encode: need 3xHxW input");
  check(quality >= 1 && quality <= 100, "jpeg_encode: quality out of range");
  std::int64_t h = chw.dim(1), w = chw.dim(2);
  std::vector<std::uint8_t> rgb = to_u8_rgb(chw);

  jpeg_compress_struct cinfo{};
  detail::JpegErr err{};
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = detail::jpeg_err_exit;
  unsigned char* mem = nullptr;
  unsigned long mem_size = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&cinfo);
    if (mem) free(mem);
    throw RuntimeFailure("jpeg encode failed");
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, &mem, &mem_size);
  cinfo.image_width = static_cast<JDIMENSION>(w);
  cinfo.image_height = static_cast<JDIMENSION>(h);
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row = rgb.data() + static_cast<std::size_t>(cinfo.next_scanline) * w * 3;
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  std::vector<std::uint8_t> out(mem, mem + mem_size);
  free(mem);
  return out;
}

inline Tensor<float> jpeg_decode(const std::vector<std::uint8_t>& bytes) {
  jpeg_decompress_struct cinfo{};
  detail::JpegErr err{};
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = detail::jpeg_err_exit;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw RuntimeFailure("jpeg decode failed (corrupt stream)");
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  std::int64_t w = cinfo.output_width, h = cinfo.output_height;
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(w) * h * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = rgb.data() + static_cast<std::size_t>(cinfo.output_scanline) * w * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return from_u8_rgb(rgb, h, w);
}

// Encode/decode through the real codec at the given quality.
inline Tensor<float> jpeg_roundtrip(const Tensor<float>& chw, int quality) {
  return jpeg_decode(jpeg_encode(chw, quality));
}

}  // namespace iderase
