#include "ctsynth/png.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

namespace ctsynth {

void write_png_gray(const std::filesystem::path& path, int rows, int cols, const std::vector<std::uint8_t>& pixels) {
  require(rows >= 1 && cols >= 1 && pixels.size() == static_cast<std::size_t>(rows) * cols, ErrorKind::shape,
          "png: pixel buffer does not match image size");
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.string().c_str(), "wb"), &std::fclose);
  require(fp != nullptr, ErrorKind::data, "png: cannot open '" + path.string() + "'");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorKind::data, "png: out of memory");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorKind::data, "png: write failed for '" + path.string() + "'");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(cols), static_cast<png_uint_32>(rows), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < rows; ++y)
    png_write_row(png, const_cast<png_bytep>(pixels.data() + static_cast<std::size_t>(y) * cols));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

int dump_view_png(const Volume& v, ViewAxis view, const std::filesystem::path& dir, const std::string& prefix) {
  std::filesystem::create_directories(dir);
  const double lo = v.range().lo, width = v.range().width();
  int count = 0;
  for (const ViewImage& img : decompose(v, view)) {
    std::vector<std::uint8_t> px(img.data.size());
    for (std::size_t i = 0; i < px.size(); ++i) {
      const double t = std::clamp((img.data[i] - lo) / width, 0.0, 1.0);
      px[i] = static_cast<std::uint8_t>(std::lround(255.0 * t));
    }
    char name[64];
    std::snprintf(name, sizeof name, "_%s_%04d.png", std::string(to_string(view)).c_str(), img.index);
    write_png_gray(dir / (prefix + name), img.data.dim(0), img.data.dim(1), px);
    ++count;
  }
  return count;
}

}  // namespace ctsynth
