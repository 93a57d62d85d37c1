#include "como/io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "como/errors.hpp"

namespace como {

namespace {

struct FileHandle {
  FILE* f = nullptr;
  FileHandle(const std::string& path, const char* mode) : f(std::fopen(path.c_str(), mode)) {
    if (!f) throw IoError("cannot open " + path);
  }
  ~FileHandle() {
    if (f) std::fclose(f);
  }
};

uint8_t quantize(float v) {
  float q = std::round(v * 255.0f);
  if (q < 0.0f) q = 0.0f;
  if (q > 255.0f) q = 255.0f;
  return static_cast<uint8_t>(q);
}

}  // namespace

void write_png(const std::string& path, const Tensor& chw) {
  if (chw.rank() != 3 || chw.dim(0) != 3)
    throw IoError("write_png expects a (3,H,W) tensor for " + path);
  int H = chw.dim(1), W = chw.dim(2);
  FileHandle fh(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_write_struct failed for " + path);
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png_create_info_struct failed for " + path);
  }
  std::vector<uint8_t> row(static_cast<size_t>(W) * 3);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png write error for " + path);
  }
  png_init_io(png, fh.f);
  png_set_IHDR(png, info, static_cast<png_uint_32>(W), static_cast<png_uint_32>(H), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const float* data = chw.data().data();
  long hw = static_cast<long>(H) * W;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c)
        row[static_cast<size_t>(x) * 3 + static_cast<size_t>(c)] =
            quantize(data[static_cast<long>(c) * hw + static_cast<long>(y) * W + x]);
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Tensor read_png(const std::string& path) {
  FileHandle fh(path, "rb");
  uint8_t sig[8];
  if (std::fread(sig, 1, 8, fh.f) != 8 || png_sig_cmp(sig, 0, 8))
    throw IoError("not a PNG file: " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_read_struct failed for " + path);
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("png_create_info_struct failed for " + path);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("png read error for " + path);
  }
  png_init_io(png, fh.f);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);

  int W = static_cast<int>(png_get_image_width(png, info));
  int H = static_cast<int>(png_get_image_height(png, info));
  std::vector<uint8_t> row(png_get_rowbytes(png, info));
  if (row.size() < static_cast<size_t>(W) * 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("unexpected PNG row layout in " + path);
  }
  std::vector<float> out(static_cast<size_t>(3) * H * W);
  long hw = static_cast<long>(H) * W;
  for (int y = 0; y < H; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c)
        out[static_cast<long>(c) * hw + static_cast<long>(y) * W + x] =
            static_cast<float>(row[static_cast<size_t>(x) * 3 + static_cast<size_t>(c)]) /
            255.0f;
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return Tensor::from_data({3, H, W}, std::move(out));
}

void write_cmt1(std::ostream& os, const Tensor& t) {
  os.write("CMT1", 4);
  uint8_t rank = static_cast<uint8_t>(t.rank());
  os.write(reinterpret_cast<const char*>(&rank), 1);
  for (int i = 0; i < t.rank(); ++i) {
    uint32_t e = static_cast<uint32_t>(t.dim(i));
    os.write(reinterpret_cast<const char*>(&e), 4);
  }
  os.write(reinterpret_cast<const char*>(t.data().data()),
           static_cast<std::streamsize>(t.numel() * sizeof(float)));
  if (!os) throw IoError("CMT1 write failed");
}

Tensor read_cmt1(std::istream& is, const std::string& context) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "CMT1", 4) != 0)
    throw IoError("bad CMT1 magic in " + context);
  uint8_t rank = 0;
  is.read(reinterpret_cast<char*>(&rank), 1);
  if (!is || rank == 0 || rank > 8) throw IoError("bad CMT1 rank in " + context);
  Shape shape(rank);
  long n = 1;
  for (int i = 0; i < rank; ++i) {
    uint32_t e = 0;
    is.read(reinterpret_cast<char*>(&e), 4);
    if (!is || e == 0) throw IoError("bad CMT1 extent in " + context);
    shape[static_cast<size_t>(i)] = static_cast<int>(e);
    n *= e;
  }
  std::vector<float> data(static_cast<size_t>(n));
  is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(n * sizeof(float)));
  if (!is) throw IoError("truncated CMT1 payload in " + context);
  return Tensor::from_data(std::move(shape), std::move(data));
}

void write_cmt1_file(const std::string& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path);
  write_cmt1(os, t);
}

Tensor read_cmt1_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  return read_cmt1(is, path);
}

void Fnv1a::update(const void* data, size_t n) {
  const uint8_t* p = static_cast<const uint8_t*>(data);
  for (size_t i = 0; i < n; ++i) {
    state ^= p[i];
    state *= 1099511628211ull;
  }
}

std::string hex64(uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

std::string read_text_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path);
  os << content;
  if (!os) throw IoError("write failed for " + path);
}

}  // namespace como
