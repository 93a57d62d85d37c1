#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "como/tensor.hpp"

namespace como {

// 8-bit RGB PNG. Input/output images are (3,H,W) float tensors in [0,1];
// writing quantizes with round(v*255).
void write_png(const std::string& path, const Tensor& chw);
Tensor read_png(const std::string& path);

// CMT1 binary tensor container: magic "CMT1", u8 rank, rank x u32
// little-endian extents, then f32 little-endian payload. Used for
// checkpoints and dataset caches.
void write_cmt1(std::ostream& os, const Tensor& t);
Tensor read_cmt1(std::istream& is, const std::string& context);
void write_cmt1_file(const std::string& path, const Tensor& t);
Tensor read_cmt1_file(const std::string& path);

// FNV-1a 64-bit, used for config hashes and dataset digests.
struct Fnv1a {
  uint64_t state = 1469598103934665603ull;
  void update(const void* data, size_t n);
  void update_u8(uint8_t b) { update(&b, 1); }
  void update_string(const std::string& s) { update(s.data(), s.size()); }
  uint64_t digest() const { return state; }
};

std::string hex64(uint64_t v);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace como
