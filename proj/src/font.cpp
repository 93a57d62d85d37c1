#include "como/font.hpp"

namespace como {

namespace {

// Row-major 5x7 bitmasks, bit 4 = leftmost pixel.
constexpr unsigned char kDigits[10][7] = {
    {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E},  // 0
    {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E},  // 1
    {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F},  // 2
    {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E},  // 3
    {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02},  // 4
    {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E},  // 5
    {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E},  // 6
    {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},  // 7
    {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E},  // 8
    {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C},  // 9
};
constexpr unsigned char kDot[7] = {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C};
constexpr unsigned char kMinus[7] = {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00};
constexpr unsigned char kPlus[7] = {0x00, 0x04, 0x04, 0x1F, 0x04, 0x04, 0x00};
constexpr unsigned char kColon[7] = {0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00};
constexpr unsigned char kBlank[7] = {0, 0, 0, 0, 0, 0, 0};

}  // namespace

const unsigned char* glyph5x7(char c) {
  if (c >= '0' && c <= '9') return kDigits[c - '0'];
  switch (c) {
    case '.': return kDot;
    case '-': return kMinus;
    case '+': return kPlus;
    case ':': return kColon;
    default: return kBlank;
  }
}

void draw_text(Tensor& chw, const std::string& text, int x, int y, int scale, float r, float g,
               float b) {
  int H = chw.dim(1), W = chw.dim(2);
  long hw = static_cast<long>(H) * W;
  float* data = chw.mutable_data().data();
  float rgb[3] = {r, g, b};
  int cx = x;
  for (char c : text) {
    const unsigned char* glyph = glyph5x7(c);
    for (int row = 0; row < 7; ++row)
      for (int col = 0; col < 5; ++col) {
        if (!(glyph[row] & (1 << (4 - col)))) continue;
        for (int sy = 0; sy < scale; ++sy)
          for (int sx = 0; sx < scale; ++sx) {
            int py = y + row * scale + sy;
            int px = cx + col * scale + sx;
            if (py < 0 || py >= H || px < 0 || px >= W) continue;
            for (int ch = 0; ch < 3; ++ch)
              data[static_cast<long>(ch) * hw + static_cast<long>(py) * W + px] = rgb[ch];
          }
      }
    cx += 6 * scale;
  }
}

}  // namespace como
