#pragma once

#include <string>

#include "como/tensor.hpp"

namespace como {

// 5x7 bitmap glyphs for digits and a few punctuation marks; enough for
// dataset glyph rendering and for baking numeric labels into result images.
// Returns row bitmasks (bit 4 = leftmost column); unknown characters map to
// a blank glyph.
const unsigned char* glyph5x7(char c);

// Draws text starting at (x, y) into a CHW image, one pixel per glyph cell
// scaled by `scale`, RGB color, clipped at the image border.
void draw_text(Tensor& chw, const std::string& text, int x, int y, int scale, float r, float g,
               float b);

}  // namespace como
