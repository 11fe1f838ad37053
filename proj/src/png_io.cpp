#include "poisonbench/png_io.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "poisonbench/common.hpp"

namespace poisonbench {

namespace {

const uint8_t kSignature[8] = {137, 80, 78, 71, 13, 10, 26, 10};

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v >> 24));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v));
}

uint32_t get_u32(const uint8_t* p) {
  return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
         (static_cast<uint32_t>(p[2]) << 8) | static_cast<uint32_t>(p[3]);
}

void write_chunk(std::vector<uint8_t>& out, const char type[4],
                 const uint8_t* data, size_t len) {
  put_u32(out, static_cast<uint32_t>(len));
  size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  if (len) out.insert(out.end(), data, data + len);
  uint32_t crc = crc32(0, out.data() + start, static_cast<uInt>(4 + len));
  put_u32(out, crc);
}

std::vector<uint8_t> deflate_all(const std::vector<uint8_t>& raw) {
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<uint8_t> out(bound);
  if (compress2(out.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw FormatError("png: deflate failed");
  out.resize(bound);
  return out;
}

std::vector<uint8_t> inflate_all(const uint8_t* data, size_t len, size_t expect) {
  std::vector<uint8_t> out(expect);
  uLongf dst = static_cast<uLongf>(expect);
  int rc = uncompress(out.data(), &dst, data, static_cast<uLong>(len));
  if (rc != Z_OK || dst != expect) throw FormatError("png: inflate failed");
  return out;
}

int paeth(int a, int b, int c) {
  int p = a + b - c;
  int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

}  // namespace

std::vector<uint8_t> encode_png(const Image& img) {
  if (img.c != 1 && img.c != 3)
    throw FormatError("png: only grayscale or RGB images are supported");
  if (img.h <= 0 || img.w <= 0) throw FormatError("png: empty image");

  const int bpp = img.c;
  // Interleave CHW -> scanlines, filter type 0 per row.
  std::vector<uint8_t> raw;
  raw.reserve(static_cast<size_t>(img.h) * (1 + static_cast<size_t>(img.w) * bpp));
  for (int y = 0; y < img.h; ++y) {
    raw.push_back(0);
    for (int x = 0; x < img.w; ++x)
      for (int ch = 0; ch < img.c; ++ch) raw.push_back(img.at(ch, y, x));
  }

  std::vector<uint8_t> out(kSignature, kSignature + 8);
  uint8_t ihdr[13];
  ihdr[0] = static_cast<uint8_t>(img.w >> 24);
  ihdr[1] = static_cast<uint8_t>(img.w >> 16);
  ihdr[2] = static_cast<uint8_t>(img.w >> 8);
  ihdr[3] = static_cast<uint8_t>(img.w);
  ihdr[4] = static_cast<uint8_t>(img.h >> 24);
  ihdr[5] = static_cast<uint8_t>(img.h >> 16);
  ihdr[6] = static_cast<uint8_t>(img.h >> 8);
  ihdr[7] = static_cast<uint8_t>(img.h);
  ihdr[8] = 8;                                    // bit depth
  ihdr[9] = (img.c == 1) ? 0 : 2;                 // color type
  ihdr[10] = ihdr[11] = ihdr[12] = 0;             // deflate, no interlace
  write_chunk(out, "IHDR", ihdr, 13);
  auto idat = deflate_all(raw);
  write_chunk(out, "IDAT", idat.data(), idat.size());
  write_chunk(out, "IEND", nullptr, 0);
  return out;
}

Image decode_png(const uint8_t* data, size_t len) {
  if (len < 8 || std::memcmp(data, kSignature, 8) != 0)
    throw FormatError("png: bad signature");
  size_t pos = 8;
  int w = 0, h = 0, color = -1, depth = 0, interlace = 0;
  std::vector<uint8_t> idat;
  bool seen_iend = false;
  while (pos + 8 <= len && !seen_iend) {
    uint32_t clen = get_u32(data + pos);
    if (pos + 12 + clen > len) throw FormatError("png: truncated chunk");
    const char* type = reinterpret_cast<const char*>(data + pos + 4);
    const uint8_t* body = data + pos + 8;
    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (clen != 13) throw FormatError("png: bad IHDR");
      w = static_cast<int>(get_u32(body));
      h = static_cast<int>(get_u32(body + 4));
      depth = body[8];
      color = body[9];
      interlace = body[12];
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), body, body + clen);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      seen_iend = true;
    }
    pos += 12 + clen;
  }
  if (w <= 0 || h <= 0) throw FormatError("png: missing IHDR");
  if (depth != 8 || (color != 0 && color != 2))
    throw FormatError("png: only 8-bit grayscale/RGB supported");
  if (interlace != 0) throw FormatError("png: interlaced images not supported");

  const int c = (color == 0) ? 1 : 3;
  const size_t stride = static_cast<size_t>(w) * c;
  auto raw = inflate_all(idat.data(), idat.size(), static_cast<size_t>(h) * (stride + 1));

  // Unfilter in place, then de-interleave into CHW.
  std::vector<uint8_t> prev(stride, 0);
  Image img(c, h, w);
  std::vector<uint8_t> cur(stride);
  for (int y = 0; y < h; ++y) {
    const uint8_t* row = raw.data() + static_cast<size_t>(y) * (stride + 1);
    uint8_t filter = row[0];
    const uint8_t* src = row + 1;
    for (size_t i = 0; i < stride; ++i) {
      int a = (i >= static_cast<size_t>(c)) ? cur[i - c] : 0;
      int b = prev[i];
      int cc = (i >= static_cast<size_t>(c)) ? prev[i - c] : 0;
      int x = src[i];
      switch (filter) {
        case 0: break;
        case 1: x += a; break;
        case 2: x += b; break;
        case 3: x += (a + b) / 2; break;
        case 4: x += paeth(a, b, cc); break;
        default: throw FormatError("png: unknown filter type");
      }
      cur[i] = static_cast<uint8_t>(x & 0xff);
    }
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch)
        img.at(ch, y, x) = cur[static_cast<size_t>(x) * c + ch];
    std::swap(prev, cur);
  }
  return img;
}

void write_png(const std::string& path, const Image& img) {
  auto bytes = encode_png(img);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("png: cannot open for writing: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw FormatError("png: write failed: " + path);
}

Image read_png(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("png: cannot open: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
  return decode_png(bytes.data(), bytes.size());
}

}  // namespace poisonbench
