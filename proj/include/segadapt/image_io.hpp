#pragma once

#include <zlib.h>

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "segadapt/domains.hpp"

namespace segadapt {

// -----------------------------------------------------------------------
// Minimal PNG writer: 8-bit RGB, filter 0 rows, one zlib stream. Output
// bytes are a pure function of the pixel data.
// -----------------------------------------------------------------------

namespace detail {

inline void push_u32(std::vector<unsigned char>& v, uint32_t x) {
  v.push_back(static_cast<unsigned char>(x >> 24));
  v.push_back(static_cast<unsigned char>(x >> 16));
  v.push_back(static_cast<unsigned char>(x >> 8));
  v.push_back(static_cast<unsigned char>(x));
}

inline void push_chunk(std::vector<unsigned char>& out, const char type[4],
                       const std::vector<unsigned char>& data) {
  push_u32(out, static_cast<uint32_t>(data.size()));
  const size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const uint32_t crc = static_cast<uint32_t>(
      ::crc32(0, out.data() + start, static_cast<uInt>(out.size() - start)));
  push_u32(out, crc);
}

}  // namespace detail

// rgb: H*W*3 bytes, row-major
inline void write_png(const std::string& path, const unsigned char* rgb, int H,
                      int W) {
  std::vector<unsigned char> raw;
  raw.reserve(static_cast<size_t>(H) * (W * 3 + 1));
  for (int i = 0; i < H; ++i) {
    raw.push_back(0);  // filter type 0
    raw.insert(raw.end(), rgb + static_cast<size_t>(i) * W * 3,
               rgb + static_cast<size_t>(i + 1) * W * 3);
  }
  uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
  std::vector<unsigned char> z(zlen);
  if (compress2(z.data(), &zlen, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK)
    throw IoError("png: compression failed");
  z.resize(zlen);

  std::vector<unsigned char> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<unsigned char> ihdr;
  detail::push_u32(ihdr, static_cast<uint32_t>(W));
  detail::push_u32(ihdr, static_cast<uint32_t>(H));
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // color type: truecolor
  ihdr.push_back(0);   // compression
  ihdr.push_back(0);   // filter
  ihdr.push_back(0);   // interlace
  detail::push_chunk(out, "IHDR", ihdr);
  detail::push_chunk(out, "IDAT", z);
  detail::push_chunk(out, "IEND", {});

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("png: cannot open '" + path + "'");
  f.write(reinterpret_cast<const char*>(out.data()),
          static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("png: write failed for '" + path + "'");
}

inline unsigned char to_byte(float v) {
  const float c = std::min(std::max(v, 0.0f), 1.0f);
  return static_cast<unsigned char>(std::lround(c * 255.0f));
}

// {3,H,W} float image in [0,1] -> interleaved bytes
inline std::vector<unsigned char> image_bytes(const Image& img) {
  const int H = img.dim(1), W = img.dim(2);
  std::vector<unsigned char> rgb(static_cast<size_t>(H) * W * 3);
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j)
      for (int c = 0; c < 3; ++c)
        rgb[(static_cast<size_t>(i) * W + j) * 3 + c] = to_byte(img.at(c, i, j));
  return rgb;
}

inline void write_image_png(const std::string& path, const Image& img) {
  auto rgb = image_bytes(img);
  write_png(path, rgb.data(), img.dim(1), img.dim(2));
}

// single-channel label file: class index in the red channel, 0 elsewhere,
// plus a colorized variant using a palette
inline void write_label_png(const std::string& path, const LabelMap& lab) {
  const int H = lab.dim(0), W = lab.dim(1);
  std::vector<unsigned char> rgb(static_cast<size_t>(H) * W * 3, 0);
  for (size_t k = 0; k < lab.numel(); ++k) rgb[k * 3] = lab[k];
  write_png(path, rgb.data(), H, W);
}

inline Image colorize_labels(const LabelMap& lab,
                             const std::vector<std::array<float, 3>>& palette) {
  const int H = lab.dim(0), W = lab.dim(1);
  Image img({3, H, W});
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      const auto& col = palette[lab.at(i, j)];
      for (int c = 0; c < 3; ++c) img.at(c, i, j) = col[c];
    }
  return img;
}

inline Image overlay(const Image& img, const Image& color, float alpha = 0.5f) {
  Image out(img.shape());
  for (size_t i = 0; i < img.numel(); ++i)
    out[i] = (1 - alpha) * img[i] + alpha * color[i];
  return out;
}

// grid montage with 2px separators; all tiles must share one size
inline Image montage(const std::vector<Image>& tiles, int columns) {
  if (tiles.empty()) throw ConfigError("montage: no tiles");
  const int H = tiles[0].dim(1), W = tiles[0].dim(2);
  const int rows = (static_cast<int>(tiles.size()) + columns - 1) / columns;
  const int sep = 2;
  Image out = Image({3, rows * H + (rows - 1) * sep,
                     columns * W + (columns - 1) * sep});
  out.fill(1.0f);
  for (size_t t = 0; t < tiles.size(); ++t) {
    if (!tiles[t].same_shape(tiles[0]))
      throw ShapeError("montage: tile size mismatch");
    const int r = static_cast<int>(t) / columns, c = static_cast<int>(t) % columns;
    for (int ch = 0; ch < 3; ++ch)
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j)
          out.at(ch, r * (H + sep) + i, c * (W + sep) + j) = tiles[t].at(ch, i, j);
  }
  return out;
}

// -----------------------------------------------------------------------
// Loss curves and sweep results: CSV plus an SVG line plot
// -----------------------------------------------------------------------

struct Series {
  std::vector<std::string> columns;          // columns[0] is the x axis
  std::vector<std::vector<double>> rows;
};

inline std::string series_csv(const Series& s) {
  std::string out;
  for (size_t c = 0; c < s.columns.size(); ++c) {
    if (c) out += ",";
    out += s.columns[c];
  }
  out += "\n";
  char buf[64];
  for (const auto& row : s.rows) {
    for (size_t c = 0; c < row.size(); ++c) {
      if (c) out += ",";
      std::snprintf(buf, sizeof(buf), "%.8g", row[c]);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!f) throw IoError("write failed for '" + path + "'");
}

// one polyline per y column against column 0
inline std::string series_svg(const Series& s, const std::string& title) {
  const int W = 720, H = 420, ml = 70, mr = 20, mt = 40, mb = 50;
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c",
                                  "#9467bd", "#ff7f0e", "#8c564b"};
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& r : s.rows) {
    xmin = std::min(xmin, r[0]);
    xmax = std::max(xmax, r[0]);
    for (size_t c = 1; c < r.size(); ++c) {
      ymin = std::min(ymin, r[c]);
      ymax = std::max(ymax, r[c]);
    }
  }
  if (s.rows.empty()) xmin = xmax = ymin = ymax = 0;
  if (xmax <= xmin) xmax = xmin + 1;
  if (ymax <= ymin) ymax = ymin + 1;
  auto sx = [&](double x) {
    return ml + (x - xmin) / (xmax - xmin) * (W - ml - mr);
  };
  auto sy = [&](double y) {
    return H - mb - (y - ymin) / (ymax - ymin) * (H - mt - mb);
  };
  char buf[256];
  std::string svg =
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(W) +
      "\" height=\"" + std::to_string(H) + "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof(buf),
                "<text x=\"%d\" y=\"24\" font-family=\"monospace\" font-size=\"16\">%s</text>\n",
                ml, title.c_str());
  svg += buf;
  // axes
  std::snprintf(buf, sizeof(buf),
                "<line x1=\"%d\" y1=\"%d\" x2=\"%d\" y2=\"%d\" stroke=\"black\"/>\n",
                ml, H - mb, W - mr, H - mb);
  svg += buf;
  std::snprintf(buf, sizeof(buf),
                "<line x1=\"%d\" y1=\"%d\" x2=\"%d\" y2=\"%d\" stroke=\"black\"/>\n",
                ml, mt, ml, H - mb);
  svg += buf;
  for (int t = 0; t <= 4; ++t) {
    const double xv = xmin + (xmax - xmin) * t / 4;
    const double yv = ymin + (ymax - ymin) * t / 4;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.1f\" y=\"%d\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"middle\">%.4g</text>\n",
                  sx(xv), H - mb + 18, xv);
    svg += buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%d\" y=\"%.1f\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"end\">%.4g</text>\n",
                  ml - 6, sy(yv) + 4, yv);
    svg += buf;
  }
  // series
  for (size_t c = 1; c < s.columns.size(); ++c) {
    std::string pts;
    for (const auto& r : s.rows) {
      std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", sx(r[0]), sy(r[c]));
      pts += buf;
    }
    std::snprintf(buf, sizeof(buf),
                  "<polyline fill=\"none\" stroke=\"%s\" stroke-width=\"1.5\" points=\"%s\"/>\n",
                  kColors[(c - 1) % 6], pts.c_str());
    svg += buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%d\" y=\"%d\" font-family=\"monospace\" font-size=\"12\" fill=\"%s\">%s</text>\n",
                  W - mr - 140, mt + 16 * static_cast<int>(c), kColors[(c - 1) % 6],
                  s.columns[c].c_str());
    svg += buf;
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace segadapt
