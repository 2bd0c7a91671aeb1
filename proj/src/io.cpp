#include "rap/io.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "rap/common.hpp"
#include "rap/wire.hpp"

namespace rap {

using namespace wire;

void write_video(const std::string& path, const VideoClip& v) {
  if (v.rgb.rank() != 4 || v.rgb.shape[0] != 3)
    throw ShapeError("expected video [3,T,H,W], got " + shape_str(v.rgb.shape));
  auto f = open_out(path);
  f.write("RAPV", 4);
  wr_u32(f, 1);
  wr_u32(f, checked_dim(v.rgb.shape[1], "frame count"));
  wr_u32(f, checked_dim(v.rgb.shape[2], "height"));
  wr_u32(f, checked_dim(v.rgb.shape[3], "width"));
  wr_f32(f, v.fps);
  for (size_t i = 0; i < v.rgb.numel(); ++i) wr_f32(f, v.rgb[i]);
  if (!f) throw FormatError("short write to " + path);
}

VideoClip read_video(const std::string& path) {
  auto f = open_in(path);
  expect_magic(f, "RAPV", path);
  uint32_t ver = rd_u32(f, "version");
  if (ver != 1)
    throw FormatError(path + ": unsupported video version " + std::to_string(ver));
  int T = int(rd_u32(f, "frame count"));
  int H = int(rd_u32(f, "height"));
  int W = int(rd_u32(f, "width"));
  if (T <= 0 || H <= 0 || W <= 0 || size_t(T) * H * W > (size_t(1) << 30))
    throw FormatError(path + ": unreasonable video dimensions");
  VideoClip v;
  v.fps = rd_f32(f, "fps");
  v.rgb = Tensor({3, T, H, W});
  for (size_t i = 0; i < v.rgb.numel(); ++i) v.rgb[i] = rd_f32(f, "pixel data");
  return v;
}

void write_mask(const std::string& path, const Tensor& m) {
  if (m.rank() != 3) throw ShapeError("expected mask [T,H,W], got " + shape_str(m.shape));
  auto f = open_out(path);
  f.write("RAPM", 4);
  wr_u32(f, 1);
  wr_u32(f, checked_dim(m.shape[0], "frame count"));
  wr_u32(f, checked_dim(m.shape[1], "height"));
  wr_u32(f, checked_dim(m.shape[2], "width"));
  for (size_t i = 0; i < m.numel(); ++i) {
    char b = m[i] != 0.0f ? 1 : 0;
    f.write(&b, 1);
  }
  if (!f) throw FormatError("short write to " + path);
}

Tensor read_mask(const std::string& path) {
  auto f = open_in(path);
  expect_magic(f, "RAPM", path);
  uint32_t ver = rd_u32(f, "version");
  if (ver != 1) throw FormatError(path + ": unsupported mask version " + std::to_string(ver));
  int T = int(rd_u32(f, "frame count"));
  int H = int(rd_u32(f, "height"));
  int W = int(rd_u32(f, "width"));
  if (T <= 0 || H <= 0 || W <= 0 || size_t(T) * H * W > (size_t(1) << 30))
    throw FormatError(path + ": unreasonable mask dimensions");
  Tensor m({T, H, W});
  std::vector<char> buf(m.numel());
  f.read(buf.data(), std::streamsize(buf.size()));
  if (!f) throw FormatError(path + ": truncated while reading mask data");
  for (size_t i = 0; i < m.numel(); ++i) {
    if (buf[i] != 0 && buf[i] != 1)
      throw FormatError(path + ": mask byte out of range");
    m[i] = float(buf[i]);
  }
  return m;
}

namespace {

unsigned char to_byte(float v) {
  float c = v < 0.0f ? 0.0f : v > 1.0f ? 1.0f : v;
  return (unsigned char)(std::lrint(double(c) * 255.0));
}

}  // namespace

void write_ppm(const std::string& path, const Tensor& frame) {
  if (frame.rank() != 3 || frame.shape[0] != 3)
    throw ShapeError("expected frame [3,H,W], got " + shape_str(frame.shape));
  int H = frame.shape[1], W = frame.shape[2];
  auto f = open_out(path);
  f << "P6\n" << W << " " << H << "\n255\n";
  const float* p = frame.data();
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c) {
        unsigned char b = to_byte(p[(size_t(c) * H + y) * W + x]);
        f.write(reinterpret_cast<const char*>(&b), 1);
      }
  if (!f) throw FormatError("short write to " + path);
}

Tensor read_ppm(const std::string& path) {
  auto f = open_in(path);
  std::string magic;
  f >> magic;
  if (magic != "P6") throw FormatError(path + ": expected P6 image");
  int W = 0, H = 0, maxv = 0;
  f >> W >> H >> maxv;
  if (!f || W <= 0 || H <= 0) throw FormatError(path + ": bad image dimensions");
  if (maxv != 255) throw FormatError(path + ": expected 8-bit samples, got max " +
                                     std::to_string(maxv));
  f.get();  // single whitespace after header
  Tensor out({3, H, W});
  std::vector<char> buf(size_t(3) * H * W);
  f.read(buf.data(), std::streamsize(buf.size()));
  if (!f) throw FormatError(path + ": truncated while reading pixel data");
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c)
        out.data()[(size_t(c) * H + y) * W + x] =
            float((unsigned char)buf[(size_t(y) * W + x) * 3 + c]) / 255.0f;
  return out;
}

void write_pgm(const std::string& path, const Tensor& img) {
  if (img.rank() != 2) throw ShapeError("expected image [H,W], got " + shape_str(img.shape));
  int H = img.shape[0], W = img.shape[1];
  auto f = open_out(path);
  f << "P5\n" << W << " " << H << "\n255\n";
  for (size_t i = 0; i < img.numel(); ++i) {
    unsigned char b = to_byte(img[i]);
    f.write(reinterpret_cast<const char*>(&b), 1);
  }
  if (!f) throw FormatError("short write to " + path);
}

std::string csv_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string csv_join(const std::vector<double>& vals) {
  std::string out;
  for (size_t i = 0; i < vals.size(); ++i) {
    if (i) out += ',';
    out += csv_num(vals[i]);
  }
  return out;
}

std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace rap
