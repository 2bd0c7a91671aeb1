#pragma once

// On-disk formats.  Everything is little-endian and carries explicit shapes;
// readers fail loudly with the offending field named.
//
// RAPV video: "RAPV" u32(version=1) u32(T) u32(H) u32(W) f32(fps), then
// 3*T*H*W f32 samples as channel-major planes [3,T,H,W], values in [0,1].
//
// RAPM mask: "RAPM" u32(version=1) u32(T) u32(H) u32(W), then T*H*W u8
// samples in {0,1}, frame-major.
//
// PPM (P6) and PGM (P5) give single frames a form image viewers open.

#include <string>
#include <vector>

#include "rap/tensor.hpp"

namespace rap {

struct VideoClip {
  Tensor rgb;  // [3,T,H,W]
  float fps = 25.0f;
};

void write_video(const std::string& path, const VideoClip& v);
VideoClip read_video(const std::string& path);

void write_mask(const std::string& path, const Tensor& m);  // [T,H,W], 0/1
Tensor read_mask(const std::string& path);

void write_ppm(const std::string& path, const Tensor& frame);  // [3,H,W] in [0,1]
Tensor read_ppm(const std::string& path);
void write_pgm(const std::string& path, const Tensor& img);  // [H,W] in [0,1]

// shortest round-trip decimal form, stable across runs
std::string csv_num(double v);
std::string csv_join(const std::vector<double>& vals);

// splits one line on commas; no quoting, fields are plain numbers or names
std::vector<std::string> csv_split(const std::string& line);

}  // namespace rap
