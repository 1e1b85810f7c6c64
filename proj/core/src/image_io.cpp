// Copyright 2026 The GRaD-Nav Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "gradnav/image.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace gradnav {

namespace {

[[noreturn]] void fail(const std::string& msg) {
  throw std::runtime_error("image_io: " + msg);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot open " + path + " for writing");
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open " + path);
  return in;
}

uint8_t quantize(double v) {
  double c = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
  return static_cast<uint8_t>(std::lround(c * 255.0));
}

}  // namespace

void write_ppm(const Image& image, const std::string& path) {
  std::ofstream out = open_out(path);
  out << "P6\n" << image.width << " " << image.height << "\n255\n";
  std::vector<uint8_t> row(image.width * 3);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < 3; ++c)
        row[x * 3 + c] = quantize(image.at(y, x, c));
    out.write(reinterpret_cast<const char*>(row.data()), row.size());
  }
  if (!out) fail("short write to " + path);
}

Image read_ppm(const std::string& path) {
  std::ifstream in = open_in(path);
  std::string magic;
  int width, height, maxval;
  in >> magic >> width >> height >> maxval;
  if (magic != "P6" || maxval != 255) fail(path + ": unsupported PPM header");
  in.get();  // single whitespace after header
  Image img{width, height, std::vector<double>(width * height * 3)};
  std::vector<uint8_t> raw(width * height * 3);
  in.read(reinterpret_cast<char*>(raw.data()), raw.size());
  if (!in) fail(path + ": truncated pixel data");
  for (size_t i = 0; i < raw.size(); ++i) img.rgb[i] = raw[i] / 255.0;
  return img;
}

void write_pfm(const DepthImage& image, const std::string& path) {
  std::ofstream out = open_out(path);
  out << "Pf\n" << image.width << " " << image.height << "\n-1.0\n";
  std::vector<float> row(image.width);
  // PFM stores rows bottom-to-top.
  for (int y = image.height - 1; y >= 0; --y) {
    for (int x = 0; x < image.width; ++x)
      row[x] = static_cast<float>(image.at(y, x));
    out.write(reinterpret_cast<const char*>(row.data()),
              row.size() * sizeof(float));
  }
  if (!out) fail("short write to " + path);
}

DepthImage read_pfm(const std::string& path) {
  std::ifstream in = open_in(path);
  std::string magic;
  int width, height;
  double scale;
  in >> magic >> width >> height >> scale;
  if (magic != "Pf") fail(path + ": unsupported PFM header");
  if (scale > 0) fail(path + ": big-endian PFM is not supported");
  in.get();
  DepthImage img{width, height, std::vector<double>(width * height)};
  std::vector<float> row(width);
  for (int y = height - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(row.data()), row.size() * sizeof(float));
    if (!in) fail(path + ": truncated pixel data");
    for (int x = 0; x < width; ++x) img.at(y, x) = row[x];
  }
  return img;
}

}  // namespace gradnav
