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

#ifndef GRADNAV_IMAGE_HPP_
#define GRADNAV_IMAGE_HPP_

#include <string>
#include <vector>

namespace gradnav {

// Row-major interleaved RGB in [0,1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> rgb;  // height*width*3

  double& at(int y, int x, int c) { return rgb[(y * width + x) * 3 + c]; }
  double at(int y, int x, int c) const { return rgb[(y * width + x) * 3 + c]; }
};

// Row-major depth in meters.
struct DepthImage {
  int width = 0;
  int height = 0;
  std::vector<double> depth;  // height*width

  double& at(int y, int x) { return depth[y * width + x]; }
  double at(int y, int x) const { return depth[y * width + x]; }
};

// Binary PPM (P6, maxval 255).
void write_ppm(const Image& image, const std::string& path);
Image read_ppm(const std::string& path);

// Grayscale PFM (little-endian float32, bottom-up rows, scale -1).
void write_pfm(const DepthImage& image, const std::string& path);
DepthImage read_pfm(const std::string& path);

}  // namespace gradnav

#endif  // GRADNAV_IMAGE_HPP_
