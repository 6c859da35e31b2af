// Copyright (c) 2026 The dunet Authors
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

#include "dunet/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "dunet/errors.hpp"

namespace dunet {

namespace {

struct Color {
  int r, g, b;
};

// Compact viridis-like ramp.
constexpr Color kStops[] = {
    {68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}};

Color ramp(double t) {
  t = std::clamp(t, 0.0, 1.0);
  double x = t * 3.999;
  int i = static_cast<int>(x);
  double f = x - i;
  const Color& a = kStops[i];
  const Color& b = kStops[i + 1];
  return {static_cast<int>(a.r + f * (b.r - a.r)), static_cast<int>(a.g + f * (b.g - a.g)),
          static_cast<int>(a.b + f * (b.b - a.b))};
}

}  // namespace

void write_scatter_svg(const std::string& path, const std::vector<Vec3>& positions,
                       const std::vector<double>& values, double vmin, double vmax,
                       const std::string& title) {
  if (positions.size() != values.size() || positions.empty()) {
    throw ArgumentError("scatter plot needs one value per point");
  }
  const double W = 640, H = 640, margin = 40, bar_w = 20;

  double xlo = positions[0][0], xhi = xlo, ylo = positions[0][1], yhi = ylo;
  for (const Vec3& p : positions) {
    xlo = std::min(xlo, p[0]);
    xhi = std::max(xhi, p[0]);
    ylo = std::min(ylo, p[1]);
    yhi = std::max(yhi, p[1]);
  }
  double span = std::max({xhi - xlo, yhi - ylo, 1e-12});
  double plot = W - 2 * margin - bar_w - 20;
  auto sx = [&](double x) { return margin + (x - xlo) / span * plot; };
  auto sy = [&](double y) { return H - margin - (y - ylo) / span * plot; };
  double vspan = std::max(vmax - vmin, 1e-300);

  std::ofstream os(path);
  if (!os) throw ArgumentError("cannot open '" + path + "' for writing");
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
  os << "  <rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  os << "  <text x=\"" << margin << "\" y=\"24\" font-family=\"monospace\" font-size=\"14\">"
     << title << "</text>\n";
  for (std::size_t i = 0; i < positions.size(); ++i) {
    Color c = ramp((values[i] - vmin) / vspan);
    os << "  <circle cx=\"" << sx(positions[i][0]) << "\" cy=\"" << sy(positions[i][1])
       << "\" r=\"3\" fill=\"rgb(" << c.r << "," << c.g << "," << c.b << ")\"/>\n";
  }
  // Color bar.
  double bx = W - margin - bar_w;
  int steps = 32;
  double bh = (H - 2 * margin) / steps;
  for (int s = 0; s < steps; ++s) {
    Color c = ramp(1.0 - static_cast<double>(s) / (steps - 1));
    os << "  <rect x=\"" << bx << "\" y=\"" << margin + s * bh << "\" width=\"" << bar_w
       << "\" height=\"" << bh + 0.5 << "\" fill=\"rgb(" << c.r << "," << c.g << "," << c.b
       << ")\"/>\n";
  }
  os << "  <text x=\"" << bx - 4 << "\" y=\"" << margin + 10
     << "\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"end\">" << vmax
     << "</text>\n";
  os << "  <text x=\"" << bx - 4 << "\" y=\"" << H - margin
     << "\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"end\">" << vmin
     << "</text>\n";
  os << "</svg>\n";
  if (!os) throw ArgumentError("failed writing '" + path + "'");
}

}  // namespace dunet
