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

#ifndef DUNET_SVG_HPP_
#define DUNET_SVG_HPP_

#include <string>
#include <vector>

#include "dunet/geometry.hpp"

namespace dunet {

// Self-contained SVG scatter plot of the x-y projection, colored by `values`
// over the fixed [vmin, vmax] scale (shared scales keep plots comparable).
void write_scatter_svg(const std::string& path, const std::vector<Vec3>& positions,
                       const std::vector<double>& values, double vmin, double vmax,
                       const std::string& title);

}  // namespace dunet

#endif  // DUNET_SVG_HPP_
