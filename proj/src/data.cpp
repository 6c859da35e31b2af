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

#include "dunet/data.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dunet/errors.hpp"

namespace dunet {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::uint64_t child_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Vec3 rotate_z(const Vec3& p, double angle) {
  double c = std::cos(angle), s = std::sin(angle);
  return {c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]};
}

// --- primitive surface samplers (unit-ish canonical sizes) -----------------

Vec3 sample_sphere(Rng& rng) {
  double z = rng.uniform(-1.0, 1.0);
  double theta = rng.uniform(0.0, 2.0 * kPi);
  double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  return {r * std::cos(theta), r * std::sin(theta), z};
}

Vec3 sample_cube(Rng& rng) {
  std::size_t face = static_cast<std::size_t>(rng.below(6));
  double u = rng.uniform(-1.0, 1.0);
  double v = rng.uniform(-1.0, 1.0);
  switch (face) {
    case 0: return {1.0, u, v};
    case 1: return {-1.0, u, v};
    case 2: return {u, 1.0, v};
    case 3: return {u, -1.0, v};
    case 4: return {u, v, 1.0};
    default: return {u, v, -1.0};
  }
}

Vec3 sample_cylinder(Rng& rng) {
  const double radius = 0.7, half_h = 1.0;
  double lateral = 2.0 * kPi * radius * (2.0 * half_h);
  double caps = 2.0 * kPi * radius * radius;
  double theta = rng.uniform(0.0, 2.0 * kPi);
  if (rng.uniform() * (lateral + caps) < lateral) {
    return {radius * std::cos(theta), radius * std::sin(theta), rng.uniform(-half_h, half_h)};
  }
  double r = radius * std::sqrt(rng.uniform());
  double z = rng.uniform() < 0.5 ? half_h : -half_h;
  return {r * std::cos(theta), r * std::sin(theta), z};
}

Vec3 sample_cone(Rng& rng) {
  const double radius = 0.9, apex_z = 1.0, base_z = -1.0;
  double slant = std::sqrt(radius * radius + (apex_z - base_z) * (apex_z - base_z));
  double lateral = kPi * radius * slant;
  double base = kPi * radius * radius;
  double theta = rng.uniform(0.0, 2.0 * kPi);
  if (rng.uniform() * (lateral + base) < lateral) {
    double t = std::sqrt(rng.uniform());  // area-uniform along the slant
    double r = t * radius;
    double z = apex_z + t * (base_z - apex_z);
    return {r * std::cos(theta), r * std::sin(theta), z};
  }
  double r = radius * std::sqrt(rng.uniform());
  return {r * std::cos(theta), r * std::sin(theta), base_z};
}

Vec3 sample_torus(Rng& rng) {
  const double major = 0.75, minor = 0.3;
  double theta = rng.uniform(0.0, 2.0 * kPi);
  double phi;
  // Surface density around the tube is proportional to major + minor*cos(phi).
  for (;;) {
    phi = rng.uniform(0.0, 2.0 * kPi);
    if (rng.uniform() * (major + minor) <= major + minor * std::cos(phi)) break;
  }
  double ring = major + minor * std::cos(phi);
  return {ring * std::cos(theta), ring * std::sin(theta), minor * std::sin(phi)};
}

PointCloud make_primitive(std::size_t cls, std::size_t n, double noise, Rng& rng,
                          const std::string& name) {
  PointCloud cloud;
  cloud.name = name;
  cloud.positions.resize(n);
  cloud.labels.assign(n, static_cast<int>(cls));
  double scale = rng.uniform(0.8, 1.2);
  double spin = rng.uniform(0.0, 2.0 * kPi);
  for (std::size_t i = 0; i < n; ++i) {
    Vec3 p;
    switch (cls) {
      case 0: p = sample_sphere(rng); break;
      case 1: p = sample_cube(rng); break;
      case 2: p = sample_cylinder(rng); break;
      case 3: p = sample_cone(rng); break;
      default: p = sample_torus(rng); break;
    }
    p = rotate_z(p, spin);
    for (double& c : p) c *= scale;
    if (noise > 0.0) {
      for (double& c : p) c += rng.normal(0.0, noise);
    }
    cloud.positions[i] = p;
  }
  return cloud;
}

// Mushroom-shaped two-part solid: a cylindrical stem (wall + bottom disk)
// under an overhanging spherical cap (under-annulus + dome). The part seam
// is the stem-top rim, a sharp crease; the annulus rim and bottom rim are
// intra-part creases. A +-1 part-indicator feature channel rides along so
// the clouds double as diffusion-lab inputs.
PointCloud make_composite(std::size_t n, double noise, Rng& rng, const std::string& name) {
  PointCloud cloud;
  cloud.name = name;
  cloud.positions.resize(n);
  cloud.labels.resize(n);
  cloud.feature_dim = 1;
  cloud.features.resize(n);

  double stem_r = rng.uniform(0.25, 0.4);
  double cap_r = stem_r * rng.uniform(1.3, 1.6);
  double bottom = -0.8;
  double top = rng.uniform(0.1, 0.5);
  double spin = rng.uniform(0.0, 2.0 * kPi);

  double wall = 2.0 * kPi * stem_r * (top - bottom);
  double disk = kPi * stem_r * stem_r;
  double annulus = kPi * (cap_r * cap_r - stem_r * stem_r);
  double dome = 2.0 * kPi * cap_r * cap_r;
  double total = wall + disk + annulus + dome;

  for (std::size_t i = 0; i < n; ++i) {
    double pick = rng.uniform() * total;
    double theta = rng.uniform(0.0, 2.0 * kPi);
    Vec3 p;
    int label;
    if (pick < wall) {
      p = {stem_r * std::cos(theta), stem_r * std::sin(theta), rng.uniform(bottom, top)};
      label = 0;
    } else if (pick < wall + disk) {
      double r = stem_r * std::sqrt(rng.uniform());
      p = {r * std::cos(theta), r * std::sin(theta), bottom};
      label = 0;
    } else if (pick < wall + disk + annulus) {
      double r = std::sqrt(stem_r * stem_r +
                           rng.uniform() * (cap_r * cap_r - stem_r * stem_r));
      p = {r * std::cos(theta), r * std::sin(theta), top};
      label = 1;
    } else {
      double z = rng.uniform();  // upper hemisphere only
      double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      p = {cap_r * r * std::cos(theta), cap_r * r * std::sin(theta), top + cap_r * z};
      label = 1;
    }
    p = rotate_z(p, spin);
    if (noise > 0.0) {
      for (double& c : p) c += rng.normal(0.0, noise);
    }
    cloud.positions[i] = p;
    cloud.labels[i] = label;
    cloud.features[i] = label == 0 ? -1.0 : 1.0;
  }

  // Analytic boundary mask: distance to the part seam (the stem-top rim)
  // within 5% of the bounding-box diagonal. The z-rotation leaves the rim
  // circle in place.
  Vec3 lo = cloud.positions[0], hi = cloud.positions[0];
  for (const Vec3& p : cloud.positions) {
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
  }
  double diag = std::sqrt(sq_dist(lo, hi));
  double band = 0.05 * diag;
  cloud.boundary.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3& p = cloud.positions[i];
    double ring = std::sqrt(p[0] * p[0] + p[1] * p[1]) - stem_r;
    double dz = p[2] - top;
    cloud.boundary[i] = std::sqrt(ring * ring + dz * dz) <= band ? 1 : 0;
  }
  return cloud;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (points < 64) throw ArgumentError("synthetic clouds need at least 64 points");
  if (per_class < 1) throw ArgumentError("need at least one cloud per class");
  if (noise < 0.0) throw ArgumentError("noise sigma must be non-negative");
}

std::vector<PointCloud> generate(const SyntheticSpec& spec) {
  spec.validate();
  std::vector<PointCloud> clouds;
  if (spec.family == SyntheticSpec::Family::kClsPrimitives) {
    static const char* kNames[kNumPrimitiveClasses] = {"sphere", "cube", "cylinder", "cone",
                                                       "torus"};
    clouds.reserve(kNumPrimitiveClasses * spec.per_class);
    std::size_t index = 0;
    for (std::size_t cls = 0; cls < kNumPrimitiveClasses; ++cls) {
      for (std::size_t i = 0; i < spec.per_class; ++i, ++index) {
        Rng rng(child_seed(spec.seed, index));
        std::ostringstream name;
        name << kNames[cls] << "_" << i;
        clouds.push_back(make_primitive(cls, spec.points, spec.noise, rng, name.str()));
      }
    }
  } else {
    clouds.reserve(spec.per_class);
    for (std::size_t i = 0; i < spec.per_class; ++i) {
      Rng rng(child_seed(spec.seed, i));
      std::ostringstream name;
      name << "composite_" << i;
      clouds.push_back(make_composite(spec.points, spec.noise, rng, name.str()));
    }
  }
  return clouds;
}

// --- .duc io -----------------------------------------------------------------

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& tok, std::size_t line_no) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
    throw ParseError("line " + std::to_string(line_no) + ": bad number '" + tok + "'");
  }
  return v;
}

long parse_int(const std::string& tok, std::size_t line_no) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
    throw ParseError("line " + std::to_string(line_no) + ": bad integer '" + tok + "'");
  }
  return v;
}

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> toks;
  std::istringstream is(line);
  std::string t;
  while (is >> t) toks.push_back(t);
  return toks;
}

}  // namespace

void write_cloud(const PointCloud& cloud, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ArgumentError("cannot open '" + path + "' for writing");
  std::size_t d = cloud.features.empty() ? 0 : cloud.feature_dim;
  out << "duc v1 " << cloud.size() << " " << d << " " << (cloud.has_labels() ? 1 : 0) << "\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.positions[i];
    out << format_double(p[0]) << " " << format_double(p[1]) << " " << format_double(p[2]);
    for (std::size_t c = 0; c < d; ++c) out << " " << format_double(cloud.feature(i, c));
    if (cloud.has_labels()) out << " " << cloud.labels[i];
    out << "\n";
  }
  if (!out) throw ArgumentError("failed writing '" + path + "'");
}

PointCloud read_cloud(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open '" + path + "' for reading");
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  auto head = split_ws(line);
  if (head.size() != 5 || head[0] != "duc" || head[1] != "v1") {
    throw ParseError(path + ": line 1: bad header");
  }
  std::size_t n = static_cast<std::size_t>(parse_int(head[2], 1));
  std::size_t d = static_cast<std::size_t>(parse_int(head[3], 1));
  long has_labels = parse_int(head[4], 1);
  if (has_labels != 0 && has_labels != 1) throw ParseError(path + ": line 1: bad label flag");

  PointCloud cloud;
  cloud.name = path;
  cloud.feature_dim = d;
  cloud.positions.reserve(n);
  if (d > 0) cloud.features.reserve(n * d);
  if (has_labels) cloud.labels.reserve(n);

  std::size_t want_cols = 3 + d + (has_labels ? 1 : 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t line_no = i + 2;
    if (!std::getline(in, line)) {
      throw ParseError(path + ": line " + std::to_string(line_no) + ": unexpected end of file");
    }
    auto toks = split_ws(line);
    if (toks.size() != want_cols) {
      throw ParseError(path + ": line " + std::to_string(line_no) + ": expected " +
                       std::to_string(want_cols) + " columns, got " + std::to_string(toks.size()));
    }
    Vec3 p{parse_double(toks[0], line_no), parse_double(toks[1], line_no),
           parse_double(toks[2], line_no)};
    cloud.positions.push_back(p);
    for (std::size_t c = 0; c < d; ++c) {
      cloud.features.push_back(parse_double(toks[3 + c], line_no));
    }
    if (has_labels) cloud.labels.push_back(static_cast<int>(parse_int(toks.back(), line_no)));
  }
  cloud.validate();
  return cloud;
}

// --- augmentation ---------------------------------------------------------------

void AugmentSpec::validate() const {
  if (!(scale_lo > 0.0) || scale_lo > scale_hi) {
    throw ArgumentError("augment scale range must satisfy 0 < lo <= hi");
  }
  if (translation < 0.0 || jitter < 0.0) {
    throw ArgumentError("augment translation and jitter must be non-negative");
  }
}

bool AugmentSpec::is_identity() const {
  return rotation == Rotation::kNone && scale_lo == 1.0 && scale_hi == 1.0 &&
         translation == 0.0 && jitter == 0.0;
}

AugmentSpec AugmentSpec::scales_only() const {
  AugmentSpec s;
  s.scale_lo = scale_lo;
  s.scale_hi = scale_hi;
  s.anisotropic = anisotropic;
  return s;
}

namespace {

std::array<double, 9> random_rotation(Rng& rng) {
  // Uniform rotation from a normalized quaternion.
  double q[4];
  double norm2 = 0.0;
  for (double& qi : q) {
    qi = rng.normal();
    norm2 += qi * qi;
  }
  double inv = 1.0 / std::sqrt(norm2);
  double w = q[0] * inv, x = q[1] * inv, y = q[2] * inv, z = q[3] * inv;
  return {1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
          2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
          2 * (x * z - w * y),     2 * (y * z + w * x), 1 - 2 * (x * x + y * y)};
}

}  // namespace

PointCloud augment(const PointCloud& cloud, const AugmentSpec& spec, Rng& rng) {
  spec.validate();
  PointCloud out = cloud;

  if (spec.rotation == AugmentSpec::Rotation::kZAxis) {
    double angle = rng.uniform(0.0, 2.0 * kPi);
    for (Vec3& p : out.positions) p = rotate_z(p, angle);
  } else if (spec.rotation == AugmentSpec::Rotation::kFull) {
    auto m = random_rotation(rng);
    for (Vec3& p : out.positions) {
      Vec3 q{m[0] * p[0] + m[1] * p[1] + m[2] * p[2], m[3] * p[0] + m[4] * p[1] + m[5] * p[2],
             m[6] * p[0] + m[7] * p[1] + m[8] * p[2]};
      p = q;
    }
  }

  Vec3 s;
  if (spec.anisotropic) {
    s = {rng.uniform(spec.scale_lo, spec.scale_hi), rng.uniform(spec.scale_lo, spec.scale_hi),
         rng.uniform(spec.scale_lo, spec.scale_hi)};
  } else {
    double v = rng.uniform(spec.scale_lo, spec.scale_hi);
    s = {v, v, v};
  }
  Vec3 t{rng.uniform(-spec.translation, spec.translation),
         rng.uniform(-spec.translation, spec.translation),
         rng.uniform(-spec.translation, spec.translation)};
  for (Vec3& p : out.positions) {
    for (int a = 0; a < 3; ++a) p[a] = p[a] * s[a] + t[a];
  }

  if (spec.jitter > 0.0) {
    for (Vec3& p : out.positions) {
      for (int a = 0; a < 3; ++a) p[a] += rng.normal(0.0, spec.jitter);
    }
  }
  return out;
}

}  // namespace dunet
