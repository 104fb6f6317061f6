#include "appledet/data/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "appledet/common/error.hpp"
#include "appledet/common/rng.hpp"

namespace appledet::data {

namespace {

struct Disk {
  double cx, cy, r;
  double hue_shift;  // red to yellow-red variation
};

// Leaf: rotated ellipse. Branch: thick segment.
struct Occluder {
  bool branch;
  double cx, cy, a, b, angle;       // ellipse
  double x0, y0, x1, y1, thickness;  // segment
  int shade;

  bool covers(double x, double y) const {
    if (branch) {
      const double dx = x1 - x0, dy = y1 - y0;
      const double len2 = dx * dx + dy * dy;
      double t = len2 > 0.0 ? ((x - x0) * dx + (y - y0) * dy) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const double px = x0 + t * dx - x, py = y0 + t * dy - y;
      return px * px + py * py <= 0.25 * thickness * thickness;
    }
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = (x - cx) * c + (y - cy) * s;
    const double v = -(x - cx) * s + (y - cy) * c;
    return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
  }
};

bool in_disk(const Disk& d, double x, double y) {
  const double dx = x - d.cx, dy = y - d.cy;
  return dx * dx + dy * dy <= d.r * d.r;
}

void paint_background(Image& img, Rng& rng) {
  // Smooth value noise on a coarse lattice plus per-pixel grain.
  const int cell = 8;
  const int gw = img.width / cell + 2, gh = img.height / cell + 2;
  std::vector<double> lattice(static_cast<std::size_t>(gw) * gh);
  for (double& v : lattice) v = rng.uniform();
  const double base_r = rng.uniform(60, 110), base_g = rng.uniform(80, 130),
               base_b = rng.uniform(40, 80);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double fx = static_cast<double>(x) / cell, fy = static_cast<double>(y) / cell;
      const int ix = static_cast<int>(fx), iy = static_cast<int>(fy);
      const double tx = fx - ix, ty = fy - iy;
      const auto L = [&](int i, int j) { return lattice[static_cast<std::size_t>(j) * gw + i]; };
      const double n = (1 - tx) * (1 - ty) * L(ix, iy) + tx * (1 - ty) * L(ix + 1, iy) +
                       (1 - tx) * ty * L(ix, iy + 1) + tx * ty * L(ix + 1, iy + 1);
      const double k = 0.6 + 0.8 * n;
      const double grain = rng.uniform(-8, 8);
      img.at(x, y, 0) = clamp_byte(base_r * k + grain);
      img.at(x, y, 1) = clamp_byte(base_g * k + grain);
      img.at(x, y, 2) = clamp_byte(base_b * k + grain);
    }
  }
}

void paint_disk(Image& img, const Disk& d) {
  // Lambert-like shading with the light from the upper left.
  const int x0 = std::max(0, static_cast<int>(std::floor(d.cx - d.r)));
  const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(d.cx + d.r)));
  const int y0 = std::max(0, static_cast<int>(std::floor(d.cy - d.r)));
  const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(d.cy + d.r)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      if (!in_disk(d, px, py)) continue;
      const double u = (px - d.cx) / d.r, v = (py - d.cy) / d.r;
      const double z = std::sqrt(std::max(0.0, 1.0 - u * u - v * v));
      const double light = std::clamp(0.35 + 0.65 * (-0.45 * u - 0.45 * v + 0.77 * z), 0.2, 1.0);
      const double highlight = std::pow(std::max(0.0, -0.45 * u - 0.45 * v + 0.77 * z), 20) * 90;
      img.at(x, y, 0) = clamp_byte(225 * light + highlight);
      img.at(x, y, 1) = clamp_byte((30 + 90 * d.hue_shift) * light + highlight);
      img.at(x, y, 2) = clamp_byte(35 * light + highlight);
    }
  }
}

void paint_occluder(Image& img, const Occluder& o) {
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      if (!o.covers(x + 0.5, y + 0.5)) continue;
      if (o.branch) {
        img.at(x, y, 0) = clamp_byte(90 + o.shade);
        img.at(x, y, 1) = clamp_byte(60 + o.shade);
        img.at(x, y, 2) = clamp_byte(35 + o.shade);
      } else {
        img.at(x, y, 0) = clamp_byte(30 + o.shade);
        img.at(x, y, 1) = clamp_byte(140 + 2 * o.shade);
        img.at(x, y, 2) = clamp_byte(40 + o.shade);
      }
    }
  }
}

}  // namespace

Scene generate_scene(std::uint64_t seed, const SceneConfig& cfg) {
  require(cfg.size > 0 && cfg.size % 32 == 0,
          "generate_scene: size must be a positive multiple of 32, got " +
              std::to_string(cfg.size));
  require(cfg.min_objects >= 0 && cfg.max_objects >= cfg.min_objects,
          "generate_scene: object count range is invalid");
  require(cfg.min_radius > 0.0 && cfg.max_radius >= cfg.min_radius,
          "generate_scene: radius range is invalid");
  require(cfg.occluder_density >= 0.0, "generate_scene: occluder density must be >= 0");

  Rng rng(mix_seed(seed, 0x5ce4e));
  Scene scene;
  scene.seed = seed;
  scene.image = Image::rgb(cfg.size, cfg.size);
  paint_background(scene.image, rng);

  const double size = cfg.size;
  const int count = rng.integer(cfg.min_objects, cfg.max_objects);
  std::vector<Disk> disks;
  for (int i = 0; i < count; ++i) {
    const double r = rng.uniform(cfg.min_radius, cfg.max_radius) * size;
    // Centers may sit near the border so that some fruit is cut by the canvas.
    disks.push_back(Disk{rng.uniform(0.1 * size, 0.9 * size), rng.uniform(0.1 * size, 0.9 * size),
                         r, rng.uniform()});
  }

  std::vector<Occluder> occluders;
  const double expected = cfg.occluder_density * std::max(count, 1);
  const int n_occ = cfg.occluder_density > 0.0
                        ? static_cast<int>(std::floor(expected + rng.uniform()))
                        : 0;
  for (int i = 0; i < n_occ; ++i) {
    Occluder o{};
    o.shade = rng.integer(-20, 20);
    // Most occluders are aimed at a fruit so that occlusion is common.
    const bool aimed = !disks.empty() && rng.bernoulli(0.7);
    const Disk* d = aimed ? &disks[rng.integer(0, static_cast<int>(disks.size()) - 1)] : nullptr;
    const double ax = d ? d->cx + rng.uniform(-1.3, 1.3) * d->r : rng.uniform(0, size);
    const double ay = d ? d->cy + rng.uniform(-1.3, 1.3) * d->r : rng.uniform(0, size);
    o.branch = rng.bernoulli(0.3);
    if (o.branch) {
      const double ang = rng.uniform(0, std::numbers::pi);
      const double len = rng.uniform(0.3, 0.8) * size;
      o.x0 = ax - 0.5 * len * std::cos(ang);
      o.y0 = ay - 0.5 * len * std::sin(ang);
      o.x1 = ax + 0.5 * len * std::cos(ang);
      o.y1 = ay + 0.5 * len * std::sin(ang);
      o.thickness = rng.uniform(0.03, 0.07) * size;
    } else {
      o.cx = ax;
      o.cy = ay;
      o.a = rng.uniform(0.06, 0.14) * size;
      o.b = o.a * rng.uniform(0.35, 0.6);
      o.angle = rng.uniform(0, std::numbers::pi);
    }
    occluders.push_back(o);
  }

  for (const auto& d : disks) paint_disk(scene.image, d);
  for (const auto& o : occluders) paint_occluder(scene.image, o);

  // Occlusion by pixel census over the disk: a pixel is covered when an
  // occluder or a later (front) disk covers it. Off-canvas pixels are cut,
  // not occluded, and are left out of the count.
  for (std::size_t i = 0; i < disks.size(); ++i) {
    const Disk& d = disks[i];
    long total = 0, covered = 0;
    double bx1 = size, by1 = size, bx2 = 0, by2 = 0;
    for (int y = 0; y < cfg.size; ++y) {
      for (int x = 0; x < cfg.size; ++x) {
        const double px = x + 0.5, py = y + 0.5;
        if (!in_disk(d, px, py)) continue;
        ++total;
        bx1 = std::min(bx1, static_cast<double>(x));
        by1 = std::min(by1, static_cast<double>(y));
        bx2 = std::max(bx2, x + 1.0);
        by2 = std::max(by2, y + 1.0);
        bool hit = false;
        for (std::size_t j = i + 1; j < disks.size() && !hit; ++j) hit = in_disk(disks[j], px, py);
        for (const auto& o : occluders) {
          if (hit) break;
          hit = o.covers(px, py);
        }
        covered += hit;
      }
    }
    if (total == 0) continue;  // entirely off canvas
    const double frac = static_cast<double>(covered) / static_cast<double>(total);
    if (frac >= 1.0) continue;  // nothing visible to label
    ObjectMeta m{d.cx, d.cy, d.r, frac, boxloss::kApple};
    if (frac > cfg.block_threshold && d.r >= cfg.small_radius_px) m.class_id = boxloss::kBlock;
    scene.meta.push_back(m);
    scene.truths.push_back(boxloss::Box::from_corners(bx1, by1, bx2, by2, m.class_id));
  }
  return scene;
}

}  // namespace appledet::data
