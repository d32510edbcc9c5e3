// SPDX-License-Identifier: Apache-2.0
#include "refvos/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include "refvos/errors.hpp"
#include "refvos/random.hpp"

namespace refvos {

std::string shape_name(Shape s) {
  switch (s) {
    case Shape::kSquare: return "square";
    case Shape::kCircle: return "circle";
    case Shape::kTriangle: return "triangle";
  }
  return "?";
}

std::string color_name(Color c) {
  switch (c) {
    case Color::kRed: return "red";
    case Color::kGreen: return "green";
    case Color::kBlue: return "blue";
    case Color::kYellow: return "yellow";
  }
  return "?";
}

std::string motion_name(Motion m) {
  switch (m) {
    case Motion::kLeft: return "left";
    case Motion::kRight: return "right";
    case Motion::kUp: return "up";
    case Motion::kDown: return "down";
    case Motion::kStatic: return "static";
  }
  return "?";
}

void SyntheticSpec::validate() const {
  if (height < 8 || width < 8) throw ConfigError("synthetic canvas must be at least 8x8");
  if (frames < 1) throw ConfigError("synthetic frame count must be >= 1");
  if (min_objects < 1 || max_objects < min_objects) throw ConfigError("synthetic object count range is invalid");
  if (min_size < 2 || max_size < min_size) throw ConfigError("synthetic size range is invalid");
  if (speed < 0) throw ConfigError("synthetic speed must be >= 0");
  if (shapes.empty() || colors.empty() || motions.empty()) throw ConfigError("synthetic inventory is empty");
  const int travel = speed * (frames - 1);
  if (max_size + travel > std::min(height, width) - 2) {
    throw ConfigError("synthetic objects cannot stay inside the canvas for the whole clip");
  }
}

namespace {

int dx_of(Motion m) { return m == Motion::kLeft ? -1 : m == Motion::kRight ? 1 : 0; }
int dy_of(Motion m) { return m == Motion::kUp ? -1 : m == Motion::kDown ? 1 : 0; }

std::array<float, 3> rgb(Color c) {
  switch (c) {
    case Color::kRed: return {0.90f, 0.12f, 0.10f};
    case Color::kGreen: return {0.15f, 0.80f, 0.20f};
    case Color::kBlue: return {0.15f, 0.25f, 0.95f};
    case Color::kYellow: return {0.95f, 0.88f, 0.10f};
  }
  return {0.0f, 0.0f, 0.0f};
}

template <typename T>
T pick(const std::vector<T>& v, Rng& rng) {
  return v[static_cast<std::size_t>(rng.below(v.size()))];
}

// Top-left range keeping the whole trajectory at least 1 px from the border.
std::pair<int, int> start_range(int extent, int size, int delta_total) {
  const int lo = 1 - std::min(0, delta_total);
  const int hi = extent - 1 - size - std::max(0, delta_total);
  return {lo, hi};
}

SyntheticObject draw_object(const SyntheticSpec& spec, Shape shape, Color color, Motion motion, Rng& rng) {
  SyntheticObject o;
  o.shape = shape;
  o.color = color;
  o.motion = motion;
  o.size = spec.min_size + static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.max_size - spec.min_size + 1)));
  const int travel = spec.speed * (spec.frames - 1);
  const auto [xlo, xhi] = start_range(spec.width, o.size, dx_of(motion) * travel);
  const auto [ylo, yhi] = start_range(spec.height, o.size, dy_of(motion) * travel);
  o.x = rng.range(xlo, xhi);
  o.y = rng.range(ylo, yhi);
  return o;
}

}  // namespace

int SyntheticObject::x_at(int t, int speed) const { return x + dx_of(motion) * speed * t; }
int SyntheticObject::y_at(int t, int speed) const { return y + dy_of(motion) * speed * t; }

Mask rasterize(const SyntheticObject& obj, int t, int speed, int height, int width) {
  Mask m(height, width);
  const int x0 = obj.x_at(t, speed);
  const int y0 = obj.y_at(t, speed);
  const int s = obj.size;
  const double c = (s - 1) / 2.0;
  for (int r = 0; r < s; ++r) {
    for (int col = 0; col < s; ++col) {
      bool inside = false;
      switch (obj.shape) {
        case Shape::kSquare:
          inside = true;
          break;
        case Shape::kCircle: {
          const double dy = r - c;
          const double dx = col - c;
          inside = dx * dx + dy * dy <= (s / 2.0) * (s / 2.0);
          break;
        }
        case Shape::kTriangle:
          // Apex at the top centre, base along the bottom row.
          inside = std::abs(col - c) <= (r + 0.5) / 2.0 + 0.25;
          break;
      }
      const int y = y0 + r;
      const int x = x0 + col;
      if (inside && y >= 0 && y < height && x >= 0 && x < width) m.at(y, x) = 1;
    }
  }
  return m;
}

ReferringExpression describe(const SyntheticObject& obj) {
  if (obj.motion == Motion::kStatic) {
    return ReferringExpression::parse("the static " + color_name(obj.color) + " " + shape_name(obj.shape));
  }
  return ReferringExpression::parse("the " + color_name(obj.color) + " " + shape_name(obj.shape) + " moving " +
                                    motion_name(obj.motion));
}

GeneratedClip generate_clip(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const int count = rng.range(spec.min_objects, spec.max_objects);

  const SyntheticObject target =
      draw_object(spec, pick(spec.shapes, rng), pick(spec.colors, rng), pick(spec.motions, rng), rng);
  std::vector<SyntheticObject> distractors;
  for (int i = 1; i < count; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
      const Shape s = pick(spec.shapes, rng);
      const Color c = pick(spec.colors, rng);
      const Motion m = pick(spec.motions, rng);
      if (s == target.shape && c == target.color) continue;
      distractors.push_back(draw_object(spec, s, c, m, rng));
      placed = true;
    }
    if (!placed) {
      throw GenerationError("cannot draw a distractor distinct from the " + color_name(target.color) + " " +
                            shape_name(target.shape) + " with this inventory");
    }
  }

  GeneratedClip out;
  out.objects = distractors;
  out.objects.push_back(target);
  char id[32];
  std::snprintf(id, sizeof id, "seed%llu", static_cast<unsigned long long>(spec.seed));
  out.sample.id = id;
  out.sample.expression = describe(target);

  // Faint seeded texture so the background is not perfectly flat.
  std::vector<float> texture(static_cast<std::size_t>(3) * spec.height * spec.width);
  for (auto& v : texture) v = 0.08f + 0.04f * static_cast<float>(rng.uniform());

  for (int t = 0; t < spec.frames; ++t) {
    Image frame(spec.height, spec.width);
    frame.data = texture;
    for (const auto& obj : out.objects) {
      const Mask m = rasterize(obj, t, spec.speed, spec.height, spec.width);
      const auto color = rgb(obj.color);
      for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
          if (!m.at(y, x)) continue;
          for (int ch = 0; ch < 3; ++ch) frame.at(ch, y, x) = color[static_cast<std::size_t>(ch)];
        }
      }
    }
    // Snap to 8-bit levels so a frame survives a PPM round trip unchanged.
    for (auto& v : frame.data) v = static_cast<float>(std::lround(v * 255.0f)) / 255.0f;
    out.sample.frames.push_back(std::move(frame));
    out.sample.masks.push_back(rasterize(target, t, spec.speed, spec.height, spec.width));
  }
  return out;
}

Dataset generate_dataset(const SyntheticSpec& spec, int count) {
  if (count < 0) throw ConfigError("clip count must be >= 0");
  Rng rng(spec.seed);
  Dataset out;
  for (int i = 0; i < count; ++i) {
    SyntheticSpec s = spec;
    s.seed = rng.next();
    GeneratedClip clip = generate_clip(s);
    char id[32];
    std::snprintf(id, sizeof id, "clip%03d", i);
    clip.sample.id = id;
    out.push_back(std::move(clip.sample));
  }
  return out;
}

}  // namespace refvos
