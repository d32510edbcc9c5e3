// SPDX-License-Identifier: Apache-2.0
//
// Moving-shapes clips with a referring expression for exactly one object.
// Expressions: "the <color> <shape> moving <direction>" or
// "the static <color> <shape>".
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "refvos/dataset.hpp"

namespace refvos {

enum class Shape { kSquare, kCircle, kTriangle };
enum class Color { kRed, kGreen, kBlue, kYellow };
enum class Motion { kLeft, kRight, kUp, kDown, kStatic };

std::string shape_name(Shape s);
std::string color_name(Color c);
std::string motion_name(Motion m);

struct SyntheticSpec {
  int height = 64;
  int width = 64;
  int frames = 5;
  int min_objects = 1;
  int max_objects = 4;
  int min_size = 10;  // bounding-box side in pixels
  int max_size = 18;
  int speed = 2;      // pixels per frame for moving objects
  std::vector<Shape> shapes{Shape::kSquare, Shape::kCircle, Shape::kTriangle};
  std::vector<Color> colors{Color::kRed, Color::kGreen, Color::kBlue, Color::kYellow};
  std::vector<Motion> motions{Motion::kLeft, Motion::kRight, Motion::kUp, Motion::kDown, Motion::kStatic};
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticObject {
  Shape shape = Shape::kSquare;
  Color color = Color::kRed;
  Motion motion = Motion::kStatic;
  int size = 10;
  int x = 0;  // top-left of the bounding box at frame 0
  int y = 0;

  int x_at(int t, int speed) const;
  int y_at(int t, int speed) const;
};

// Pixels covered by the object at frame t.
Mask rasterize(const SyntheticObject& obj, int t, int speed, int height, int width);

ReferringExpression describe(const SyntheticObject& obj);

struct GeneratedClip {
  Sample sample;
  std::vector<SyntheticObject> objects;  // painted in order; the target is last
};

// Deterministic in spec.seed. Distractors never share the target's
// (color, shape) pair. Throws GenerationError when the inventory cannot
// provide such distractors.
GeneratedClip generate_clip(const SyntheticSpec& spec);

// `count` clips named clip000, clip001, ...; clip i uses a seed drawn from
// spec.seed.
Dataset generate_dataset(const SyntheticSpec& spec, int count);

}  // namespace refvos
