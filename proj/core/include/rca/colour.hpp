#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rca/dataset.hpp"

namespace rca::colour {

// CIE D65 / 2 degree observer.
struct WhitePoint {
  double x = 95.047;
  double y = 100.0;
  double z = 108.883;
};

// Tristimulus values on the 0-100 scale.
struct TristimulusXYZ {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  WhitePoint white{};
};

struct LabColour {
  double l = 0.0;
  double a = 0.0;
  double b = 0.0;

  double chroma() const;
};

struct Hue {
  double degrees;  // [0, 360)
  bool neutral;    // a* = b* = 0; degrees is 0
};

struct Depth {
  double value;  // [0, 1]
  bool clamped;  // Y exceeded the white point luminance
};

// CIE 1976 L*a*b*. DomainError on negative components or a non-positive white point.
LabColour xyz_to_lab(const TristimulusXYZ& c);

Hue hue_angle(const LabColour& c);

struct YellownessBrightness {
  double yellowness;  // Y - Z
  double brightness;  // Y
};

YellownessBrightness yellowness_brightness(const TristimulusXYZ& c);

// 1 - Y/Yn: 0 at the white point, 1 for black.
Depth colour_depth(const TristimulusXYZ& c);

// CIE76 Euclidean distance in L*a*b*.
double colour_difference(const LabColour& c1, const LabColour& c2);

// Per batch: each feature aggregated twice, over coloured sub-instances
// (`<name>_col`) and uncoloured ones (`<name>_unc`). Batches lacking a class
// get missing cells in that class's copy.
Dataset split_coloured_uncoloured(const Dataset& ds, std::span<const std::uint8_t> coloured,
                                  std::span<const BatchGroup> groups);

enum class RecipeKind { hue, depth, yellowness, brightness, delta_e };

RecipeKind parse_recipe_kind(const std::string& text);
std::string_view to_string(RecipeKind kind);

// Declarative calculated feature: `inputs` names an X,Y,Z column triplet
// (two triplets for delta_e).
struct Recipe {
  std::string name;
  RecipeKind kind;
  std::vector<std::string> inputs;
  WhitePoint white{};
};

// Appends one `calculated` column per recipe; existing columns are untouched.
// Rows with a missing input get a missing output.
Dataset append_calculated_features(const Dataset& ds, std::span<const Recipe> recipes);

}  // namespace rca::colour
