#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "avatarcraft/image.hpp"

namespace avatarcraft::engine {

inline constexpr int kNumStructure = 16;
inline constexpr int kNumGroups = 4;
inline constexpr std::array<int, kNumGroups> kGroupSizes = {4, 4, 4, 3};
inline constexpr int kTextureWidth = 15;
inline constexpr int kNumAttributes = 12;

enum Group : int { kEyebrow = 0, kEyeshadow = 1, kLipstick = 2, kBlush = 3 };

// Option indices within their groups. Index 0 of every cosmetic group is "none",
// except eyebrows which always draw something.
enum EyebrowShape : int { kBrowStraight = 0, kBrowArched, kBrowAngled, kBrowThick };
enum EyeshadowStyle : int { kShadowNone = 0, kShadowClassic, kShadowWinged, kShadowSmoky };
enum LipstickStyle : int { kLipNone = 0, kLipMatte, kLipTwoTone, kLipGloss };
enum BlushStyle : int { kBlushNone = 0, kBlushRound, kBlushContour };

/// Full crafting vector: continuous structure, per-group texture choices,
/// continuous (conditionally valid) makeup attributes.
struct CraftingParams {
  std::array<double, kNumStructure> s{};
  std::array<int, kNumGroups> t{};
  std::array<double, kNumAttributes> a{};

  /// s = 0.5, t = 0, a = 0.5 elementwise.
  static CraftingParams neutral();

  friend bool operator==(const CraftingParams&, const CraftingParams&) = default;
};

using ConditionMask = std::array<std::uint8_t, kNumAttributes>;

struct Issue {
  std::string field;  // e.g. "s[3]", "t[1]"
  std::string message;
};

class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(std::vector<Issue> issues);
  const std::vector<Issue>& issues() const { return issues_; }

 private:
  std::vector<Issue> issues_;
};

/// Every violated invariant, in field order. Empty means valid.
std::vector<Issue> validate(const CraftingParams& params);
/// Throws ValidationError listing every issue.
void require_valid(const CraftingParams& params);

ConditionMask condition_mask(const std::array<int, kNumGroups>& t);

CraftingParams sample_params(std::uint64_t seed);

/// Deterministic integer rasterizer; throws ValidationError on invalid params.
ImageBuffer render(const CraftingParams& params);

/// One-hot encoding of t, concatenated in group order (width kTextureWidth).
std::array<double, kTextureWidth> texture_one_hot(const std::array<int, kNumGroups>& t);

// --- schema ---------------------------------------------------------------

struct StructureSpec {
  std::string name;
  std::string quantity;  // what the parameter drives
  double base;           // quantity = base + scale * s
  double scale;
  std::string unit;
};

struct GroupSpec {
  std::string name;
  std::vector<std::string> options;
};

struct AttributeSpec {
  std::string name;
  std::string description;
};

struct EngineSchema {
  std::string version;
  int canvas = ImageBuffer::kCanvas;
  std::vector<StructureSpec> structure;
  std::vector<GroupSpec> groups;
  std::vector<AttributeSpec> attributes;
  /// mask_table[g][option] = attribute indices validated by that option.
  std::vector<std::vector<std::vector<int>>> mask_table;
  /// SHA-256 over the canonical JSON of every field above.
  std::string hash;
};

const EngineSchema& schema();
nlohmann::json schema_json(const EngineSchema& s);
/// Parses a schema document and recomputes its hash.
EngineSchema schema_from_json(const nlohmann::json& j);
std::string compute_schema_hash(const EngineSchema& s);

// --- params <-> JSON (params.jsonl record shape) --------------------------

nlohmann::json params_to_json(const CraftingParams& p);
/// Parses {"s":[...],"t":[...],"a":[...]}; shape or type errors raise
/// ValidationError naming the field. Range is not checked here.
CraftingParams params_from_json(const nlohmann::json& j);

}  // namespace avatarcraft::engine
