#include "avatarcraft/engine.hpp"

#include <algorithm>
#include <climits>
#include <cmath>
#include <sstream>

#include "avatarcraft/io.hpp"
#include "avatarcraft/rng.hpp"

namespace avatarcraft::engine {

namespace {

std::string join_issues(const std::vector<Issue>& issues) {
  std::ostringstream os;
  os << "invalid crafting params:";
  for (const auto& i : issues) os << ' ' << i.field << " (" << i.message << ");";
  return os.str();
}

// --- integer rasterizer ----------------------------------------------------
// Geometry is snapped to 1/16 pixel and coverage is sampled once at each pixel
// centre with exact integer tests. No anti-aliasing.

constexpr std::int64_t kSub = 16;
constexpr int kN = ImageBuffer::kCanvas;

std::int64_t fx(double px) { return std::llround(px * kSub); }

struct Pt {
  std::int64_t x, y;
};

Pt pt(double x, double y) { return {fx(x), fx(y)}; }

Rgb blend(Rgb dst, Rgb src, int alpha) {
  auto mix = [alpha](int d, int s) {
    return static_cast<std::uint8_t>((s * alpha + d * (255 - alpha) + 127) / 255);
  };
  return {mix(dst.r, src.r), mix(dst.g, src.g), mix(dst.b, src.b)};
}

Rgb lerp(Rgb a, Rgb b, double t) { return blend(a, b, static_cast<int>(std::lround(t * 255.0))); }

Rgb shade(Rgb c, int num, int den) {
  return {static_cast<std::uint8_t>(c.r * num / den), static_cast<std::uint8_t>(c.g * num / den),
          static_cast<std::uint8_t>(c.b * num / den)};
}

int alpha_of(double base, double span, double v) {
  return std::clamp(static_cast<int>(std::lround(base + span * v)), 0, 255);
}

/// Integer HSV -> RGB; hue in [0,1], saturation and value in 0..255.
Rgb hsv(double hue01, int sat, int val) {
  const int h = static_cast<int>(std::lround(hue01 * 359.0));
  const int region = h / 60;
  const int rem = (h % 60) * 255 / 60;
  const auto p = static_cast<std::uint8_t>(val * (255 - sat) / 255);
  const auto q = static_cast<std::uint8_t>(val * (255 - sat * rem / 255) / 255);
  const auto t = static_cast<std::uint8_t>(val * (255 - sat * (255 - rem) / 255) / 255);
  const auto v = static_cast<std::uint8_t>(val);
  switch (region) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

/// Binary coverage over the canvas. Shapes are unioned, then painted once, so
/// overlapping strokes of one feature never double-blend.
class Coverage {
 public:
  Coverage() : bits_(static_cast<std::size_t>(kN) * kN, 0) {}

  Coverage& ellipse(Pt c, std::int64_t rx, std::int64_t ry, std::int64_t y_lo = INT64_MIN,
                    std::int64_t y_hi = INT64_MAX) {
    if (rx <= 0 || ry <= 0) return *this;
    const std::int64_t rr = rx * ry;
    scan(c.x - rx, c.y - ry, c.x + rx, c.y + ry, [&](std::int64_t px, std::int64_t py) {
      if (py < y_lo || py >= y_hi) return false;
      const std::int64_t dx = (px - c.x) * ry;
      const std::int64_t dy = (py - c.y) * rx;
      return dx * dx + dy * dy <= rr * rr;
    });
    return *this;
  }

  /// Even-odd fill.
  Coverage& polygon(const std::vector<Pt>& v) {
    if (v.size() < 3) return *this;
    std::int64_t x0 = v[0].x, x1 = v[0].x, y0 = v[0].y, y1 = v[0].y;
    for (const auto& p : v) {
      x0 = std::min(x0, p.x), x1 = std::max(x1, p.x);
      y0 = std::min(y0, p.y), y1 = std::max(y1, p.y);
    }
    scan(x0, y0, x1, y1, [&](std::int64_t px, std::int64_t py) {
      bool inside = false;
      for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
        const Pt& a = v[i];
        const Pt& b = v[j];
        if ((a.y > py) == (b.y > py)) continue;
        const std::int64_t lhs = (px - a.x) * (b.y - a.y);
        const std::int64_t rhs = (py - a.y) * (b.x - a.x);
        if (b.y > a.y ? lhs < rhs : lhs > rhs) inside = !inside;
      }
      return inside;
    });
    return *this;
  }

  /// Capsule of radius r around segment a-b.
  Coverage& stroke(Pt a, Pt b, std::int64_t r) {
    if (r <= 0) return *this;
    const std::int64_t ex = b.x - a.x, ey = b.y - a.y;
    const std::int64_t len2 = ex * ex + ey * ey;
    scan(std::min(a.x, b.x) - r, std::min(a.y, b.y) - r, std::max(a.x, b.x) + r,
         std::max(a.y, b.y) + r, [&](std::int64_t px, std::int64_t py) {
           const std::int64_t wx = px - a.x, wy = py - a.y;
           const std::int64_t dot = wx * ex + wy * ey;
           if (dot <= 0 || len2 == 0) return wx * wx + wy * wy <= r * r;
           if (dot >= len2) {
             const std::int64_t vx = px - b.x, vy = py - b.y;
             return vx * vx + vy * vy <= r * r;
           }
           const std::int64_t cross = wx * ey - wy * ex;
           return cross * cross <= r * r * len2;
         });
    return *this;
  }

  Coverage& polyline(const std::vector<Pt>& pts, std::int64_t r) {
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) stroke(pts[i], pts[i + 1], r);
    return *this;
  }

  void paint(ImageBuffer& img, Rgb color, int alpha = 255) const {
    if (alpha <= 0) return;
    for (int y = 0; y < kN; ++y)
      for (int x = 0; x < kN; ++x)
        if (bits_[static_cast<std::size_t>(y) * kN + x])
          img.set(x, y, alpha >= 255 ? color : blend(img.pixel(x, y), color, alpha));
  }

 private:
  template <typename Inside>
  void scan(std::int64_t x0, std::int64_t y0, std::int64_t x1, std::int64_t y1, Inside inside) {
    const auto px0 = static_cast<int>(std::max<std::int64_t>(0, x0 / kSub - 1));
    const auto py0 = static_cast<int>(std::max<std::int64_t>(0, y0 / kSub - 1));
    const auto px1 = static_cast<int>(std::min<std::int64_t>(kN - 1, x1 / kSub + 1));
    const auto py1 = static_cast<int>(std::min<std::int64_t>(kN - 1, y1 / kSub + 1));
    for (int y = py0; y <= py1; ++y) {
      const std::int64_t cy = y * kSub + kSub / 2;
      for (int x = px0; x <= px1; ++x) {
        const std::int64_t cx = x * kSub + kSub / 2;
        if (inside(cx, cy)) bits_[static_cast<std::size_t>(y) * kN + x] = 1;
      }
    }
  }

  std::vector<std::uint8_t> bits_;
};

void paint(ImageBuffer& img, const Coverage& c, Rgb color, int alpha = 255) {
  c.paint(img, color, alpha);
}

// --- palette -----------------------------------------------------------------

constexpr Rgb kBackground{86, 110, 140};
constexpr Rgb kSkinLight{244, 210, 184};
constexpr Rgb kSkinDark{118, 78, 54};
constexpr Rgb kHair{48, 34, 28};
constexpr Rgb kSclera{246, 246, 240};
constexpr Rgb kIris{58, 40, 30};
constexpr Rgb kBrowLight{160, 122, 90};
constexpr Rgb kBrowDark{22, 16, 14};
constexpr Rgb kNaturalLip{186, 96, 96};
constexpr Rgb kMouthLine{84, 36, 38};
constexpr Rgb kBlushRose{226, 78, 96};
constexpr Rgb kContour{140, 84, 68};
constexpr Rgb kWhite{255, 255, 255};

// Mapping table: quantity = base + scale * s[i] (pixels unless noted).
const std::vector<StructureSpec>& structure_specs() {
  static const std::vector<StructureSpec> specs = {
      {"face_width", "face half-width", 38, 18, "px"},
      {"face_length", "upper face half-height", 36, 14, "px"},
      {"jaw_taper", "jaw narrowing fraction", 0, 0.45, "fraction"},
      {"chin_length", "chin drop below jaw", 2, 12, "px"},
      {"eye_spacing", "eye centre offset from midline", 16, 10, "px"},
      {"eye_size", "eye half-width", 5, 8, "px"},
      {"eye_height", "eye centre rise above face centre", 4, 12, "px"},
      {"brow_height", "brow gap above eye", 3, 9, "px"},
      {"brow_length", "brow half-length", 6, 10, "px"},
      {"nose_length", "nose length", 10, 16, "px"},
      {"nose_width", "nostril half-width", 4, 8, "px"},
      {"mouth_height", "mouth drop below face centre", 18, 14, "px"},
      {"mouth_width", "mouth half-width", 10, 14, "px"},
      {"lip_thickness", "upper lip half-thickness", 3, 5, "px"},
      {"skin_tone", "skin blend light->dark", 0, 1, "fraction"},
      {"hairline_height", "hairline drop below crown", 4, 18, "px"},
  };
  return specs;
}

double map(int i, double s) {
  const auto& spec = structure_specs()[static_cast<std::size_t>(i)];
  return spec.base + spec.scale * s;
}

}  // namespace

// --- params ----------------------------------------------------------------

CraftingParams CraftingParams::neutral() {
  CraftingParams p;
  p.s.fill(0.5);
  p.t.fill(0);
  p.a.fill(0.5);
  return p;
}

ValidationError::ValidationError(std::vector<Issue> issues)
    : std::invalid_argument(join_issues(issues)), issues_(std::move(issues)) {}

std::vector<Issue> validate(const CraftingParams& p) {
  std::vector<Issue> issues;
  auto check_unit = [&](const char* name, std::size_t i, double v) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0)
      issues.push_back({std::string(name) + "[" + std::to_string(i) + "]",
                        "value " + std::to_string(v) + " outside [0,1]"});
  };
  for (std::size_t i = 0; i < p.s.size(); ++i) check_unit("s", i, p.s[i]);
  for (std::size_t g = 0; g < p.t.size(); ++g)
    if (p.t[g] < 0 || p.t[g] >= kGroupSizes[g])
      issues.push_back({"t[" + std::to_string(g) + "]",
                        "option " + std::to_string(p.t[g]) + " invalid for group of size " +
                            std::to_string(kGroupSizes[g])});
  for (std::size_t j = 0; j < p.a.size(); ++j) check_unit("a", j, p.a[j]);
  return issues;
}

void require_valid(const CraftingParams& p) {
  auto issues = validate(p);
  if (!issues.empty()) throw ValidationError(std::move(issues));
}

ConditionMask condition_mask(const std::array<int, kNumGroups>& t) {
  std::vector<Issue> issues;
  for (std::size_t g = 0; g < t.size(); ++g)
    if (t[g] < 0 || t[g] >= kGroupSizes[g])
      issues.push_back({"t[" + std::to_string(g) + "]", "option out of range"});
  if (!issues.empty()) throw ValidationError(std::move(issues));

  ConditionMask m{};
  const auto& table = schema().mask_table;
  for (std::size_t g = 0; g < t.size(); ++g)
    for (int j : table[g][static_cast<std::size_t>(t[g])]) m[static_cast<std::size_t>(j)] = 1;
  return m;
}

CraftingParams sample_params(std::uint64_t seed) {
  Rng rng(seed);
  CraftingParams p;
  for (auto& v : p.s) v = rng.uniform();
  for (std::size_t g = 0; g < p.t.size(); ++g)
    p.t[g] = static_cast<int>(rng.below(static_cast<std::uint64_t>(kGroupSizes[g])));
  for (auto& v : p.a) v = rng.uniform();
  return p;
}

std::array<double, kTextureWidth> texture_one_hot(const std::array<int, kNumGroups>& t) {
  std::array<double, kTextureWidth> out{};
  int offset = 0;
  for (int g = 0; g < kNumGroups; ++g) {
    out[static_cast<std::size_t>(offset + t[static_cast<std::size_t>(g)])] = 1.0;
    offset += kGroupSizes[static_cast<std::size_t>(g)];
  }
  return out;
}

// --- renderer --------------------------------------------------------------

ImageBuffer render(const CraftingParams& p) {
  require_valid(p);
  const auto& s = p.s;
  const auto& a = p.a;

  ImageBuffer img(kN, kN, kBackground);
  const double cx = 64.0, cy = 62.0;

  // Face geometry.
  const double hw = map(0, s[0]);
  const double upper = map(1, s[1]);
  const double lower = 30.0 + 12.0 * s[1];
  const double jaw_w = hw * (1.0 - map(2, s[2]));
  const double jaw_y = cy + 0.55 * lower;
  const double chin_y = cy + lower + map(3, s[3]);
  const double chin_w = 0.45 * jaw_w;

  const Rgb skin = lerp(kSkinLight, kSkinDark, map(14, s[14]));
  const Rgb skin_shadow = shade(skin, 82, 100);

  // Ears sit behind the face outline.
  Coverage ears;
  ears.ellipse(pt(cx - hw, cy - 2), fx(5), fx(10)).ellipse(pt(cx + hw, cy - 2), fx(5), fx(10));
  paint(img, ears, skin_shadow);

  Coverage face;
  face.ellipse(pt(cx, cy), fx(hw), fx(upper), INT64_MIN, fx(cy) + 1);
  face.polygon({pt(cx - hw, cy), pt(cx + hw, cy), pt(cx + jaw_w, jaw_y), pt(cx + chin_w, chin_y),
                pt(cx - chin_w, chin_y), pt(cx - jaw_w, jaw_y)});
  paint(img, face, skin);

  const double hairline = cy - upper + map(15, s[15]);
  Coverage hair;
  hair.ellipse(pt(cx, cy), fx(hw + 3), fx(upper + 4), INT64_MIN, fx(hairline));
  paint(img, hair, kHair);

  // Eye geometry, shared by cosmetics.
  const double ex = map(4, s[4]);
  const double erx = map(5, s[5]);
  const double ery = 0.6 * erx;
  const double ey = cy - map(6, s[6]);

  // Blush (a10 intensity, a11 size).
  if (p.t[kBlush] != kBlushNone) {
    Coverage blush;
    if (p.t[kBlush] == kBlushRound) {
      const double r = 6.0 + 8.0 * a[11];
      blush.ellipse(pt(cx - ex - 3, ey + 16), fx(r), fx(r * 0.8));
      blush.ellipse(pt(cx + ex + 3, ey + 16), fx(r), fx(r * 0.8));
      paint(img, blush, kBlushRose, alpha_of(80, 175, a[10]));
    } else {
      const double w = 3.0 + 6.0 * a[11];
      for (double side : {-1.0, 1.0}) {
        blush.polygon({pt(cx + side * (hw - 3), ey + 4), pt(cx + side * (ex + 2), ey + 17),
                       pt(cx + side * (ex + 2), ey + 17 + w), pt(cx + side * (hw - 3), ey + 4 + w)});
      }
      paint(img, blush, kContour, alpha_of(80, 175, a[10]));
    }
  }

  // Eyeshadow (a1 hue, a2 intensity, a3 extent).
  if (p.t[kEyeshadow] != kShadowNone) {
    Rgb color = hsv(a[1], 170, 200);
    Coverage shadow;
    for (double side : {-1.0, 1.0}) {
      const double ecx = cx + side * ex;
      switch (p.t[kEyeshadow]) {
        case kShadowClassic:
          shadow.ellipse(pt(ecx, ey - ery * 0.5), fx(erx * (1.15 + 0.5 * a[3])),
                         fx(ery * (1.5 + 1.0 * a[3])));
          break;
        case kShadowWinged:
          shadow.ellipse(pt(ecx, ey - ery * 0.5), fx(erx * (1.15 + 0.5 * a[3])),
                         fx(ery * (1.5 + 1.0 * a[3])));
          shadow.polygon({pt(ecx + side * erx * 0.6, ey - ery * 0.6),
                          pt(ecx + side * erx * (1.7 + 0.8 * a[3]), ey - ery * (1.8 + 1.0 * a[3])),
                          pt(ecx + side * erx * 0.9, ey + ery * 0.3)});
          break;
        default:
          shadow.ellipse(pt(ecx, ey), fx(erx * (1.5 + 0.6 * a[3])), fx(ery * (2.2 + 1.2 * a[3])));
          break;
      }
    }
    if (p.t[kEyeshadow] == kShadowSmoky) color = shade(color, 55, 100);
    paint(img, shadow, color, alpha_of(110, 145, a[2]));
  }

  // Eyes.
  Coverage sclera, iris;
  for (double side : {-1.0, 1.0}) {
    sclera.ellipse(pt(cx + side * ex, ey), fx(erx), fx(ery));
    iris.ellipse(pt(cx + side * ex, ey), fx(ery * 0.9), fx(ery * 0.9));
  }
  paint(img, sclera, kSclera);
  paint(img, iris, kIris);

  // Brows (a0 darkness).
  {
    const double by = ey - ery - map(7, s[7]);
    const double bl = map(8, s[8]);
    Coverage brow;
    Coverage thick;
    for (double side : {-1.0, 1.0}) {
      const double bx = cx + side * ex;
      // Offsets are (outward, down) relative to the brow centre.
      auto at = [&](double out, double down) { return pt(bx + side * out, by + down); };
      switch (p.t[kEyebrow]) {
        case kBrowStraight:
          brow.stroke(at(-bl, 0), at(bl, 0), fx(2.0));
          break;
        case kBrowArched:
          brow.polyline({at(-bl, 1), at(0, -2.5), at(bl, 1)}, fx(2.0));
          break;
        case kBrowAngled:
          brow.polyline({at(-bl, 0.5), at(0.4 * bl, -2.5), at(bl, 1.5)}, fx(2.0));
          break;
        default:
          thick.stroke(at(-bl, 0), at(bl, 0), fx(3.5));
          break;
      }
    }
    const Rgb color = lerp(kBrowLight, kBrowDark, a[0]);
    paint(img, brow, color);
    paint(img, thick, color);
  }

  // Nose.
  {
    const double top = ey + 2.0;
    const double bottom = top + map(9, s[9]);
    const double nw = map(10, s[10]);
    Coverage nose;
    nose.polygon({pt(cx, top), pt(cx + nw, bottom), pt(cx - nw, bottom)});
    paint(img, nose, skin_shadow);
  }

  // Mouth and lipstick (a4..a6 colour, a7..a8 inner tone, a9 gloss).
  {
    const double my = cy + map(11, s[11]);
    const double mw = map(12, s[12]);
    const double lt = map(13, s[13]);
    Coverage lips;
    lips.ellipse(pt(cx, my), fx(mw), fx(lt), INT64_MIN, fx(my) + 1);
    lips.ellipse(pt(cx, my), fx(mw), fx(lt * 1.3), fx(my) + 1);

    const Rgb lip_color{static_cast<std::uint8_t>(std::lround(255.0 * a[4])),
                        static_cast<std::uint8_t>(std::lround(255.0 * a[5])),
                        static_cast<std::uint8_t>(std::lround(255.0 * a[6]))};
    switch (p.t[kLipstick]) {
      case kLipNone:
        paint(img, lips, lerp(skin, kNaturalLip, 0.6));
        break;
      case kLipMatte:
        paint(img, lips, lip_color);
        break;
      case kLipTwoTone: {
        paint(img, lips, lip_color);
        Coverage inner;
        inner.ellipse(pt(cx, my), fx(mw * (0.3 + 0.5 * a[8])), fx(lt * (0.55 + 0.45 * a[8])));
        paint(img, inner, lerp(lip_color, kWhite, 0.15 + 0.85 * a[7]));
        break;
      }
      default: {
        paint(img, lips, lip_color);
        Coverage gloss;
        gloss.ellipse(pt(cx, my + lt * 0.65), fx(mw * 0.45), fx(std::max(1.0, lt * 0.4)));
        paint(img, gloss, kWhite, alpha_of(40, 200, a[9]));
        break;
      }
    }
    Coverage line;
    line.stroke(pt(cx - mw * 0.9, my), pt(cx + mw * 0.9, my), fx(0.6));
    paint(img, line, kMouthLine);
  }

  return img;
}

// --- schema ----------------------------------------------------------------

nlohmann::json schema_json(const EngineSchema& s) {
  using nlohmann::json;
  json j;
  j["version"] = s.version;
  j["canvas"] = {{"width", s.canvas}, {"height", s.canvas}, {"channels", 3}};
  json st = json::array();
  for (const auto& p : s.structure)
    st.push_back({{"name", p.name}, {"quantity", p.quantity}, {"base", p.base},
                  {"scale", p.scale}, {"unit", p.unit}});
  j["structure"] = st;
  json groups = json::array();
  for (std::size_t g = 0; g < s.groups.size(); ++g)
    groups.push_back({{"name", s.groups[g].name},
                      {"options", s.groups[g].options},
                      {"valid_attributes", s.mask_table[g]}});
  j["texture_groups"] = groups;
  json attrs = json::array();
  for (const auto& a : s.attributes)
    attrs.push_back({{"name", a.name}, {"description", a.description}});
  j["attributes"] = attrs;
  if (!s.hash.empty()) j["hash"] = s.hash;
  return j;
}

std::string compute_schema_hash(const EngineSchema& s) {
  EngineSchema copy = s;
  copy.hash.clear();
  return io::sha256_hex(schema_json(copy).dump());
}

EngineSchema schema_from_json(const nlohmann::json& j) {
  EngineSchema s;
  s.version = j.at("version").get<std::string>();
  s.canvas = j.at("canvas").at("width").get<int>();
  for (const auto& p : j.at("structure"))
    s.structure.push_back({p.at("name"), p.at("quantity"), p.at("base"), p.at("scale"), p.at("unit")});
  for (const auto& g : j.at("texture_groups")) {
    s.groups.push_back({g.at("name"), g.at("options").get<std::vector<std::string>>()});
    s.mask_table.push_back(g.at("valid_attributes").get<std::vector<std::vector<int>>>());
  }
  for (const auto& a : j.at("attributes")) s.attributes.push_back({a.at("name"), a.at("description")});
  s.hash = compute_schema_hash(s);
  return s;
}

const EngineSchema& schema() {
  static const EngineSchema instance = [] {
    EngineSchema s;
    s.version = "avatarcraft-engine/1";
    s.structure = structure_specs();
    s.groups = {
        {"eyebrow", {"straight", "arched", "angled", "thick"}},
        {"eyeshadow", {"none", "classic", "winged", "smoky"}},
        {"lipstick", {"none", "matte", "two_tone", "gloss"}},
        {"blush", {"none", "round", "contour"}},
    };
    s.attributes = {
        {"brow_darkness", "brow colour, light brown to near black"},
        {"eyeshadow_hue", "eyeshadow hue around the colour wheel"},
        {"eyeshadow_intensity", "eyeshadow opacity"},
        {"eyeshadow_extent", "eyeshadow size"},
        {"lip_red", "lipstick red channel"},
        {"lip_green", "lipstick green channel"},
        {"lip_blue", "lipstick blue channel"},
        {"inner_lip_lightness", "two-tone inner layer lightness"},
        {"inner_lip_extent", "two-tone inner layer size"},
        {"gloss_brightness", "gloss highlight opacity"},
        {"blush_intensity", "blush opacity"},
        {"blush_size", "blush size"},
    };
    s.mask_table = {
        {{0}, {0}, {0}, {0}},
        {{}, {1, 2, 3}, {1, 2, 3}, {1, 2, 3}},
        {{}, {4, 5, 6}, {4, 5, 6, 7, 8}, {4, 5, 6, 9}},
        {{}, {10, 11}, {10, 11}},
    };
    s.hash = compute_schema_hash(s);
    return s;
  }();
  return instance;
}

// --- JSON ------------------------------------------------------------------

nlohmann::json params_to_json(const CraftingParams& p) {
  return {{"s", p.s}, {"t", p.t}, {"a", p.a}};
}

CraftingParams params_from_json(const nlohmann::json& j) {
  CraftingParams p;
  std::vector<Issue> issues;
  if (!j.is_object()) throw ValidationError(std::vector<Issue>{{"body", "expected a JSON object"}});
  auto read = [&](const char* key, auto& out) {
    if (!j.contains(key)) {
      issues.push_back({key, "missing"});
      return;
    }
    const auto& arr = j.at(key);
    if (!arr.is_array() || arr.size() != out.size()) {
      issues.push_back({key, "expected an array of length " + std::to_string(out.size())});
      return;
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
      const auto& v = arr[i];
      const std::string field = std::string(key) + "[" + std::to_string(i) + "]";
      using T = std::decay_t<decltype(out[0])>;
      if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) {
          issues.push_back({field, "expected an integer"});
          continue;
        }
        out[i] = v.get<T>();
      } else {
        if (!v.is_number()) {
          issues.push_back({field, "expected a number"});
          continue;
        }
        out[i] = v.get<T>();
      }
    }
  };
  read("s", p.s);
  read("t", p.t);
  read("a", p.a);
  if (!issues.empty()) throw ValidationError(std::move(issues));
  return p;
}

}  // namespace avatarcraft::engine
