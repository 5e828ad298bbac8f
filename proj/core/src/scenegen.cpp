#include "glide/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "glide/base.hpp"
#include "glide/io.hpp"
#include "glide/rng.hpp"

namespace glide {

namespace {

constexpr int CAT_BLOCK = 0, CAT_DISK = 1, CAT_POLE = 2, CAT_STRIP = 3;
constexpr int ORI_NORTH = 0, ORI_EAST = 1, ORI_SOUTH = 2, ORI_WEST = 3;

// One planned object, axis-aligned. (cx, cy) is the center and (w, h) the
// full extents in pixel units; disks use them as ellipse diameters.
struct ObjPlan {
  int cat = 0;
  int color = 0;
  double cx = 0, cy = 0, w = 0, h = 0;
  int orientation = -1;  // pole/strip only

  bool inside(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    if (cat == CAT_DISK) {
      const double nx = dx / (w * 0.5), ny = dy / (h * 0.5);
      return nx * nx + ny * ny <= 1.0;
    }
    return std::abs(dx) <= w * 0.5 && std::abs(dy) <= h * 0.5;
  }

  // The cap is the darker 18% of the bar at the end the orientation names.
  bool in_cap(double x, double y) const {
    if (orientation < 0) return false;
    switch (orientation) {
      case ORI_NORTH: return y <= cy - h * 0.5 + h * 0.18;
      case ORI_SOUTH: return y >= cy + h * 0.5 - h * 0.18;
      case ORI_EAST: return x >= cx + w * 0.5 - w * 0.18;
      default: return x <= cx - w * 0.5 + w * 0.18;  // west
    }
  }

  bool elongated() const { return cat == CAT_POLE || cat == CAT_STRIP; }
  double long_len() const { return std::max(w, h); }
};

double clampd(double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); }

// Samples one object's geometry; position comes later.
ObjPlan sample_object(int cat, Rng& rng) {
  ObjPlan o;
  o.cat = cat;
  o.color = static_cast<int>(rng.below(8));
  switch (cat) {
    case CAT_BLOCK: {
      o.w = 24 + static_cast<double>(rng.below(67));
      o.h = clampd(24 + static_cast<double>(rng.below(67)), o.w / 3.0, o.w * 3.0);
      break;
    }
    case CAT_DISK: {
      o.w = 24 + static_cast<double>(rng.below(67));
      o.h = clampd(24 + static_cast<double>(rng.below(67)), o.w / 2.5, o.w * 2.5);
      break;
    }
    case CAT_POLE: {
      const double t = 6 + static_cast<double>(rng.below(7));  // thickness 6..12
      const double aspect = rng.uniform(5.5, 9.0);
      const double len = std::round(t * aspect);
      const bool vertical = rng.below(2) == 0;
      if (vertical) {
        o.w = t;
        o.h = len;
        o.orientation = rng.below(2) == 0 ? ORI_NORTH : ORI_SOUTH;
      } else {
        o.w = len;
        o.h = t;
        o.orientation = rng.below(2) == 0 ? ORI_EAST : ORI_WEST;
      }
      break;
    }
    default: {  // strip: very thin horizontal bar
      o.h = 2 + static_cast<double>(rng.below(2));  // 2..3
      o.w = 80 + static_cast<double>(rng.below(81));
      o.orientation = rng.below(2) == 0 ? ORI_EAST : ORI_WEST;
      break;
    }
  }
  return o;
}

// Places `o` in the scene. Later objects are biased toward overlapping an
// earlier one so the occlusion attribute has positive examples: elongated
// targets are crossed near their middle (keeping both ends and the bounding
// box visible), compact targets are overlapped near their center.
void place_object(ObjPlan& o, const std::vector<ObjPlan>& prev, int S, Rng& rng) {
  const double margin = 4;
  const double xlo = o.w * 0.5 + margin, xhi = S - margin - o.w * 0.5;
  const double ylo = o.h * 0.5 + margin, yhi = S - margin - o.h * 0.5;
  bool biased = false;
  if (!prev.empty() && rng.below(100) < 45) {
    const ObjPlan& t = prev[rng.below(prev.size())];
    if (t.elongated()) {
      const double along = rng.uniform(-0.25, 0.25) * t.long_len();
      const double across = rng.uniform(-0.5, 0.5) * (std::min(t.w, t.h) + std::min(o.w, o.h));
      if (t.h > t.w) {  // vertical bar: jitter along y
        o.cx = t.cx + across;
        o.cy = t.cy + along;
      } else {
        o.cx = t.cx + along;
        o.cy = t.cy + across;
      }
    } else {
      o.cx = t.cx + rng.uniform(-0.6, 0.6) * (t.w * 0.5 + o.w * 0.5);
      o.cy = t.cy + rng.uniform(-0.6, 0.6) * (t.h * 0.5 + o.h * 0.5);
    }
    biased = true;
  }
  if (!biased) {
    o.cx = rng.uniform(xlo, xhi);
    o.cy = rng.uniform(ylo, yhi);
  }
  o.cx = clampd(o.cx, xlo, xhi);
  o.cy = clampd(o.cy, ylo, yhi);
}

Tensor<float> rasterize(const ObjPlan& o, int S) {
  Tensor<float> m = Tensor<float>::zeros({1, S, S});
  const int r0 = std::max(0, static_cast<int>(std::floor(o.cy - o.h * 0.5)));
  const int r1 = std::min(S - 1, static_cast<int>(std::ceil(o.cy + o.h * 0.5)));
  const int c0 = std::max(0, static_cast<int>(std::floor(o.cx - o.w * 0.5)));
  const int c1 = std::min(S - 1, static_cast<int>(std::ceil(o.cx + o.w * 0.5)));
  for (int r = r0; r <= r1; ++r)
    for (int c = c0; c <= c1; ++c)
      if (o.inside(c + 0.5, r + 0.5)) m[static_cast<int64_t>(r) * S + c] = 1.0f;
  return m;
}

struct Muted {
  float r, g, b;
};

Muted muted_color(Rng& rng) {
  const double v = rng.uniform(0.12, 0.32);
  auto jitter = [&]() { return clampd(v + rng.uniform(-0.04, 0.04), 0.0, 1.0); };
  Muted m;
  m.r = static_cast<float>(jitter());
  m.g = static_cast<float>(jitter());
  m.b = static_cast<float>(jitter());
  return m;
}

}  // namespace

const std::array<std::array<float, 3>, 8>& synthetic_palette() {
  static const std::array<std::array<float, 3>, 8> pal = {{
      {0.85f, 0.10f, 0.10f},  // red
      {0.10f, 0.75f, 0.10f},  // green
      {0.15f, 0.20f, 0.90f},  // blue
      {0.90f, 0.85f, 0.10f},  // yellow
      {0.10f, 0.80f, 0.85f},  // cyan
      {0.85f, 0.15f, 0.80f},  // magenta
      {0.95f, 0.95f, 0.95f},  // white
      {0.55f, 0.55f, 0.55f},  // gray
  }};
  return pal;
}

Taxonomy synthetic_taxonomy() {
  Taxonomy t;
  t.style = Taxonomy::Style::per_category;
  t.attributes = {
      {"color", true, {"red", "green", "blue", "yellow", "cyan", "magenta", "white", "gray"}},
      {"relative_size", true, {"not_largest", "largest"}},
      {"occluded", true, {"no", "yes"}},
      {"orientation", true, {"north", "east", "south", "west"}},
  };
  t.categories = {
      {"block", 0, {0, 1, 2}},
      {"disk", 1, {0, 1, 2}},
      {"pole", 2, {0, 1, 2, 3}},
      {"strip", 3, {0, 1, 2, 3}},
  };
  return t;
}

void GenSpec::validate() const {
  if (image_size != 224)
    fail(ErrorCategory::config, "gen: image_size must be 224 (the renderer is calibrated to it)");
  if (counts.empty()) fail(ErrorCategory::config, "gen: counts must name at least one category");
  Taxonomy tax = synthetic_taxonomy();
  int64_t total = 0;
  for (const auto& [name, count] : counts) {
    if (tax.category_index(name) < 0)
      fail(ErrorCategory::config, "gen: unknown category '" + name + "'");
    if (count < 0) fail(ErrorCategory::config, "gen: negative count for '" + name + "'");
    total += count;
  }
  if (total == 0) fail(ErrorCategory::config, "gen: zero instances requested");
  if (min_objects < 1 || max_objects < min_objects || max_objects > 8)
    fail(ErrorCategory::config, "gen: need 1 <= min_objects <= max_objects <= 8");
  if (!(min_visibility > 0 && min_visibility <= 1))
    fail(ErrorCategory::config, "gen: min_visibility must be in (0,1]");
  if (unclear_rate < 0 || unclear_rate > 1)
    fail(ErrorCategory::config, "gen: unclear_rate must be in [0,1]");
  if (min_occluded_fraction < 0 || min_occluded_fraction > 1)
    fail(ErrorCategory::config, "gen: min_occluded_fraction must be in [0,1]");
  if (min_occluded_fraction > 0 && max_objects < 2)
    fail(ErrorCategory::config,
         "gen: occlusion is unsatisfiable with a single object per scene");
}

GenSpec gen_request(const GeneratorSpec& spec,
                    const std::vector<std::pair<std::string, int>>& counts) {
  GenSpec s;
  s.image_size = spec.image_size;
  s.counts = counts;
  s.min_objects = spec.min_objects;
  s.max_objects = spec.max_objects;
  s.min_visibility = spec.min_visibility;
  s.unclear_rate = spec.unclear_prob;
  s.min_occluded_fraction = spec.min_occluded_fraction;
  s.validate();
  return s;
}

SceneRender render_scene(const GenSpec& spec, uint64_t seed, int scene_index,
                         const std::vector<int>& categories) {
  const int S = spec.image_size;
  const size_t n = categories.size();
  check_shape(n >= 1, "render_scene: empty category list");
  Taxonomy tax = synthetic_taxonomy();
  Rng rng(seed, "scene." + std::to_string(scene_index));

  // Plan a layout; reject and replan until every object keeps at least
  // min_visibility of its area visible under the later-drawn objects.
  // The comparison is integer-scaled so it cannot drift with rounding.
  const int64_t vis_scale = 1000000;
  const int64_t vis_num = std::llround(spec.min_visibility * static_cast<double>(vis_scale));
  std::vector<ObjPlan> plan;
  std::vector<Tensor<float>> full, modal;
  std::vector<int64_t> full_area(n), modal_area(n);
  for (int attempt = 0;; ++attempt) {
    if (attempt >= 500)
      fail(ErrorCategory::data, "gen: scene " + std::to_string(scene_index) +
                                    ": cannot satisfy the visibility floor");
    plan.clear();
    for (size_t i = 0; i < n; ++i) {
      ObjPlan o = sample_object(categories[i], rng);
      place_object(o, plan, S, rng);
      plan.push_back(o);
    }
    full.clear();
    modal.clear();
    for (const ObjPlan& o : plan) full.push_back(rasterize(o, S));
    // Modal mask: full minus everything drawn later (later = on top).
    Tensor<float> above = Tensor<float>::zeros({1, S, S});
    modal.resize(n);
    for (size_t i = n; i-- > 0;) {
      Tensor<float> m = Tensor<float>::zeros({1, S, S});
      for (int64_t p = 0; p < m.numel(); ++p)
        m[p] = (full[i][p] > 0.5f && above[p] < 0.5f) ? 1.0f : 0.0f;
      for (int64_t p = 0; p < m.numel(); ++p)
        if (full[i][p] > 0.5f) above[p] = 1.0f;
      modal[i] = std::move(m);
    }
    bool ok = true;
    for (size_t i = 0; i < n; ++i) {
      full_area[i] = 0;
      modal_area[i] = 0;
      for (int64_t p = 0; p < full[i].numel(); ++p) {
        full_area[i] += full[i][p] > 0.5f ? 1 : 0;
        modal_area[i] += modal[i][p] > 0.5f ? 1 : 0;
      }
      ok &= modal_area[i] * vis_scale >= full_area[i] * vis_num;
    }
    if (ok) break;
  }

  SceneRender out;
  out.full_mask = std::move(full);
  out.modal_mask = std::move(modal);
  out.category = categories;

  // Analytic labels from the accepted plan.
  for (size_t i = 0; i < n; ++i) {
    const int cat = categories[i];
    std::vector<double> values(static_cast<size_t>(tax.n_c(cat)), 0.0);
    std::vector<uint8_t> sup(values.size(), 1);
    auto groups = tax.category_groups(cat);
    const auto& attrs = tax.categories[static_cast<size_t>(cat)].attrs;
    bool largest = true;
    for (size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      if (full_area[j] > full_area[i] || (full_area[j] == full_area[i] && j < i))
        largest = false;
    }
    const bool occluded = (full_area[i] - modal_area[i]) * 10 >= full_area[i];
    for (size_t g = 0; g < attrs.size(); ++g) {
      const auto [off, len] = groups[g];
      const std::string& aname = tax.attributes[static_cast<size_t>(attrs[g])].name;
      int v = 0;
      if (aname == "color") v = plan[i].color;
      else if (aname == "relative_size") v = largest ? 1 : 0;
      else if (aname == "occluded") v = occluded ? 1 : 0;
      else v = plan[i].orientation;
      check_shape(v >= 0 && v < len, "render_scene: label out of range");
      values[static_cast<size_t>(off + v)] = 1.0;
    }
    if (spec.unclear_rate > 0 && rng.uniform(0, 1) < spec.unclear_rate) {
      const auto [off, len] = groups[rng.below(groups.size())];
      for (int s = off; s < off + len; ++s) sup[static_cast<size_t>(s)] = 0;
    }
    out.values.push_back(std::move(values));
    out.supervised.push_back(std::move(sup));
  }

  // Render the image at 4x4 supersampling: muted background patches first,
  // then the objects in z order with their darker orientation caps.
  const int F = 4, SS = S * F;
  std::vector<float> sub(static_cast<size_t>(3) * SS * SS);
  const Muted base = muted_color(rng);
  for (int64_t p = 0; p < static_cast<int64_t>(SS) * SS; ++p) {
    sub[static_cast<size_t>(p)] = base.r;
    sub[static_cast<size_t>(p) + static_cast<size_t>(SS) * SS] = base.g;
    sub[static_cast<size_t>(p) + 2ull * SS * SS] = base.b;
  }
  const int n_patches = 3 + static_cast<int>(rng.below(4));
  for (int q = 0; q < n_patches; ++q) {
    const double pw = 40 + static_cast<double>(rng.below(101));
    const double ph = 40 + static_cast<double>(rng.below(101));
    const double pcx = rng.uniform(0, S), pcy = rng.uniform(0, S);
    const Muted col = muted_color(rng);
    const int sr0 = std::max(0, static_cast<int>((pcy - ph / 2) * F));
    const int sr1 = std::min(SS - 1, static_cast<int>((pcy + ph / 2) * F));
    const int sc0 = std::max(0, static_cast<int>((pcx - pw / 2) * F));
    const int sc1 = std::min(SS - 1, static_cast<int>((pcx + pw / 2) * F));
    for (int r = sr0; r <= sr1; ++r)
      for (int c = sc0; c <= sc1; ++c) {
        const size_t p = static_cast<size_t>(r) * SS + c;
        sub[p] = col.r;
        sub[p + static_cast<size_t>(SS) * SS] = col.g;
        sub[p + 2ull * SS * SS] = col.b;
      }
  }
  for (const ObjPlan& o : plan) {
    const auto& col = synthetic_palette()[static_cast<size_t>(o.color)];
    const int sr0 = std::max(0, static_cast<int>((o.cy - o.h / 2 - 1) * F));
    const int sr1 = std::min(SS - 1, static_cast<int>((o.cy + o.h / 2 + 1) * F));
    const int sc0 = std::max(0, static_cast<int>((o.cx - o.w / 2 - 1) * F));
    const int sc1 = std::min(SS - 1, static_cast<int>((o.cx + o.w / 2 + 1) * F));
    for (int r = sr0; r <= sr1; ++r)
      for (int c = sc0; c <= sc1; ++c) {
        const double x = (c + 0.5) / F, y = (r + 0.5) / F;
        if (!o.inside(x, y)) continue;
        const float scale = o.in_cap(x, y) ? 0.45f : 1.0f;
        const size_t p = static_cast<size_t>(r) * SS + c;
        sub[p] = col[0] * scale;
        sub[p + static_cast<size_t>(SS) * SS] = col[1] * scale;
        sub[p + 2ull * SS * SS] = col[2] * scale;
      }
  }
  out.image = Tensor<float>::zeros({3, S, S});
  for (int ch = 0; ch < 3; ++ch)
    for (int r = 0; r < S; ++r)
      for (int c = 0; c < S; ++c) {
        float acc = 0;
        for (int dr = 0; dr < F; ++dr)
          for (int dc = 0; dc < F; ++dc)
            acc += sub[(static_cast<size_t>(ch) * SS + static_cast<size_t>(r * F + dr)) * SS +
                       static_cast<size_t>(c * F + dc)];
        out.image[(static_cast<int64_t>(ch) * S + r) * S + c] = acc / (F * F);
      }
  // Mild per-pixel brightness noise, shared across channels.
  for (int r = 0; r < S; ++r)
    for (int c = 0; c < S; ++c) {
      const float d = static_cast<float>(rng.uniform(-0.02, 0.02));
      for (int ch = 0; ch < 3; ++ch) {
        float& v = out.image[(static_cast<int64_t>(ch) * S + r) * S + c];
        v = std::min(1.0f, std::max(0.0f, v + d));
      }
    }
  return out;
}

Dataset generate_synthetic(const GenSpec& spec, uint64_t seed, const std::string& out_dir) {
  spec.validate();
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "blobs");

  Taxonomy tax = synthetic_taxonomy();
  std::vector<int> deck;
  for (const auto& [name, count] : spec.counts) {
    const int cat = tax.category_index(name);
    for (int i = 0; i < count; ++i) deck.push_back(cat);
  }
  Rng drng(seed, "deck");
  for (size_t i = deck.size(); i-- > 1;)
    std::swap(deck[i], deck[drng.below(i + 1)]);

  Dataset d;
  d.root = out_dir;
  d.taxonomy = tax;
  int64_t occluded_total = 0;
  const int occ_off = 8;  // occluded group offset: after the 8 color slots
  size_t pos = 0;
  int scene_id = 0, instance_id = 0;
  char buf[64];
  while (pos < deck.size()) {
    size_t take = static_cast<size_t>(spec.min_objects) +
                  drng.below(static_cast<uint64_t>(spec.max_objects - spec.min_objects + 1));
    take = std::min(take, deck.size() - pos);
    std::vector<int> cats(deck.begin() + static_cast<long>(pos),
                          deck.begin() + static_cast<long>(pos + take));
    pos += take;
    SceneRender sr = render_scene(spec, seed, scene_id, cats);
    std::snprintf(buf, sizeof buf, "blobs/scene_%05d.gltn", scene_id);
    const std::string image_path = buf;
    write_blob(out_dir + "/" + image_path, sr.image);
    for (size_t i = 0; i < cats.size(); ++i) {
      std::snprintf(buf, sizeof buf, "blobs/mask_%06d.gltn", instance_id);
      InstanceRecord r;
      r.id = instance_id;
      r.scene = scene_id;
      r.image_path = image_path;
      r.mask_path = buf;
      r.category = cats[i];
      r.values = sr.values[i];
      r.supervised = sr.supervised[i];
      r.provenance = "synth:seed=" + std::to_string(seed) + ":scene=" + std::to_string(scene_id);
      write_blob(out_dir + "/" + r.mask_path, sr.modal_mask[i]);
      occluded_total += sr.values[i][occ_off + 1] == 1.0 ? 1 : 0;
      d.instances.push_back(std::move(r));
      ++instance_id;
    }
    ++scene_id;
  }
  if (spec.min_occluded_fraction > 0 &&
      static_cast<double>(occluded_total) <
          spec.min_occluded_fraction * static_cast<double>(d.instances.size()))
    fail(ErrorCategory::data, "gen: achieved occluded fraction " +
                                  std::to_string(static_cast<double>(occluded_total) /
                                                 static_cast<double>(d.instances.size())) +
                                  " is below the requested minimum");
  d.save();
  d.validate();
  d.rebuild_scene_index();
  return d;
}

}  // namespace glide
