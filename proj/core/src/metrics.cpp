#include "glide/metrics.hpp"

#include <algorithm>
#include <cstdio>

#include "glide/base.hpp"
#include "glide/io.hpp"

namespace glide {

Tallies::Tallies(const Taxonomy& taxonomy) : tax(&taxonomy) {
  cells.resize(static_cast<size_t>(taxonomy.num_categories()));
  for (int c = 0; c < taxonomy.num_categories(); ++c)
    cells[static_cast<size_t>(c)].resize(static_cast<size_t>(taxonomy.n_c(c)));
  scored.resize(static_cast<size_t>(taxonomy.union_width()));
  category_instances.assign(static_cast<size_t>(taxonomy.num_categories()), 0);
}

void Tallies::accumulate(int category, const std::vector<double>& pred,
                         const std::vector<double>& values,
                         const std::vector<uint8_t>& supervised, double threshold) {
  if (category < 0 || category >= tax->num_categories())
    fail(ErrorCategory::data, "metrics: category " + std::to_string(category) + " out of range");
  const size_t w = static_cast<size_t>(tax->n_c(category));
  if (pred.size() != w || values.size() != w || supervised.size() != w)
    fail(ErrorCategory::data, "metrics: encoding mismatch for category " +
                                  std::to_string(category) + ": expected length " +
                                  std::to_string(w));
  auto groups = tax->category_groups(category);
  auto segments = tax->union_segments(category);
  auto& slots = cells[static_cast<size_t>(category)];
  for (size_t g = 0; g < groups.size(); ++g) {
    const auto [off, len] = groups[g];
    if (!supervised[static_cast<size_t>(off)]) continue;
    int predicted, target;
    if (len == 1) {
      predicted = pred[static_cast<size_t>(off)] >= threshold ? off : -1;
      target = values[static_cast<size_t>(off)] >= 0.5 ? off : -1;
    } else {
      predicted = off;
      target = off;
      for (int s = off; s < off + len; ++s) {
        if (pred[static_cast<size_t>(s)] > pred[static_cast<size_t>(predicted)]) predicted = s;
        if (values[static_cast<size_t>(s)] > values[static_cast<size_t>(target)]) target = s;
      }
    }
    for (int s = off; s < off + len; ++s) {
      SlotTally& cell = slots[static_cast<size_t>(s)];
      const bool pos = (s == target);
      const bool pred_pos = (s == predicted);
      if (pos) ++cell.p; else ++cell.n;
      if (pred_pos) ++cell.pp;
      if (pred_pos && pos) ++cell.tp;
      if (!pred_pos && !pos) ++cell.tn;
      const int uslot = segments[g].union_off + (s - off);
      scored[static_cast<size_t>(uslot)].push_back(
          {pred[static_cast<size_t>(s)], pos ? uint8_t{1} : uint8_t{0}});
    }
  }
  ++category_instances[static_cast<size_t>(category)];
  ++instances;
}

void Tallies::merge(const Tallies& other) {
  check_shape(cells.size() == other.cells.size(), "metrics: merging incompatible tallies");
  for (size_t c = 0; c < cells.size(); ++c) {
    check_shape(cells[c].size() == other.cells[c].size(),
                "metrics: merging incompatible tallies");
    for (size_t s = 0; s < cells[c].size(); ++s) {
      cells[c][s].tp += other.cells[c][s].tp;
      cells[c][s].tn += other.cells[c][s].tn;
      cells[c][s].p += other.cells[c][s].p;
      cells[c][s].n += other.cells[c][s].n;
      cells[c][s].pp += other.cells[c][s].pp;
    }
    category_instances[c] += other.category_instances[c];
  }
  for (size_t u = 0; u < scored.size(); ++u)
    scored[u].insert(scored[u].end(), other.scored[u].begin(), other.scored[u].end());
  instances += other.instances;
}

double average_precision(std::vector<std::pair<double, uint8_t>> scored) {
  int64_t total_pos = 0;
  for (const auto& [s, l] : scored) total_pos += l;
  if (total_pos == 0) return -1.0;
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  // One PR point per distinct score; tied scores enter together, which makes
  // the curve independent of the input order.
  std::vector<std::pair<double, double>> points;  // (recall, precision)
  int64_t tp = 0, pp = 0;
  size_t i = 0;
  while (i < scored.size()) {
    size_t j = i;
    while (j < scored.size() && scored[j].first == scored[i].first) {
      tp += scored[j].second;
      ++pp;
      ++j;
    }
    points.push_back({static_cast<double>(tp) / static_cast<double>(total_pos),
                      static_cast<double>(tp) / static_cast<double>(pp)});
    i = j;
  }
  // Monotone precision envelope: recall is nondecreasing along the sweep, so
  // the envelope at a point is the running max of precision from the right.
  double env = 0;
  for (size_t k = points.size(); k-- > 0;) {
    env = std::max(env, points[k].second);
    points[k].second = env;
  }
  double ap = 0, prev_r = 0;
  for (const auto& [r, prec] : points) {
    if (r > prev_r) ap += (r - prev_r) * prec;
    prev_r = std::max(prev_r, r);
  }
  return ap;
}

namespace {

struct MeanAcc {
  double sum = 0;
  int64_t count = 0;
  void add(double x) { sum += x; ++count; }
  double mean() const { return count ? sum / static_cast<double>(count) : 0.0; }
};

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

}  // namespace

MetricsReport compute_report(const Tallies& t, const std::string& subset) {
  const Taxonomy& tax = *t.tax;
  MetricsReport rep;
  rep.subset = subset;
  rep.instances = t.instances;
  rep.empty = t.instances == 0;

  MeanAcc flat_a, flat_p, flat_r;
  MeanAcc hier_a, hier_p, hier_r;
  for (int c = 0; c < tax.num_categories(); ++c) {
    const auto& slots = t.cells[static_cast<size_t>(c)];
    int64_t tp = 0, tn = 0, p = 0, n = 0, pp = 0;
    MeanAcc cat_a, cat_p, cat_r;
    for (const SlotTally& cell : slots) {
      tp += cell.tp; tn += cell.tn; p += cell.p; n += cell.n; pp += cell.pp;
      const bool seen = cell.p + cell.n > 0;
      if (cell.p > 0) cat_a.add(static_cast<double>(cell.tp) / static_cast<double>(cell.p));
      else if (seen) ++rep.skipped_terms;
      if (cell.n > 0) cat_a.add(static_cast<double>(cell.tn) / static_cast<double>(cell.n));
      else if (seen) ++rep.skipped_terms;
      if (cell.pp > 0) cat_p.add(static_cast<double>(cell.tp) / static_cast<double>(cell.pp));
      if (cell.p > 0) cat_r.add(static_cast<double>(cell.tp) / static_cast<double>(cell.p));
    }
    if (p + n == 0) continue;  // category never evaluated in this subset
    if (p > 0) flat_a.add(static_cast<double>(tp) / static_cast<double>(p));
    if (n > 0) flat_a.add(static_cast<double>(tn) / static_cast<double>(n));
    if (pp > 0) flat_p.add(static_cast<double>(tp) / static_cast<double>(pp));
    if (p > 0) flat_r.add(static_cast<double>(tp) / static_cast<double>(p));
    if (cat_a.count) hier_a.add(cat_a.mean());
    if (cat_p.count) hier_p.add(cat_p.mean());
    if (cat_r.count) hier_r.add(cat_r.mean());
    MetricsReport::CategoryRow row;
    row.name = tax.categories[static_cast<size_t>(c)].name;
    row.balanced_acc = cat_a.mean();
    row.precision = cat_p.mean();
    row.recall = cat_r.mean();
    row.instances = t.category_instances[static_cast<size_t>(c)];
    rep.categories.push_back(std::move(row));
  }
  rep.mA = flat_a.mean();
  rep.mP = flat_p.mean();
  rep.mR = flat_r.mean();
  rep.F1 = (rep.mP + rep.mR) > 0 ? 2 * rep.mP * rep.mR / (rep.mP + rep.mR) : 0.0;
  rep.h_mA = hier_a.mean();
  rep.h_mP = hier_p.mean();
  rep.h_mR = hier_r.mean();
  rep.h_F1 = (rep.h_mP + rep.h_mR) > 0 ? 2 * rep.h_mP * rep.h_mR / (rep.h_mP + rep.h_mR) : 0.0;

  MeanAcc map_acc;
  auto union_layout = tax.union_groups();
  for (size_t a = 0; a < union_layout.size(); ++a) {
    const auto [off, len] = union_layout[a];
    const AttributeSchema& schema = tax.attributes[a];
    for (int v = 0; v < len; ++v) {
      const auto& stream = t.scored[static_cast<size_t>(off + v)];
      if (stream.empty()) continue;
      MetricsReport::AttributeRow row;
      row.name = schema.multi_valued
                     ? schema.name + "=" + schema.values[static_cast<size_t>(v)]
                     : schema.name;
      for (const auto& [s, l] : stream) row.positives += l;
      row.ap = average_precision(stream);
      if (row.ap >= 0) map_acc.add(row.ap);
      else ++rep.zero_positive_attrs;
      rep.attributes.push_back(std::move(row));
    }
  }
  rep.mAP = map_acc.mean();
  return rep;
}

std::string MetricsReport::csv() const {
  std::string out = "kind,name,mA,mP,mR,F1,mAP,h_mA,h_mP,h_mR,h_F1,instances\n";
  out += "overall," + subset + "," + fmt(mA) + "," + fmt(mP) + "," + fmt(mR) + "," + fmt(F1) +
         "," + fmt(mAP) + "," + fmt(h_mA) + "," + fmt(h_mP) + "," + fmt(h_mR) + "," + fmt(h_F1) +
         "," + std::to_string(instances) + "\n";
  for (const auto& row : categories)
    out += "category," + row.name + "," + fmt(row.balanced_acc) + "," + fmt(row.precision) + "," +
           fmt(row.recall) + ",,,,,,," + std::to_string(row.instances) + "\n";
  for (const auto& row : attributes)
    out += "attribute," + row.name + ",,,,," + (row.ap >= 0 ? fmt(row.ap) : std::string()) +
           ",,,,," + std::to_string(row.positives) + "\n";
  return out;
}

std::string MetricsReport::text() const {
  std::string out;
  out += "subset: " + subset + "\n";
  out += "instances: " + std::to_string(instances) + (empty ? "  (empty subset)" : "") + "\n";
  out += "flat  mA " + fmt(mA) + "  mP " + fmt(mP) + "  mR " + fmt(mR) + "  F1 " + fmt(F1) +
         "  mAP " + fmt(mAP) + "\n";
  out += "hier  mA " + fmt(h_mA) + "  mP " + fmt(h_mP) + "  mR " + fmt(h_mR) + "  F1 " +
         fmt(h_F1) + "\n";
  out += "skipped zero-denominator terms: " + std::to_string(skipped_terms) +
         ", zero-positive attributes excluded from mAP: " + std::to_string(zero_positive_attrs) +
         "\n";
  for (const auto& row : categories)
    out += "  category " + row.name + ": bal_acc " + fmt(row.balanced_acc) + "  prec " +
           fmt(row.precision) + "  rec " + fmt(row.recall) + "  (" +
           std::to_string(row.instances) + " instances)\n";
  return out;
}

void MetricsReport::save_csv(const std::string& path) const {
  const std::string s = csv();
  write_file_bytes(path, s.data(), s.size());
}

void MetricsReport::save_text(const std::string& path) const {
  const std::string s = text();
  write_file_bytes(path, s.data(), s.size());
}

}  // namespace glide
