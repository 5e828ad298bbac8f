#include "glide/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "glide/checkpoint.hpp"
#include "glide/crop.hpp"
#include "glide/io.hpp"
#include "glide/optimizer.hpp"
#include "glide/rng.hpp"

namespace glide {

namespace {

Tensor<float> as_image4(const Tensor<float>& t) {
  return Tensor<float>({1, t.dim(0), t.dim(1), t.dim(2)}, t.data);
}

// Preloaded training views of one instance: its scene (shared tensor), mask,
// crop, and encoded targets.
struct Sample {
  int scene = 0;
  int category = 0;
  Tensor<float> crop_image;  // [1,3,S,S] at the model input size
  Tensor<float> crop_mask;   // [1,1,S,S]
  Tensor<float> scene_small; // [1,3,S,S]
  AttrTargets<float> union_tgt;
  AttrTargets<float> cat_tgt;  // category encoding (stage II)
};

struct Corpus {
  std::vector<Sample> samples;
  std::vector<std::vector<SceneObject>> objects;  // per scene
  int source_size = 0;                            // scene pixels (blobs)
};

Corpus preload(const Dataset& data, int input_size) {
  if (data.instances.empty()) fail(ErrorCategory::data, "train: dataset is empty");
  Corpus c;
  c.objects.resize(data.scene_instances.size());
  std::vector<Tensor<float>> scene_img(data.scene_instances.size());
  std::vector<Tensor<float>> scene_small(data.scene_instances.size());
  for (const InstanceRecord& r : data.instances) {
    Sample s;
    s.scene = r.scene;
    s.category = r.category;
    if (!scene_img[static_cast<size_t>(r.scene)].defined()) {
      Tensor<float> img = as_image4(data.load_image(r));
      scene_img[static_cast<size_t>(r.scene)] = img;
      scene_small[static_cast<size_t>(r.scene)] = resize_image(img, input_size);
      if (c.source_size == 0) c.source_size = img.dim(2);
      if (img.dim(2) != c.source_size || img.dim(3) != c.source_size)
        fail(ErrorCategory::data, "train: scenes must share one square size");
    }
    const Tensor<float>& img = scene_img[static_cast<size_t>(r.scene)];
    Tensor<float> m3 = data.load_mask(r);
    Tensor<float> mask({1, 1, m3.dim(1), m3.dim(2)}, m3.data);
    Crop<float> crop = make_crop(img, mask, input_size);
    s.crop_image = crop.image;
    s.crop_mask = crop.mask;
    s.scene_small = scene_small[static_cast<size_t>(r.scene)];
    s.union_tgt = encode_union_targets<float>(r.values, r.supervised, r.category, data.taxonomy);
    s.cat_tgt.values.assign(r.values.begin(), r.values.end());
    s.cat_tgt.supervised.assign(r.supervised.begin(), r.supervised.end());

    SceneObject obj;
    obj.category = r.category;
    auto [cr, cc] = mask_centroid(mask);
    obj.centroid_r = cr;
    obj.centroid_c = cc;
    PixelBox box = tight_bbox(mask);
    obj.bbox_h = box.height();
    obj.bbox_w = box.width();
    for (int64_t p = 0; p < mask.numel(); ++p) obj.area += mask[p] > 0.5f ? 1 : 0;
    c.objects[static_cast<size_t>(r.scene)].push_back(obj);

    c.samples.push_back(std::move(s));
  }
  return c;
}

// Stacks per-sample [1,...] tensors into one [N,...] batch tensor.
Tensor<float> stack(const std::vector<const Tensor<float>*>& rows) {
  Shape s = rows[0]->shape;
  s[0] = static_cast<int>(rows.size());
  Tensor<float> out = Tensor<float>::zeros(s);
  const int64_t stride = rows[0]->numel();
  for (size_t i = 0; i < rows.size(); ++i)
    std::copy_n(rows[i]->ptr(), stride, out.ptr() + static_cast<int64_t>(i) * stride);
  return out;
}

std::vector<int> shuffled_indices(size_t n, uint64_t seed, const std::string& stream,
                                  uint64_t* draws) {
  std::vector<int> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
  Rng rng(seed, stream);
  for (size_t i = n; i-- > 1;) std::swap(order[i], order[rng.below(i + 1)]);
  *draws = rng.counter();
  return order;
}

void ensure_finite(double total, int64_t step) {
  if (!std::isfinite(total))
    fail(ErrorCategory::numeric,
         "train: loss is not finite at step " + std::to_string(step) + "; training diverged");
}

// CSV helpers: fixed column set per stage, blank cells for terms a variant
// does not produce.
const std::vector<std::string>& stage1_columns() {
  static const std::vector<std::string> cols = {"g_conf", "g_cat",  "g_dims", "g_center",
                                                "g_total", "l_mask", "l_cat",  "l_attr",
                                                "l_total", "i_attr", "i_total"};
  return cols;
}

void write_csv_row(std::ofstream& out, int64_t step, int epoch,
                   const std::map<std::string, double>& terms,
                   const std::vector<std::string>& cols, double total) {
  out << step << "," << epoch;
  for (const auto& c : cols) {
    auto it = terms.find(c);
    out << ",";
    if (it != terms.end()) out << fmt_g(it->second);
  }
  out << "," << fmt_g(total) << "\n";
}

}  // namespace

std::vector<SceneObject> scene_objects(const Dataset& d, int scene) {
  if (scene < 0 || scene >= static_cast<int>(d.scene_instances.size()))
    fail(ErrorCategory::data, "scene_objects: scene id out of range");
  std::vector<SceneObject> out;
  for (int idx : d.scene_instances[static_cast<size_t>(scene)]) {
    const InstanceRecord& r = d.instances[static_cast<size_t>(idx)];
    Tensor<float> m3 = d.load_mask(r);
    Tensor<float> mask({1, 1, m3.dim(1), m3.dim(2)}, m3.data);
    SceneObject obj;
    obj.category = r.category;
    auto [cr, cc] = mask_centroid(mask);
    obj.centroid_r = cr;
    obj.centroid_c = cc;
    PixelBox box = tight_bbox(mask);
    obj.bbox_h = box.height();
    obj.bbox_w = box.width();
    for (int64_t p = 0; p < mask.numel(); ++p) obj.area += mask[p] > 0.5f ? 1 : 0;
    out.push_back(obj);
  }
  return out;
}

TrainResult train(const TrainConfig& cfg, const Dataset& data, const std::string& out_dir) {
  cfg.validate();
  data.taxonomy.validate();
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  cfg.save(out_dir + "/config.json");

  GlideNet<float> net(data.taxonomy, cfg.variant, cfg.profile, cfg.seed);
  const int S = net.bb_cfg.input_size;
  const int grid = S / 8;
  Corpus corpus = preload(data, S);
  const Taxonomy& tax = data.taxonomy;
  AdamConfig acfg;
  acfg.lr = cfg.lr;

  TrainResult result;
  int64_t step = 0;
  uint64_t shuffle_draws = 0;

  auto run_batch_stage1 = [&](const std::vector<int>& batch, std::ofstream& csv, int epoch) {
    const int N = static_cast<int>(batch.size());
    std::vector<const Tensor<float>*> scenes, crops, masks;
    std::vector<std::vector<SceneObject>> objs;
    std::vector<int> cats;
    std::vector<AttrTargets<float>> union_tgt;
    for (int idx : batch) {
      const Sample& s = corpus.samples[static_cast<size_t>(idx)];
      scenes.push_back(&s.scene_small);
      crops.push_back(&s.crop_image);
      masks.push_back(&s.crop_mask);
      objs.push_back(corpus.objects[static_cast<size_t>(s.scene)]);
      cats.push_back(s.category);
      union_tgt.push_back(s.union_tgt);
    }
    Tensor<float> crop_batch = stack(crops);
    Tensor<float> mask_batch = stack(masks);

    Tape<float> tape;
    net.params.watch_all(tape);
    LossResult<float> g;
    g.total = Tensor<float>::zeros({1});
    if (net.use_gfe()) {
      Tensor<float> scene_batch = stack(scenes);
      DetectionTargets<float> dt =
          build_detection_targets<float>(objs, grid, corpus.source_size);
      g = loss_gfe(net.stage1_gfe(scene_batch, true, &tape), dt, cfg.weights, &tape);
    }
    auto lf = net.stage1_lfe(crop_batch, true, &tape);
    LossResult<float> l = loss_lfe(lf.mask_pred, mask_batch, lf.cat_probs, cats, lf.attrs,
                                   union_tgt, tax, cfg.weights, &tape);
    LossResult<float> i;
    i.total = Tensor<float>::zeros({1});
    if (net.use_ife())
      i = loss_ife(net.stage1_ife(crop_batch, mask_batch, true, &tape), union_tgt, tax,
                   cfg.weights, &tape);
    LossResult<float> total = stage1_total(g, l, i, &tape);
    const double loss = static_cast<double>(total.total[0]);
    ensure_finite(loss, step);
    tape.backward(total.total);
    for (auto& p : net.params.params) {
      const auto& grad = tape.grad(*p.tensor);
      if (!grad.empty()) adam_step(*p.tensor, grad, *p.state, acfg);
    }
    net.params.unwatch_all();
    write_csv_row(csv, step, epoch, total.terms, stage1_columns(), loss);
    ++step;
    ++result.steps;
    return loss;
  };

  auto run_batch_stage2 = [&](const std::vector<int>& batch, std::ofstream& csv, int epoch) {
    const int N = static_cast<int>(batch.size());
    std::vector<const Tensor<float>*> scenes, crops, masks;
    std::vector<int> cats;
    std::vector<AttrTargets<float>> cat_tgt;
    for (int idx : batch) {
      const Sample& s = corpus.samples[static_cast<size_t>(idx)];
      scenes.push_back(&s.scene_small);
      crops.push_back(&s.crop_image);
      masks.push_back(&s.crop_mask);
      cats.push_back(s.category);
      cat_tgt.push_back(s.cat_tgt);
    }
    Tensor<float> scene_batch = stack(scenes);
    Tensor<float> crop_batch = stack(crops);
    Tensor<float> mask_batch = stack(masks);

    Tape<float> tape;
    if (cfg.train_extractors_stage2) {
      net.params.watch_all(tape);
    } else {
      for (auto& p : net.params.params) {
        const bool extractor = p.name.rfind("gfe.", 0) == 0 || p.name.rfind("lfe.", 0) == 0 ||
                               p.name.rfind("ife.", 0) == 0;
        if (!extractor) tape.watch(*p.tensor);
      }
    }
    auto out = net.stage2_forward(scene_batch, crop_batch, mask_batch, cats, true, &tape);
    LossResult<float> total =
        stage2_total(out.attrs, out.routed, cat_tgt, out.cat_probs, cats, tax, cfg.weights, &tape);
    const double loss = static_cast<double>(total.total[0]);
    ensure_finite(loss, step);
    tape.backward(total.total);
    for (auto& p : net.params.params) {
      const auto& grad = tape.grad(*p.tensor);
      if (!grad.empty()) adam_step(*p.tensor, grad, *p.state, acfg);
    }
    net.params.unwatch_all();
    static const std::vector<std::string> cols = {"ii_attr", "ii_cat"};
    write_csv_row(csv, step, epoch, total.terms, cols, loss);
    ++step;
    ++result.steps;
    return loss;
  };

  auto run_stage = [&](int stage, int epochs, auto&& run_batch, std::vector<double>& epoch_loss) {
    std::ofstream csv(out_dir + "/train_stage" + std::to_string(stage) + ".csv",
                      std::ios::binary);
    csv << "step,epoch";
    if (stage == 1)
      for (const auto& c : stage1_columns()) csv << "," << c;
    else
      csv << ",ii_attr,ii_cat";
    csv << ",total\n";
    for (int e = 0; e < epochs; ++e) {
      std::vector<int> order =
          shuffled_indices(corpus.samples.size(), cfg.seed,
                           "shuffle.stage" + std::to_string(stage) + ".epoch" + std::to_string(e),
                           &shuffle_draws);
      double sum = 0;
      int batches = 0;
      for (size_t at = 0; at < order.size(); at += static_cast<size_t>(cfg.batch_size)) {
        const size_t hi = std::min(order.size(), at + static_cast<size_t>(cfg.batch_size));
        std::vector<int> batch(order.begin() + static_cast<long>(at),
                               order.begin() + static_cast<long>(hi));
        sum += run_batch(batch, csv, e);
        ++batches;
      }
      epoch_loss.push_back(batches ? sum / batches : 0.0);
      char name[64];
      std::snprintf(name, sizeof name, "/ckpt_stage%d_epoch%02d.glck", stage, e + 1);
      const std::string path = out_dir + name;
      save_checkpoint(path, net.params, tax, stage, e + 1, {{"shuffle", shuffle_draws}});
      result.checkpoints.push_back(path);
    }
  };

  run_stage(1, cfg.stage1_epochs, run_batch_stage1, result.stage1_epoch_loss);
  run_stage(2, cfg.stage2_epochs, run_batch_stage2, result.stage2_epoch_loss);

  const int final_stage = cfg.stage2_epochs > 0 ? 2 : (cfg.stage1_epochs > 0 ? 1 : 0);
  const int final_epoch = final_stage == 2 ? cfg.stage2_epochs : cfg.stage1_epochs;
  result.final_checkpoint = out_dir + "/ckpt_final.glck";
  save_checkpoint(result.final_checkpoint, net.params, tax, final_stage, final_epoch,
                  {{"shuffle", shuffle_draws}});
  return result;
}

EvalResult evaluate(GlideNet<float>& net, const Dataset& data, const EvalOptions& opt) {
  if (opt.subset != "all" && opt.subset != "low-pixel")
    fail(ErrorCategory::config, "evaluate: subset must be 'all' or 'low-pixel'");
  if (opt.batch_size < 1) fail(ErrorCategory::config, "evaluate: batch_size must be >= 1");
  const int S = net.bb_cfg.input_size;
  Tape<float>* const no_tape = nullptr;

  // Gather the subset first (crop fractions are recomputed here, at the
  // model's input resolution), then score it in batches.
  struct Row {
    const InstanceRecord* rec;
    Tensor<float> scene, crop, mask;
  };
  std::vector<Row> rows;
  std::vector<Tensor<float>> scene_small(data.scene_instances.size());
  for (const InstanceRecord& r : data.instances) {
    Tensor<float> img = as_image4(data.load_image(r));
    Tensor<float> m3 = data.load_mask(r);
    Tensor<float> mask({1, 1, m3.dim(1), m3.dim(2)}, m3.data);
    Crop<float> crop = make_crop(img, mask, S);
    if (opt.subset == "low-pixel" && !(crop.mask_fraction < opt.low_pixel_threshold)) continue;
    if (!scene_small[static_cast<size_t>(r.scene)].defined())
      scene_small[static_cast<size_t>(r.scene)] = resize_image(img, S);
    rows.push_back({&r, scene_small[static_cast<size_t>(r.scene)], crop.image, crop.mask});
  }

  Tallies tallies(data.taxonomy);
  EvalResult out;
  for (size_t at = 0; at < rows.size(); at += static_cast<size_t>(opt.batch_size)) {
    const size_t hi = std::min(rows.size(), at + static_cast<size_t>(opt.batch_size));
    std::vector<const Tensor<float>*> scenes, crops, masks;
    std::vector<int> cats;
    for (size_t i = at; i < hi; ++i) {
      scenes.push_back(&rows[i].scene);
      crops.push_back(&rows[i].crop);
      masks.push_back(&rows[i].mask);
      cats.push_back(rows[i].rec->category);
    }
    Shape s = scenes[0]->shape;
    s[0] = static_cast<int>(scenes.size());
    auto stack = [&](const std::vector<const Tensor<float>*>& parts, Shape shape) {
      shape[0] = static_cast<int>(parts.size());
      Tensor<float> t = Tensor<float>::zeros(shape);
      const int64_t stride = parts[0]->numel();
      for (size_t i = 0; i < parts.size(); ++i)
        std::copy_n(parts[i]->ptr(), stride, t.ptr() + static_cast<int64_t>(i) * stride);
      return t;
    };
    auto fw = net.stage2_forward(stack(scenes, scenes[0]->shape), stack(crops, crops[0]->shape),
                                 stack(masks, masks[0]->shape), cats, false, no_tape,
                                 opt.route_by_estimator);
    for (size_t i = at; i < hi; ++i) {
      const size_t n = i - at;
      const InstanceRecord& r = *rows[i].rec;
      ++out.evaluated;
      if (fw.routed[n] != r.category) {
        ++out.routing_disagreements;
        continue;  // prediction is encoded for a different head
      }
      const Tensor<float>& logits = fw.attrs[n];
      std::vector<double> pred(static_cast<size_t>(logits.numel()));
      for (size_t k = 0; k < pred.size(); ++k)
        pred[k] = 1.0 / (1.0 + std::exp(-static_cast<double>(logits[static_cast<int64_t>(k)])));
      tallies.accumulate(r.category, pred, r.values, r.supervised);
    }
  }
  out.report = compute_report(tallies, opt.subset);
  return out;
}

}  // namespace glide
