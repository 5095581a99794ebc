#include "sctseg/runner.hpp"

#include <fstream>

#include "json.hpp"
#include "sctseg/gradcam.hpp"
#include "sctseg/metrics.hpp"
#include "sctseg/phantom.hpp"
#include "sctseg/train.hpp"

namespace sctseg {

namespace fs = std::filesystem;
using nlohmann::json;

RunPaths run_paths(const RunConfig& cfg) {
  RunPaths p;
  p.dir = cfg.run_dir();
  p.resolved_config = p.dir / "config.resolved.json";
  p.volume = p.dir / "volume.raw";
  p.gt_labels = p.dir / "gt_labels.raw";
  p.pseudo_labels = p.dir / "pseudo_labels.raw";
  p.cluster_report = p.dir / "cluster_report.json";
  p.phantom_report = p.dir / "phantom_report.json";
  p.stage2_ckpt = p.dir / "stage2.ckpt";
  p.stage3_ckpt = p.dir / "stage3.ckpt";
  p.metrics = p.dir / "metrics.jsonl";
  p.pred_labels = p.dir / "pred_labels.raw";
  p.eval_report = p.dir / "eval_report.json";
  return p;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

RunPaths prepare(const RunConfig& cfg) {
  RunPaths p = run_paths(cfg);
  fs::create_directories(p.dir);
  write_text(p.resolved_config, run_config_to_json(cfg));
  return p;
}

/// Volume for this run: the configured input, or the phantom artifact.
Volume load_input_volume(const RunConfig& cfg, const RunPaths& p) {
  if (!cfg.input_path.empty()) return load_volume(cfg.input_path, cfg.input_format);
  if (fs::exists(p.volume)) return load_volume(p.volume, VolumeFormat::raw);
  throw Error("no input volume: set io.input or run the phantom step first");
}

LabelVolume load_gt(const RunConfig& cfg, const RunPaths& p) {
  if (!cfg.labels_path.empty()) return load_labels(cfg.labels_path);
  if (fs::exists(p.gt_labels)) return load_labels(p.gt_labels);
  throw Error("no ground-truth labels: set io.labels or run the phantom step first");
}

void write_slice_previews(const RunPaths& p, const Volume& vol, const LabelVolume& labels) {
  const int mid = vol.depth / 2;
  std::vector<uint8_t> gray(static_cast<size_t>(vol.height) * vol.width);
  const float* s = vol.slice(mid);
  for (size_t i = 0; i < gray.size(); ++i)
    gray[i] = static_cast<uint8_t>(std::clamp(s[i], 0.0f, 1.0f) * 255.0f + 0.5f);
  write_pgm(p.dir / "preview_volume.pgm", gray.data(), vol.height, vol.width);

  LabelMap lm;
  lm.rows = labels.height;
  lm.cols = labels.width;
  lm.labels.assign(labels.slice(mid), labels.slice(mid) + gray.size());
  write_label_ppm(p.dir / "preview_labels.ppm", lm);
}

json miou_json(const MiouResult& m) {
  return {{"miou", m.miou},
          {"per_class_iou", m.per_class_iou},
          {"evaluated", m.evaluated},
          {"skipped_absent", m.skipped_absent}};
}

Checkpoint load_eval_checkpoint(const RunConfig& cfg, const RunPaths& p,
                                const std::string& override_path) {
  fs::path ck = override_path.empty()
                    ? (fs::exists(p.stage3_ckpt) ? p.stage3_ckpt : p.stage2_ckpt)
                    : fs::path(override_path);
  if (!fs::exists(ck))
    throw Error("no checkpoint at " + ck.string() + "; train a model first");
  return Checkpoint::load(ck);
}

}  // namespace

void run_phantom(const RunConfig& cfg) {
  RunPaths p = prepare(cfg);
  PhantomSpec spec = cfg.phantom;
  spec.num_classes = cfg.num_classes;  // one K for the whole run
  PhantomResult res = generate_phantom(spec, cfg.seed);
  save_volume(res.volume, p.volume);
  save_labels(res.labels, p.gt_labels);
  write_slice_previews(p, res.volume, res.labels);

  json rep;
  rep["class_fractions"] = res.class_fractions;
  rep["inclusion_fractions_achieved"] = res.inclusion_fractions_achieved;
  rep["drift"] = to_string(spec.drift);
  rep["drift_strength"] = spec.drift_strength;
  rep["noise_sigma"] = spec.noise_sigma;
  rep["streaks_per_slice"] = spec.streaks_per_slice;
  rep["fringe_gain"] = spec.fringe_gain;
  write_text(p.phantom_report, rep.dump(2) + "\n");
}

void run_pseudolabel(const RunConfig& cfg) {
  RunPaths p = prepare(cfg);
  Volume vol = normalize(load_input_volume(cfg, p), cfg.normalize);
  PseudoLabelResult res =
      generate_pseudolabels(vol, cfg.cluster_method, cfg.num_classes, cfg.seed, cfg.pseudo);
  save_labels(res.labels, p.pseudo_labels);

  json rep;
  rep["method"] = to_string(res.model.method);
  rep["num_classes"] = res.model.num_classes;
  rep["centroids"] = res.model.centroids;
  rep["thresholds"] = res.model.thresholds;
  json comps = json::array();
  for (const auto& c : res.model.components)
    comps.push_back({{"weight", c.weight}, {"mean", c.mean}, {"variance", c.variance}});
  rep["components"] = comps;
  rep["objective"] = res.model.objective;
  // wall-clock fields; excluded from any determinism comparison
  rep["fit_seconds"] = res.model.fit_seconds;
  rep["generate_seconds"] = res.generate_seconds;

  if (!cfg.labels_path.empty() || fs::exists(p.gt_labels)) {
    const LabelVolume gt = load_gt(cfg, p);
    rep["vs_ground_truth"] = {
        {"accuracy", pixel_accuracy(gt, res.labels, cfg.eval_ignore)},
        {"mean_iou", miou_json(mean_iou(gt, res.labels, cfg.eval_ignore))}};
  }
  write_text(p.cluster_report, rep.dump(2) + "\n");
}

void run_train(const RunConfig& cfg, int stage) {
  if (stage != 2 && stage != 3)
    throw ConfigError("train: stage must be 2 or 3, got " + std::to_string(stage));
  RunPaths p = prepare(cfg);
  Volume vol = normalize(load_input_volume(cfg, p), cfg.normalize);

  // stage 2 starts the log, stage 3 extends it
  std::ofstream mout(p.metrics, stage == 2 ? std::ios::trunc : std::ios::app);
  if (!mout) throw Error("cannot write " + p.metrics.string());
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& r) { mout << format_epoch_record(r) << "\n"; };
  hooks.on_checkpoint = [&](int epoch, const Checkpoint& ck) {
    ck.save(p.dir / ("stage" + std::to_string(stage) + "_epoch" + std::to_string(epoch) +
                     ".ckpt"));
  };
  hooks.diverged_path = p.dir / ("stage" + std::to_string(stage) + "_diverged.ckpt");

  if (stage == 2) {
    if (!fs::exists(p.pseudo_labels))
      throw Error("no pseudo labels at " + p.pseudo_labels.string() +
                  "; run the pseudolabel step first");
    const LabelVolume pseudo = load_labels(p.pseudo_labels);
    TrainResult res = train_stage2(vol, pseudo, cfg.model, cfg.train, cfg.seed, hooks);
    res.checkpoint.save(p.stage2_ckpt);
  } else {
    if (!fs::exists(p.stage2_ckpt))
      throw Error("no stage-2 checkpoint at " + p.stage2_ckpt.string() +
                  "; run train --stage 2 first");
    const Checkpoint ck2 = Checkpoint::load(p.stage2_ckpt);
    SegNet student = model_from_checkpoint(ck2, "student/");
    TrainResult res = train_stage3(vol, student, cfg.train, cfg.seed, hooks);
    res.checkpoint.save(p.stage3_ckpt);
  }
}

void run_eval(const RunConfig& cfg, const std::string& checkpoint_override) {
  RunPaths p = prepare(cfg);
  Volume vol = normalize(load_input_volume(cfg, p), cfg.normalize);
  const Checkpoint ck = load_eval_checkpoint(cfg, p, checkpoint_override);
  // the teacher is the deployed model whenever the checkpoint has one
  const std::string prefix = ck.has_prefix("teacher/") ? "teacher/" : "student/";
  SegNet model = model_from_checkpoint(ck, prefix);
  LabelVolume pred = predict_volume(model, vol, model.config().in_channels);
  save_labels(pred, p.pred_labels);

  json rep;
  rep["checkpoint_stage"] = ck.stage;
  rep["weights"] = prefix == "teacher/" ? "teacher" : "student";
  rep["ignore_classes"] = cfg.eval_ignore;
  const LabelVolume gt = load_gt(cfg, p);
  rep["accuracy"] = pixel_accuracy(gt, pred, cfg.eval_ignore);
  rep["mean_iou"] = miou_json(mean_iou(gt, pred, cfg.eval_ignore));
  if (fs::exists(p.pseudo_labels)) {
    const LabelVolume pseudo = load_labels(p.pseudo_labels);
    rep["pseudo_vs_gt"] = miou_json(mean_iou(gt, pseudo, cfg.eval_ignore));
  }
  write_text(p.eval_report, rep.dump(2) + "\n");
}

void run_gradcam(const RunConfig& cfg, const std::string& checkpoint_override) {
  RunPaths p = prepare(cfg);
  Volume vol = normalize(load_input_volume(cfg, p), cfg.normalize);
  const Checkpoint ck = load_eval_checkpoint(cfg, p, checkpoint_override);
  const std::string prefix = ck.has_prefix("teacher/") ? "teacher/" : "student/";
  SegNet model = model_from_checkpoint(ck, prefix);

  const int slice = cfg.gradcam_slice < 0 ? vol.depth / 2 : cfg.gradcam_slice;
  if (slice >= vol.depth)
    throw ConfigError("gradcam: slice " + std::to_string(slice) + " out of range for depth " +
                      std::to_string(vol.depth));
  SliceStack stack = extract_stack(vol, slice, model.config().in_channels);
  CamResult cam = grad_cam(model, stack, cfg.gradcam_class, cfg.gradcam_layer);

  std::vector<uint8_t> heat(cam.heatmap.size());
  for (size_t i = 0; i < heat.size(); ++i)
    heat[i] = static_cast<uint8_t>(std::clamp(cam.heatmap[i], 0.0f, 1.0f) * 255.0f + 0.5f);
  write_pgm(p.dir / "gradcam.pgm", heat.data(), cam.rows, cam.cols);

  // class-coloured overlay on the grayscale slice
  uint8_t rgb[3];
  class_color(cfg.gradcam_class, rgb);
  const float* s = vol.slice(slice);
  std::vector<uint8_t> overlay(cam.heatmap.size() * 3);
  for (size_t i = 0; i < cam.heatmap.size(); ++i) {
    const float g = std::clamp(s[i], 0.0f, 1.0f) * 255.0f;
    const float a = 0.6f * cam.heatmap[i];
    for (int ch = 0; ch < 3; ++ch)
      overlay[i * 3 + ch] = static_cast<uint8_t>(g * (1.0f - a) + rgb[ch] * a + 0.5f);
  }
  write_ppm(p.dir / "gradcam_overlay.ppm", overlay.data(), cam.rows, cam.cols);

  json rep;
  rep["layer"] = cfg.gradcam_layer;
  rep["target_class"] = cfg.gradcam_class;
  rep["slice"] = slice;
  rep["score"] = cam.score;
  rep["class_never_predicted"] = cam.empty;
  write_text(p.dir / "gradcam.json", rep.dump(2) + "\n");
}

void run_confusion(const RunConfig& cfg, const std::string& labels_a,
                   const std::string& labels_b) {
  RunPaths p = prepare(cfg);
  const LabelVolume a = load_labels(labels_a);
  const LabelVolume b = load_labels(labels_b);
  if (a.depth != b.depth || a.height != b.height || a.width != b.width)
    throw Error("confusion: label volumes differ in shape");
  const auto m =
      confusion_matrix(std::span(a.labels), std::span(b.labels), a.num_classes, b.num_classes);
  json rep;
  rep["rows"] = labels_a;
  rep["cols"] = labels_b;
  rep["matrix"] = m;
  rep["mapping_cols_to_rows"] = majority_mapping(m);
  write_text(p.dir / "confusion.json", rep.dump(2) + "\n");
}

}  // namespace sctseg
