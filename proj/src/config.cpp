#include "sctseg/config.hpp"

#include <cstdlib>
#include <fstream>

#include "json.hpp"

namespace sctseg {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& ctx,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object())
    throw ConfigError("config: " + (ctx.empty() ? std::string("top level") : ctx) +
                      " must be an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) {
        ok = true;
        break;
      }
    if (!ok)
      throw ConfigError("config: unknown key '" + (ctx.empty() ? key : ctx + "." + key) + "'");
  }
}

template <typename T>
void get_to(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(out);
  } catch (const json::exception& e) {
    throw ConfigError("config: bad value for '" + std::string(key) + "': " + e.what());
  }
}

void parse_io(const json& j, RunConfig& cfg) {
  check_keys(j, "io", {"input", "format", "labels", "normalize"});
  get_to(j, "input", cfg.input_path);
  if (j.contains("format"))
    cfg.input_format = volume_format_from_string(j.at("format").get<std::string>());
  get_to(j, "labels", cfg.labels_path);
  if (j.contains("normalize")) {
    const json& n = j.at("normalize");
    check_keys(n, "io.normalize", {"mode", "p_lo", "p_hi"});
    if (n.contains("mode")) {
      const std::string mode = n.at("mode").get<std::string>();
      if (mode == "global_minmax")
        cfg.normalize.kind = NormalizeMode::Kind::global_minmax;
      else if (mode == "percentile")
        cfg.normalize.kind = NormalizeMode::Kind::percentile;
      else
        throw ConfigError("config: unknown normalize mode '" + mode + "'");
    }
    get_to(n, "p_lo", cfg.normalize.p_lo);
    get_to(n, "p_hi", cfg.normalize.p_hi);
  }
}

void parse_phantom(const json& j, PhantomSpec& p) {
  check_keys(j, "phantom",
             {"depth", "height", "width", "num_classes", "cylinder_radius_frac",
              "inclusion_fractions", "fraction_tolerance", "blob_share", "curve_min_persist",
              "class_means", "drift", "drift_strength", "noise_sigma", "streaks_per_slice",
              "streak_strength", "fringe_gain"});
  get_to(j, "depth", p.depth);
  get_to(j, "height", p.height);
  get_to(j, "width", p.width);
  get_to(j, "num_classes", p.num_classes);
  get_to(j, "cylinder_radius_frac", p.cylinder_radius_frac);
  get_to(j, "inclusion_fractions", p.inclusion_fractions);
  get_to(j, "fraction_tolerance", p.fraction_tolerance);
  get_to(j, "blob_share", p.blob_share);
  get_to(j, "curve_min_persist", p.curve_min_persist);
  get_to(j, "class_means", p.class_means);
  if (j.contains("drift")) p.drift = drift_kind_from_string(j.at("drift").get<std::string>());
  get_to(j, "drift_strength", p.drift_strength);
  get_to(j, "noise_sigma", p.noise_sigma);
  get_to(j, "streaks_per_slice", p.streaks_per_slice);
  get_to(j, "streak_strength", p.streak_strength);
  get_to(j, "fringe_gain", p.fringe_gain);
}

void parse_pseudolabel(const json& j, RunConfig& cfg) {
  check_keys(j, "pseudolabel", {"method", "fit_subsample", "max_iter", "tol", "histogram_bins"});
  if (j.contains("method"))
    cfg.cluster_method = cluster_method_from_string(j.at("method").get<std::string>());
  get_to(j, "fit_subsample", cfg.pseudo.fit_subsample);
  get_to(j, "max_iter", cfg.pseudo.max_iter);
  get_to(j, "tol", cfg.pseudo.tol);
  get_to(j, "histogram_bins", cfg.pseudo.histogram_bins);
}

void parse_model(const json& j, ModelConfig& m) {
  check_keys(j, "model", {"depth", "base_width", "skip_connections", "dropout_rate",
                          "norm_groups"});
  get_to(j, "depth", m.depth);
  get_to(j, "base_width", m.base_width);
  get_to(j, "skip_connections", m.skip_connections);
  get_to(j, "dropout_rate", m.dropout_rate);
  get_to(j, "norm_groups", m.norm_groups);
}

void parse_loss(const json& j, LossOptions& l) {
  check_keys(j, "loss", {"kind", "smoothing_epsilon", "bootstrap_beta", "focal_gamma", "gce_r",
                         "sce_alpha", "sce_beta", "sce_log_zero"});
  if (j.contains("kind")) l.kind = loss_kind_from_string(j.at("kind").get<std::string>());
  get_to(j, "smoothing_epsilon", l.smoothing_epsilon);
  get_to(j, "bootstrap_beta", l.bootstrap_beta);
  get_to(j, "focal_gamma", l.focal_gamma);
  get_to(j, "gce_r", l.gce_r);
  get_to(j, "sce_alpha", l.sce_alpha);
  get_to(j, "sce_beta", l.sce_beta);
  get_to(j, "sce_log_zero", l.sce_log_zero);
}

void parse_strong(const json& j, StrongPolicy& s) {
  check_keys(j, "train.strong",
             {"enabled", "op_probability", "gamma_lo", "gamma_hi", "brightness_delta",
              "contrast_lo", "contrast_hi", "clahe_enabled", "clahe_clip_lo", "clahe_clip_hi",
              "clahe_tiles"});
  get_to(j, "enabled", s.enabled);
  get_to(j, "op_probability", s.op_probability);
  get_to(j, "gamma_lo", s.gamma_lo);
  get_to(j, "gamma_hi", s.gamma_hi);
  get_to(j, "brightness_delta", s.brightness_delta);
  get_to(j, "contrast_lo", s.contrast_lo);
  get_to(j, "contrast_hi", s.contrast_hi);
  get_to(j, "clahe_enabled", s.clahe_enabled);
  get_to(j, "clahe_clip_lo", s.clahe_clip_lo);
  get_to(j, "clahe_clip_hi", s.clahe_clip_hi);
  get_to(j, "clahe_tiles", s.clahe_tiles);
}

void parse_train(const json& j, TrainConfig& t) {
  check_keys(j, "train",
             {"stage2_epochs", "stage3_epochs", "batch_size", "learning_rate", "crop_size",
              "num_slices", "confidence_delta", "ema_alpha", "checkpoint_every",
              "empty_mask_patience", "weak_enabled", "strong"});
  get_to(j, "stage2_epochs", t.stage2_epochs);
  get_to(j, "stage3_epochs", t.stage3_epochs);
  get_to(j, "batch_size", t.batch_size);
  get_to(j, "learning_rate", t.learning_rate);
  get_to(j, "crop_size", t.crop_size);
  get_to(j, "num_slices", t.num_slices);
  get_to(j, "confidence_delta", t.confidence_delta);
  get_to(j, "ema_alpha", t.ema_alpha);
  get_to(j, "checkpoint_every", t.checkpoint_every);
  get_to(j, "empty_mask_patience", t.empty_mask_patience);
  get_to(j, "weak_enabled", t.weak.enabled);
  if (j.contains("strong")) parse_strong(j.at("strong"), t.strong);
}

RunConfig parse_run_config(const json& j) {
  check_keys(j, "",
             {"run_id", "output_dir", "seed", "num_classes", "io", "phantom", "pseudolabel",
              "model", "loss", "train", "eval", "gradcam"});
  RunConfig cfg;
  get_to(j, "run_id", cfg.run_id);
  get_to(j, "output_dir", cfg.output_dir);
  get_to(j, "seed", cfg.seed);
  get_to(j, "num_classes", cfg.num_classes);
  if (j.contains("io")) parse_io(j.at("io"), cfg);
  if (j.contains("phantom")) parse_phantom(j.at("phantom"), cfg.phantom);
  if (j.contains("pseudolabel")) parse_pseudolabel(j.at("pseudolabel"), cfg);
  if (j.contains("model")) parse_model(j.at("model"), cfg.model);
  if (j.contains("loss")) parse_loss(j.at("loss"), cfg.train.loss);
  if (j.contains("train")) parse_train(j.at("train"), cfg.train);
  if (j.contains("eval")) {
    check_keys(j.at("eval"), "eval", {"ignore_classes"});
    get_to(j.at("eval"), "ignore_classes", cfg.eval_ignore);
  }
  if (j.contains("gradcam")) {
    check_keys(j.at("gradcam"), "gradcam", {"layer", "target_class", "slice"});
    get_to(j.at("gradcam"), "layer", cfg.gradcam_layer);
    get_to(j.at("gradcam"), "target_class", cfg.gradcam_class);
    get_to(j.at("gradcam"), "slice", cfg.gradcam_slice);
  }

  if (cfg.run_id.empty()) throw ConfigError("config: run_id must not be empty");
  if (cfg.num_classes < 2 || cfg.num_classes > 255)
    throw ConfigError("config: num_classes must be in [2, 255]");

  // Single-source fields fan out to the structs that consume them.
  cfg.model.num_classes = cfg.num_classes;
  cfg.model.in_channels = cfg.train.num_slices;
  return cfg;
}

void apply_override(json& doc, const std::string& assignment) {
  const size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("config: --set expects key.path=value, got '" + assignment + "'");
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);

  json value = json::parse(raw, nullptr, /*allow_exceptions=*/false);
  if (value.is_discarded()) value = raw;  // unquoted strings pass through

  json* node = &doc;
  size_t start = 0;
  while (true) {
    const size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot - start);
    if (key.empty()) throw ConfigError("config: bad --set path '" + path + "'");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

}  // namespace

RunConfig load_run_config(const std::filesystem::path& file,
                          const std::vector<std::string>& overrides) {
  std::ifstream in(file);
  if (!in) throw ConfigError("config: cannot open " + file.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config: " + file.string() + " is not valid JSON: " + e.what());
  }
  for (const std::string& o : overrides) apply_override(doc, o);
  RunConfig cfg = parse_run_config(doc);
  if (const char* env = std::getenv("SCTSEG_OUTPUT_DIR"); env && *env) cfg.output_dir = env;
  return cfg;
}

std::string run_config_to_json(const RunConfig& cfg) {
  json j;
  j["run_id"] = cfg.run_id;
  j["output_dir"] = cfg.output_dir;
  j["seed"] = cfg.seed;
  j["num_classes"] = cfg.num_classes;
  j["io"] = {{"input", cfg.input_path},
             {"format", to_string(cfg.input_format)},
             {"labels", cfg.labels_path},
             {"normalize",
              {{"mode", cfg.normalize.kind == NormalizeMode::Kind::global_minmax
                            ? "global_minmax"
                            : "percentile"},
               {"p_lo", cfg.normalize.p_lo},
               {"p_hi", cfg.normalize.p_hi}}}};
  j["phantom"] = {{"depth", cfg.phantom.depth},
                  {"height", cfg.phantom.height},
                  {"width", cfg.phantom.width},
                  {"num_classes", cfg.phantom.num_classes},
                  {"cylinder_radius_frac", cfg.phantom.cylinder_radius_frac},
                  {"inclusion_fractions", cfg.phantom.inclusion_fractions},
                  {"fraction_tolerance", cfg.phantom.fraction_tolerance},
                  {"blob_share", cfg.phantom.blob_share},
                  {"curve_min_persist", cfg.phantom.curve_min_persist},
                  {"class_means", cfg.phantom.class_means},
                  {"drift", to_string(cfg.phantom.drift)},
                  {"drift_strength", cfg.phantom.drift_strength},
                  {"noise_sigma", cfg.phantom.noise_sigma},
                  {"streaks_per_slice", cfg.phantom.streaks_per_slice},
                  {"streak_strength", cfg.phantom.streak_strength},
                  {"fringe_gain", cfg.phantom.fringe_gain}};
  j["pseudolabel"] = {{"method", to_string(cfg.cluster_method)},
                      {"fit_subsample", cfg.pseudo.fit_subsample},
                      {"max_iter", cfg.pseudo.max_iter},
                      {"tol", cfg.pseudo.tol},
                      {"histogram_bins", cfg.pseudo.histogram_bins}};
  j["model"] = {{"depth", cfg.model.depth},
                {"base_width", cfg.model.base_width},
                {"skip_connections", cfg.model.skip_connections},
                {"dropout_rate", cfg.model.dropout_rate},
                {"norm_groups", cfg.model.norm_groups}};
  j["loss"] = {{"kind", to_string(cfg.train.loss.kind)},
               {"smoothing_epsilon", cfg.train.loss.smoothing_epsilon},
               {"bootstrap_beta", cfg.train.loss.bootstrap_beta},
               {"focal_gamma", cfg.train.loss.focal_gamma},
               {"gce_r", cfg.train.loss.gce_r},
               {"sce_alpha", cfg.train.loss.sce_alpha},
               {"sce_beta", cfg.train.loss.sce_beta},
               {"sce_log_zero", cfg.train.loss.sce_log_zero}};
  j["train"] = {{"stage2_epochs", cfg.train.stage2_epochs},
                {"stage3_epochs", cfg.train.stage3_epochs},
                {"batch_size", cfg.train.batch_size},
                {"learning_rate", cfg.train.learning_rate},
                {"crop_size", cfg.train.crop_size},
                {"num_slices", cfg.train.num_slices},
                {"confidence_delta", cfg.train.confidence_delta},
                {"ema_alpha", cfg.train.ema_alpha},
                {"checkpoint_every", cfg.train.checkpoint_every},
                {"empty_mask_patience", cfg.train.empty_mask_patience},
                {"weak_enabled", cfg.train.weak.enabled},
                {"strong",
                 {{"enabled", cfg.train.strong.enabled},
                  {"op_probability", cfg.train.strong.op_probability},
                  {"gamma_lo", cfg.train.strong.gamma_lo},
                  {"gamma_hi", cfg.train.strong.gamma_hi},
                  {"brightness_delta", cfg.train.strong.brightness_delta},
                  {"contrast_lo", cfg.train.strong.contrast_lo},
                  {"contrast_hi", cfg.train.strong.contrast_hi},
                  {"clahe_enabled", cfg.train.strong.clahe_enabled},
                  {"clahe_clip_lo", cfg.train.strong.clahe_clip_lo},
                  {"clahe_clip_hi", cfg.train.strong.clahe_clip_hi},
                  {"clahe_tiles", cfg.train.strong.clahe_tiles}}}};
  j["eval"] = {{"ignore_classes", cfg.eval_ignore}};
  j["gradcam"] = {{"layer", cfg.gradcam_layer},
                  {"target_class", cfg.gradcam_class},
                  {"slice", cfg.gradcam_slice}};
  return j.dump(2) + "\n";
}

}  // namespace sctseg
