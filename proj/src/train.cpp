#include "sctseg/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>

namespace sctseg {

namespace {

void check_normalized(const Volume& vol, const char* where) {
  if (vol.value_min < 0.0f || vol.value_max > 1.0f)
    throw Error(std::string(where) + ": volume must be normalised to [0, 1] first (range [" +
                std::to_string(vol.value_min) + ", " + std::to_string(vol.value_max) + "])");
}

void shuffle_order(std::vector<int>& order, Rng& rng) {
  for (size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[rng.uniform_index(i)]);
}

uint64_t sample_seed(uint64_t seed, int stage, int epoch, size_t pos) {
  return derive_seed(seed, static_cast<uint64_t>(stage),
                     (static_cast<uint64_t>(epoch) << 24) | static_cast<uint64_t>(pos));
}

/// Joint random crop window for one training sample.
std::pair<int, int> crop_origin(const SliceStack& stack, int crop, uint64_t sseed) {
  if (crop > stack.rows || crop > stack.cols)
    throw Error("train: crop_size " + std::to_string(crop) + " exceeds slice " +
                std::to_string(stack.rows) + "x" + std::to_string(stack.cols));
  Rng rng(derive_seed(sseed, 0x63726f70));
  const int r0 = static_cast<int>(rng.uniform_index(stack.rows - crop + 1));
  const int c0 = static_cast<int>(rng.uniform_index(stack.cols - crop + 1));
  return {r0, c0};
}

void copy_stack(Tensor& batch, int b, const SliceStack& s) {
  std::memcpy(batch.sample(b), s.data.data(), s.data.size() * sizeof(float));
}

Checkpoint snapshot(SegNet& student, const Adam& adam, EmaTeacher* teacher, int stage, int epoch,
                    uint64_t seed) {
  Checkpoint ck;
  ck.config = student.config();
  ck.stage = stage;
  ck.epoch = epoch;
  ck.seed = seed;
  store_params(ck, student, "student/");
  adam.store(ck, "adam/");
  if (teacher) {
    store_params(ck, teacher->model(), "teacher/");
    ck.scalars["ema_updates"] = teacher->updates();
  }
  return ck;
}

[[noreturn]] void diverged(const Checkpoint& last_good, const TrainHooks& hooks, int stage,
                           int epoch) {
  std::string note;
  if (!hooks.diverged_path.empty()) {
    last_good.save(hooks.diverged_path);
    note = "; last stable state saved to " + hooks.diverged_path.string();
  }
  throw Error("train: non-finite loss at stage " + std::to_string(stage) + " epoch " +
              std::to_string(epoch) + note);
}

void warn(const TrainHooks& hooks, const std::string& msg) {
  if (hooks.on_warning)
    hooks.on_warning(msg);
  else
    std::fprintf(stderr, "warning: %s\n", msg.c_str());
}

}  // namespace

void validate_train_config(const TrainConfig& cfg) {
  if (cfg.stage2_epochs < 0 || cfg.stage3_epochs < 0)
    throw ConfigError("train: epoch counts must be non-negative");
  if (cfg.batch_size < 1) throw ConfigError("train: batch_size must be positive");
  if (cfg.learning_rate <= 0.0) throw ConfigError("train: learning_rate must be positive");
  if (cfg.crop_size < 2) throw ConfigError("train: crop_size must be at least 2");
  if (cfg.num_slices < 1 || cfg.num_slices % 2 == 0)
    throw ConfigError("train: num_slices must be a positive odd number");
  if (cfg.confidence_delta < 0.0 || cfg.confidence_delta > 1.0)
    throw ConfigError("train: confidence_delta must be in [0, 1]");
  if (cfg.ema_alpha < 0.0 || cfg.ema_alpha >= 1.0)
    throw ConfigError("train: ema_alpha must be in [0, 1)");
  if (cfg.checkpoint_every < 0) throw ConfigError("train: checkpoint_every must be non-negative");
  if (cfg.empty_mask_patience < 1) throw ConfigError("train: empty_mask_patience must be positive");
  validate_loss_options(cfg.loss);
}

std::string format_epoch_record(const EpochRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "{\"stage\":%d,\"epoch\":%d,\"loss\":%.9g,\"masked_fraction\":%.9g,"
                "\"mean_confidence\":%.9g}",
                r.stage, r.epoch, r.loss, r.masked_fraction, r.mean_confidence);
  return buf;
}

std::vector<uint8_t> confidence_mask(const Tensor& probs, double delta) {
  const size_t plane = probs.plane();
  std::vector<uint8_t> mask(static_cast<size_t>(probs.n) * plane, 0);
  for (int i = 0; i < probs.n; ++i) {
    const float* ps = probs.sample(i);
    for (size_t p = 0; p < plane; ++p) {
      float mx = ps[p];
      for (int k = 1; k < probs.c; ++k) mx = std::max(mx, ps[k * plane + p]);
      mask[static_cast<size_t>(i) * plane + p] = static_cast<double>(mx) > delta ? 1 : 0;
    }
  }
  return mask;
}

std::vector<uint8_t> argmax_flat(const Tensor& t) {
  const size_t plane = t.plane();
  std::vector<uint8_t> out(static_cast<size_t>(t.n) * plane, 0);
  for (int i = 0; i < t.n; ++i) {
    const float* s = t.sample(i);
    for (size_t p = 0; p < plane; ++p) {
      int best = 0;
      float bv = s[p];
      for (int k = 1; k < t.c; ++k) {
        if (s[k * plane + p] > bv) {
          bv = s[k * plane + p];
          best = k;
        }
      }
      out[static_cast<size_t>(i) * plane + p] = static_cast<uint8_t>(best);
    }
  }
  return out;
}

EmaTeacher::EmaTeacher(const SegNet& student, double alpha) : teacher_(student), alpha_(alpha) {
  for (Param* p : teacher_.params())
    shadow_.emplace_back(p->value.begin(), p->value.end());
}

void EmaTeacher::update(SegNet& student) {
  auto sp = student.params();
  auto tp = teacher_.params();
  for (size_t i = 0; i < sp.size(); ++i) {
    std::vector<double>& sh = shadow_[i];
    for (size_t j = 0; j < sh.size(); ++j) {
      sh[j] = alpha_ * sh[j] + (1.0 - alpha_) * static_cast<double>(sp[i]->value[j]);
      tp[i]->value[j] = static_cast<float>(sh[j]);
    }
  }
  ++updates_;
}

TrainResult train_stage2(const Volume& vol, const LabelVolume& pseudo, const ModelConfig& mcfg,
                         const TrainConfig& tcfg, uint64_t seed, const TrainHooks& hooks) {
  validate_train_config(tcfg);
  validate_model_config(mcfg);
  check_normalized(vol, "train_stage2");
  if (tcfg.stage2_epochs < 1) throw Error("train_stage2: stage2_epochs must be at least 1");
  if (pseudo.depth != vol.depth || pseudo.height != vol.height || pseudo.width != vol.width)
    throw Error("train_stage2: label volume shape does not match the image volume");
  if (pseudo.num_classes != mcfg.num_classes)
    throw Error("train_stage2: labels have " + std::to_string(pseudo.num_classes) +
                " classes, model expects " + std::to_string(mcfg.num_classes));
  if (mcfg.in_channels != tcfg.num_slices)
    throw Error("train_stage2: model in_channels " + std::to_string(mcfg.in_channels) +
                " != num_slices " + std::to_string(tcfg.num_slices));

  SegNet student(mcfg, derive_seed(seed, 0x6d6f64656c));
  Adam adam(student.params(), AdamOptions{.lr = tcfg.learning_rate});
  Checkpoint last_good = snapshot(student, adam, nullptr, 2, 0, seed);

  TrainResult res;
  const int crop = tcfg.crop_size;
  std::vector<int> order(vol.depth);
  for (int i = 0; i < vol.depth; ++i) order[i] = i;

  for (int epoch = 1; epoch <= tcfg.stage2_epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(seed, 0x73687566, (uint64_t(2) << 32) | uint64_t(epoch)));
    shuffle_order(order, shuffle_rng);

    double loss_sum = 0.0;
    int steps = 0;
    for (size_t pos = 0; pos < order.size(); pos += tcfg.batch_size) {
      const int bs = static_cast<int>(std::min<size_t>(tcfg.batch_size, order.size() - pos));
      Tensor x(bs, tcfg.num_slices, crop, crop);
      std::vector<uint8_t> targets(static_cast<size_t>(bs) * crop * crop);
      for (int b = 0; b < bs; ++b) {
        const uint64_t sseed = sample_seed(seed, 2, epoch, pos + b);
        SliceStack stack = extract_stack(vol, order[pos + b], tcfg.num_slices);
        LabelMap lab = extract_label_slice(pseudo, order[pos + b]);
        const auto [r0, c0] = crop_origin(stack, crop, sseed);
        stack = crop_at(stack, r0, c0, crop, crop);
        lab = crop_at(lab, r0, c0, crop, crop);
        if (tcfg.weak.enabled) {
          WeakResult wr = weak_augment(stack, lab, sseed, tcfg.weak);
          stack = std::move(wr.stack);
          lab = std::move(*wr.labels);
        }
        copy_stack(x, b, stack);
        std::memcpy(targets.data() + static_cast<size_t>(b) * crop * crop, lab.labels.data(),
                    lab.labels.size());
      }
      student.zero_grad();
      Tensor logits = student.forward(x, true);
      LossResult lr = supervised_loss(logits, targets, tcfg.loss);
      if (!std::isfinite(lr.value)) diverged(last_good, hooks, 2, epoch);
      student.backward(lr.dlogits);
      adam.step();
      loss_sum += lr.value;
      ++steps;
    }

    EpochRecord rec{2, epoch, loss_sum / std::max(steps, 1), 1.0, 0.0};
    res.history.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
    last_good = snapshot(student, adam, nullptr, 2, epoch, seed);
    if (tcfg.checkpoint_every > 0 && epoch % tcfg.checkpoint_every == 0 && hooks.on_checkpoint)
      hooks.on_checkpoint(epoch, last_good);
  }

  res.checkpoint = std::move(last_good);
  res.model = student;
  res.student = std::move(student);
  return res;
}

TrainResult train_stage3(const Volume& vol, const SegNet& stage2_model, const TrainConfig& tcfg,
                         uint64_t seed, const TrainHooks& hooks) {
  validate_train_config(tcfg);
  check_normalized(vol, "train_stage3");
  if (tcfg.stage3_epochs < 1) throw Error("train_stage3: stage3_epochs must be at least 1");
  if (stage2_model.config().in_channels != tcfg.num_slices)
    throw Error("train_stage3: model in_channels " +
                std::to_string(stage2_model.config().in_channels) + " != num_slices " +
                std::to_string(tcfg.num_slices));

  SegNet student = stage2_model;
  EmaTeacher teacher(stage2_model, tcfg.ema_alpha);
  Adam adam(student.params(), AdamOptions{.lr = tcfg.learning_rate});
  Checkpoint last_good = snapshot(student, adam, &teacher, 3, 0, seed);

  TrainResult res;
  const int crop = tcfg.crop_size;
  std::vector<int> order(vol.depth);
  for (int i = 0; i < vol.depth; ++i) order[i] = i;
  int consecutive_empty = 0;

  for (int epoch = 1; epoch <= tcfg.stage3_epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(seed, 0x73687566, (uint64_t(3) << 32) | uint64_t(epoch)));
    shuffle_order(order, shuffle_rng);

    double loss_sum = 0.0, conf_sum = 0.0;
    size_t masked_px = 0, total_px = 0;
    int loss_steps = 0;
    for (size_t pos = 0; pos < order.size(); pos += tcfg.batch_size) {
      const int bs = static_cast<int>(std::min<size_t>(tcfg.batch_size, order.size() - pos));
      Tensor xw(bs, tcfg.num_slices, crop, crop);
      Tensor xs(bs, tcfg.num_slices, crop, crop);
      for (int b = 0; b < bs; ++b) {
        const uint64_t sseed = sample_seed(seed, 3, epoch, pos + b);
        SliceStack stack = extract_stack(vol, order[pos + b], tcfg.num_slices);
        const auto [r0, c0] = crop_origin(stack, crop, sseed);
        stack = crop_at(stack, r0, c0, crop, crop);
        if (tcfg.weak.enabled) {
          WeakResult wr = weak_augment(stack, std::nullopt, sseed, tcfg.weak);
          stack = std::move(wr.stack);
        }
        copy_stack(xw, b, stack);
        if (tcfg.strong.enabled) stack = strong_augment(stack, sseed, tcfg.strong);
        copy_stack(xs, b, stack);
      }

      // Teacher reads the weak view; no gradient flows through it.
      Tensor tprobs = softmax(teacher.model().forward(xw, false));
      std::vector<uint8_t> targets = argmax_flat(tprobs);
      std::vector<uint8_t> mask = confidence_mask(tprobs, tcfg.confidence_delta);
      const size_t plane = tprobs.plane();
      for (int i = 0; i < bs; ++i) {
        const float* ps = tprobs.sample(i);
        for (size_t p = 0; p < plane; ++p) {
          float mx = ps[p];
          for (int k = 1; k < tprobs.c; ++k) mx = std::max(mx, ps[k * plane + p]);
          conf_sum += mx;
        }
      }
      total_px += targets.size();

      student.zero_grad();
      Tensor logits = student.forward(xs, true);
      LossResult lr = masked_cross_entropy(logits, targets, mask);
      masked_px += lr.active_pixels;
      if (lr.empty_mask) {
        ++res.empty_mask_steps;
        if (++consecutive_empty == tcfg.empty_mask_patience)
          warn(hooks, "train_stage3: " + std::to_string(consecutive_empty) +
                          " consecutive steps below the confidence threshold; the teacher may "
                          "be uncertain everywhere");
        continue;
      }
      consecutive_empty = 0;
      if (!std::isfinite(lr.value)) diverged(last_good, hooks, 3, epoch);
      student.backward(lr.dlogits);
      adam.step();
      teacher.update(student);
      loss_sum += lr.value;
      ++loss_steps;
    }

    EpochRecord rec{3, epoch, loss_steps ? loss_sum / loss_steps : 0.0,
                    total_px ? static_cast<double>(masked_px) / total_px : 0.0,
                    total_px ? conf_sum / total_px : 0.0};
    res.history.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
    last_good = snapshot(student, adam, &teacher, 3, epoch, seed);
    if (tcfg.checkpoint_every > 0 && epoch % tcfg.checkpoint_every == 0 && hooks.on_checkpoint)
      hooks.on_checkpoint(epoch, last_good);
  }

  res.checkpoint = std::move(last_good);
  res.model = teacher.model();
  res.student = std::move(student);
  return res;
}

LabelVolume predict_volume(SegNet& model, const Volume& vol, int num_slices) {
  check_normalized(vol, "predict_volume");
  if (model.config().in_channels != num_slices)
    throw Error("predict_volume: model in_channels " +
                std::to_string(model.config().in_channels) + " != num_slices " +
                std::to_string(num_slices));
  LabelVolume out;
  out.depth = vol.depth;
  out.height = vol.height;
  out.width = vol.width;
  out.num_classes = model.config().num_classes;
  out.provenance = LabelProvenance::predicted;
  out.labels.assign(vol.size(), 0);
  for (int d = 0; d < vol.depth; ++d) {
    SliceStack stack = extract_stack(vol, d, num_slices);
    Tensor x(1, num_slices, stack.rows, stack.cols);
    copy_stack(x, 0, stack);
    Tensor logits = model.forward(x, false);
    LabelMap lm = argmax_labels(logits, 0);
    std::memcpy(out.labels.data() + static_cast<size_t>(d) * vol.height * vol.width,
                lm.labels.data(), lm.labels.size());
  }
  return out;
}

SegNet model_from_checkpoint(const Checkpoint& ck, const std::string& prefix) {
  SegNet model(ck.config, ck.seed);
  load_params(ck, model, prefix);
  return model;
}

}  // namespace sctseg
