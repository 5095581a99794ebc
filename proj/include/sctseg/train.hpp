#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "sctseg/augment.hpp"
#include "sctseg/loss.hpp"
#include "sctseg/model.hpp"
#include "sctseg/optim.hpp"
#include "sctseg/volume.hpp"

namespace sctseg {

struct TrainConfig {
  int stage2_epochs = 200;
  int stage3_epochs = 200;
  int batch_size = 16;
  double learning_rate = 1e-3;
  int crop_size = 512;
  int num_slices = 7;        // 2.5D stack size fed to the model
  double confidence_delta = 0.5;  // teacher pixels enter the loss when max prob > delta
  double ema_alpha = 0.99;
  int checkpoint_every = 0;  // epochs between snapshots; 0 writes only the final state
  int empty_mask_patience = 50;  // consecutive skipped steps before a warning fires
  LossOptions loss;
  WeakPolicy weak;
  StrongPolicy strong;
};

void validate_train_config(const TrainConfig& cfg);

struct EpochRecord {
  int stage = 0;
  int epoch = 0;  // 1-based
  double loss = 0.0;
  double masked_fraction = 0.0;
  double mean_confidence = 0.0;
};

/// One JSONL line with a fixed key order and no timing fields, so two
/// runs of the same seed compare byte for byte.
std::string format_epoch_record(const EpochRecord& r);

struct TrainHooks {
  std::function<void(const EpochRecord&)> on_epoch;
  std::function<void(int epoch, const Checkpoint&)> on_checkpoint;
  std::function<void(const std::string&)> on_warning;
  std::filesystem::path diverged_path;  // last stable state lands here if the loss blows up
};

/// mask[i] = 1 iff the pixel's max class probability strictly exceeds delta.
std::vector<uint8_t> confidence_mask(const Tensor& probs, double delta);

/// Flat per-pixel argmax over all samples; ties keep the lowest class.
std::vector<uint8_t> argmax_flat(const Tensor& t);

/// Exponential moving average copy of the student. The running average
/// is kept in double so long update chains stay close to the closed form;
/// the float weights of the wrapped model are refreshed on every update.
class EmaTeacher {
 public:
  EmaTeacher() = default;
  EmaTeacher(const SegNet& student, double alpha);

  void update(SegNet& student);
  SegNet& model() { return teacher_; }
  const SegNet& model() const { return teacher_; }
  int updates() const { return updates_; }

 private:
  SegNet teacher_;
  std::vector<std::vector<double>> shadow_;
  double alpha_ = 0.99;
  int updates_ = 0;
};

struct TrainResult {
  SegNet model;     // the deployable network: stage-2 student, stage-3 teacher
  SegNet student;   // stage 3 keeps the student separately
  Checkpoint checkpoint;
  std::vector<EpochRecord> history;
  int empty_mask_steps = 0;
};

/// Supervised training on pseudo labels: joint geometric augmentation of
/// image and label, mean cross-entropy family loss, Adam.
TrainResult train_stage2(const Volume& vol, const LabelVolume& pseudo, const ModelConfig& mcfg,
                         const TrainConfig& tcfg, uint64_t seed, const TrainHooks& hooks = {});

/// Self-training: an EMA teacher labels a weak view, the student learns
/// the confident pixels from a strong view of the same geometry. The
/// stage-1 labels are not consulted. Returns the teacher as the model.
TrainResult train_stage3(const Volume& vol, const SegNet& stage2_model, const TrainConfig& tcfg,
                         uint64_t seed, const TrainHooks& hooks = {});

/// Full-slice inference over a volume in eval mode.
LabelVolume predict_volume(SegNet& model, const Volume& vol, int num_slices);

/// Rebuild a network from checkpointed weights under the given prefix
/// ("student/" or "teacher/").
SegNet model_from_checkpoint(const Checkpoint& ck, const std::string& prefix);

}  // namespace sctseg
