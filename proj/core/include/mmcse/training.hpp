#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mmcse/data.hpp"
#include "mmcse/encoder.hpp"
#include "mmcse/losses.hpp"
#include "mmcse/optimizer.hpp"

namespace mmcse {

enum class Modality { None, Image, Audio };
// Alternating: a text step then a modal step, each with its own optimizer.
// Summed: one backward pass through loss_text + omega * loss_modal and a
// single optimizer over the union of both paths at the text learning rate.
enum class UpdateMode { Alternating, Summed };

std::string_view modality_name(Modality m);
Modality parse_modality(std::string_view name);
std::string_view update_mode_name(UpdateMode m);
UpdateMode parse_update_mode(std::string_view name);

struct TrainConfig {
  std::size_t max_steps = 1000;
  std::size_t text_batch_size = 64;
  std::size_t modal_batch_size = 48;
  double text_lr = 1e-3;
  double modal_lr = 3e-5;
  LossConfig loss;
  std::uint64_t seed = 42;
  std::size_t validation_interval = 100;
  bool supervised_text = false;
  Modality modality = Modality::None;
  UpdateMode update_mode = UpdateMode::Alternating;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.01;
  double grad_clip = 0.0;  // 0 disables clipping
  bool deterministic = true;

  void validate() const;
};

// Validated full-scale hyperparameters per released model.
struct TrainPreset {
  std::string_view name;
  std::size_t text_batch_size;
  double text_lr;
  std::size_t modal_batch_size;
  double modal_lr;
};

std::span<const TrainPreset> full_scale_presets();
// Throws ConfigError for an unknown name.
const TrainPreset& find_preset(std::string_view name);
void apply_preset(TrainConfig& config, const TrainPreset& preset);

// Steps needed for one pass over a dataset.
std::size_t steps_per_epoch(std::size_t dataset_size, std::size_t batch_size);

struct SelectionState {
  double best_validation_score = 0.0;
  std::size_t best_step = 0;
  std::vector<Tensor> best_checkpoint;
  std::vector<std::pair<std::size_t, double>> history;

  // Records (step, score); takes the snapshot when score beats the best so
  // far (or history was empty). Returns whether it was selected.
  bool update(std::size_t step, double score, const Encoder& model);
};

struct LossRecord {
  std::size_t step = 0;
  std::string name;
  double value = 0.0;
};

struct TrainingData {
  // Unsupervised text; used when supervised_text is false.
  std::span<const Sentence> sentences;
  // NLI-style triplets; used when supervised_text is true.
  std::span<const TripletRecord> triplets;
  std::span<const LabeledImage> images;
  std::span<const LabeledClip> clips;
  // Held-out pairs for model selection.
  const ScoredPairSet* dev = nullptr;
  AugmentConfig augment;
};

struct TrainResult {
  SelectionState selection;
  std::vector<LossRecord> losses;
};

// Loss of one batch, recorded for gradients. `step_seed` keys every dropout
// and augmentation draw of the batch.
LossValue text_batch_loss(Encoder& model, std::span<const Sentence> batch, const TrainConfig& config, Seed step_seed);
LossValue triplet_batch_loss(Encoder& model, std::span<const TripletRecord> batch, const TrainConfig& config,
                             Seed step_seed);
LossValue image_batch_loss(Encoder& model, std::span<const LabeledImage> batch, const TrainConfig& config,
                           const AugmentConfig& augment, Seed step_seed);
LossValue audio_batch_loss(Encoder& model, std::span<const LabeledClip> batch, const TrainConfig& config,
                           Seed step_seed);

// Backward, optional clipping, optimizer step. Returns the loss value.
double apply_update(const ag::Var& loss, AdamW& optimizer, const TrainConfig& config);

// The training loop. Validation runs before the first step, every
// validation_interval steps and after the last step; the model is left at its
// final parameters (the best snapshot is in the returned selection state).
// `log` receives tab-separated lines: kind, step, name, value, selected.
// Throws NumericalAbort on a non-finite loss.
TrainResult train(Encoder& model, const TrainingData& data, const TrainConfig& config, std::ostream* log = nullptr);

Tensor stack_images(std::span<const LabeledImage> images);
Tensor stack_clips(std::span<const LabeledClip> clips);

}  // namespace mmcse
