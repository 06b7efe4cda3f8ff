#include "mmcse/training.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include <Eigen/Core>

#include "mmcse/error.hpp"
#include "mmcse/metrics.hpp"

namespace mmcse {

std::string_view modality_name(Modality m) {
  switch (m) {
    case Modality::None: return "none";
    case Modality::Image: return "image";
    case Modality::Audio: return "audio";
  }
  return "none";
}

Modality parse_modality(std::string_view name) {
  if (name == "none") return Modality::None;
  if (name == "image") return Modality::Image;
  if (name == "audio") return Modality::Audio;
  throw ConfigError("unknown modality '" + std::string(name) + "' (expected none, image or audio)");
}

std::string_view update_mode_name(UpdateMode m) {
  return m == UpdateMode::Alternating ? "alternating" : "summed";
}

UpdateMode parse_update_mode(std::string_view name) {
  if (name == "alternating") return UpdateMode::Alternating;
  if (name == "summed") return UpdateMode::Summed;
  throw ConfigError("unknown update mode '" + std::string(name) + "' (expected alternating or summed)");
}

void TrainConfig::validate() const {
  if (text_batch_size == 0 || modal_batch_size == 0) throw ConfigError("batch sizes must be at least 1");
  if (!(text_lr > 0.0) || !(modal_lr > 0.0)) throw ConfigError("learning rates must be positive");
  if (validation_interval == 0) throw ConfigError("validation_interval must be at least 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be nonnegative");
  if (!(grad_clip >= 0.0)) throw ConfigError("grad_clip must be nonnegative");
  loss.validate();
}

namespace {

constexpr std::array<TrainPreset, 6> kPresets{{
    {"VisualCSE-BERT-base", 64, 3e-5, 48, 1e-6},
    {"AudioCSE-BERT-base", 64, 3e-5, 48, 2e-7},
    {"VisualCSE-RoBERTa-base", 128, 2e-5, 48, 5e-7},
    {"AudioCSE-RoBERTa-base", 128, 2e-5, 48, 2e-7},
    {"VisualCSE-RoBERTa-large", 256, 1e-5, 48, 5e-7},
    {"AudioCSE-RoBERTa-large", 256, 1e-5, 48, 5e-6},
}};

}  // namespace

std::span<const TrainPreset> full_scale_presets() { return kPresets; }

const TrainPreset& find_preset(std::string_view name) {
  for (const auto& p : kPresets) {
    if (p.name == name) return p;
  }
  throw ConfigError("unknown preset '" + std::string(name) + "'");
}

void apply_preset(TrainConfig& config, const TrainPreset& preset) {
  config.text_batch_size = preset.text_batch_size;
  config.text_lr = preset.text_lr;
  config.modal_batch_size = preset.modal_batch_size;
  config.modal_lr = preset.modal_lr;
}

std::size_t steps_per_epoch(std::size_t dataset_size, std::size_t batch_size) {
  if (batch_size == 0) throw InvalidArgument("batch size must be positive");
  return (dataset_size + batch_size - 1) / batch_size;
}

bool SelectionState::update(std::size_t step, double score, const Encoder& model) {
  const bool selected = history.empty() || score > best_validation_score;
  history.emplace_back(step, score);
  if (selected) {
    best_validation_score = score;
    best_step = step;
    best_checkpoint = model.snapshot();
  }
  return selected;
}

Tensor stack_images(std::span<const LabeledImage> images) {
  if (images.empty()) throw InvalidArgument("empty image batch");
  const Shape& s = images.front().pixels.shape();
  Tensor out({images.size(), s.at(0), s.at(1), s.at(2)});
  const std::size_t per = images.front().pixels.size();
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].pixels.shape() != s) throw DimensionError("images in a batch differ in shape");
    std::copy_n(images[i].pixels.data(), per, out.data() + i * per);
  }
  return out;
}

Tensor stack_clips(std::span<const LabeledClip> clips) {
  if (clips.empty()) throw InvalidArgument("empty clip batch");
  const Shape& s = clips.front().frames.shape();
  Tensor out({clips.size(), s.at(0), s.at(1)});
  const std::size_t per = clips.front().frames.size();
  for (std::size_t i = 0; i < clips.size(); ++i) {
    if (clips[i].frames.shape() != s) throw DimensionError("clips in a batch differ in shape");
    std::copy_n(clips[i].frames.data(), per, out.data() + i * per);
  }
  return out;
}

LossValue text_batch_loss(Encoder& model, std::span<const Sentence> batch, const TrainConfig& config, Seed step_seed) {
  const auto features = embed_text(model, TokenBatch::from_sentences(batch));
  auto [a, b] = encode_twice(model, features, step_seed.child("dropout_a"), step_seed.child("dropout_b"));
  return text_unsup_loss(a, b, config.loss.tau_text, config.loss.reduction);
}

LossValue triplet_batch_loss(Encoder& model, std::span<const TripletRecord> batch, const TrainConfig& config,
                             Seed step_seed) {
  std::vector<Sentence> src, pos, neg;
  src.reserve(batch.size());
  pos.reserve(batch.size());
  neg.reserve(batch.size());
  for (const auto& t : batch) {
    src.push_back(t.src);
    pos.push_back(t.pos);
    neg.push_back(t.neg);
  }
  auto run = [&](const std::vector<Sentence>& s, std::string_view site) {
    return encode(model, embed_text(model, TokenBatch::from_sentences(s)), step_seed.child(site));
  };
  const Representation hs = run(src, "dropout_src");
  const Representation hp = run(pos, "dropout_pos");
  const Representation hn = run(neg, "dropout_neg");
  return text_sup_loss(hs, hp, hn, config.loss.tau_text, config.loss.reduction);
}

namespace {

LossValue modal_loss(const Representation& a, const Representation& b, std::span<const int> labels,
                     const TrainConfig& config) {
  if (config.loss.modal_variant == ModalLossVariant::SupCon) {
    return modal_supcon_loss(a, b, labels, config.loss.tau_modal, config.loss.reduction);
  }
  return modal_simclr_loss(a, b, config.loss.tau_modal, config.loss.reduction);
}

}  // namespace

LossValue image_batch_loss(Encoder& model, std::span<const LabeledImage> batch, const TrainConfig& config,
                           const AugmentConfig& augment, Seed step_seed) {
  std::vector<LabeledImage> view_a, view_b;
  std::vector<int> labels;
  view_a.reserve(batch.size());
  view_b.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    view_a.push_back(augment_image(batch[i], step_seed.child("augment_a", i), augment));
    view_b.push_back(augment_image(batch[i], step_seed.child("augment_b", i), augment));
    labels.push_back(batch[i].label);
  }
  const Representation a = encode(model, embed_image(model, PatchBatch{stack_images(view_a)}), step_seed.child("dropout_a"));
  const Representation b = encode(model, embed_image(model, PatchBatch{stack_images(view_b)}), step_seed.child("dropout_b"));
  return modal_loss(a, b, labels, config);
}

LossValue audio_batch_loss(Encoder& model, std::span<const LabeledClip> batch, const TrainConfig& config,
                           Seed step_seed) {
  std::vector<int> labels;
  labels.reserve(batch.size());
  for (const auto& c : batch) labels.push_back(c.label);
  const auto features = embed_audio(model, SpectrogramBatch{stack_clips(batch)});
  auto [a, b] = encode_twice(model, features, step_seed.child("dropout_a"), step_seed.child("dropout_b"));
  return modal_loss(a, b, labels, config);
}

double apply_update(const ag::Var& loss, AdamW& optimizer, const TrainConfig& config) {
  const double value = loss.value().item();
  ag::backward(loss);
  if (config.grad_clip > 0.0) clip_grad_norm(optimizer.parameters(), config.grad_clip);
  optimizer.step();
  return value;
}

namespace {

template <typename T>
std::vector<T> gather(std::span<const T> data, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(data[i]);
  return out;
}

std::uint64_t batch_hash(const std::vector<std::size_t>& idx) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (auto i : idx) {
    for (int b = 0; b < 8; ++b) {
      h ^= (static_cast<std::uint64_t>(i) >> (8 * b)) & 0xffu;
      h *= 0x100000001b3ull;
    }
  }
  return h;
}

class Trainer {
 public:
  Trainer(Encoder& model, const TrainingData& data, const TrainConfig& config, std::ostream* log)
      : model_(model), data_(data), config_(config), log_(log), root_(Seed(config.seed)) {}

  TrainResult run();

 private:
  double text_loss_step(std::size_t step, AdamW* optimizer, ag::Var* keep);
  double modal_loss_step(std::size_t step, AdamW* optimizer, ag::Var* keep);
  void check_finite(double value, std::size_t step, std::string_view name, double lr,
                    const std::vector<std::size_t>& idx);
  void validate(std::size_t step);
  void record(std::size_t step, std::string name, double value);

  std::string text_loss_name() const { return config_.supervised_text ? "text_sup" : "text_unsup"; }
  std::string modal_loss_name_() const {
    return std::string(modal_loss_name(config_.loss.modal_variant)) + "_" + std::string(modality_name(config_.modality));
  }

  Encoder& model_;
  const TrainingData& data_;
  const TrainConfig& config_;
  std::ostream* log_;
  Seed root_;
  std::optional<BatchCursor> text_cursor_;
  std::optional<BatchCursor> modal_cursor_;
  TrainResult result_;
};

void Trainer::record(std::size_t step, std::string name, double value) {
  if (log_) {
    std::ostringstream line;
    line.precision(17);
    line << "train\t" << step << '\t' << name << '\t' << value << "\t-\n";
    *log_ << line.str();
  }
  result_.losses.push_back({step, std::move(name), value});
}

void Trainer::check_finite(double value, std::size_t step, std::string_view name, double lr,
                           const std::vector<std::size_t>& idx) {
  if (std::isfinite(value)) return;
  std::ostringstream msg;
  msg << "non-finite " << name << " loss (" << value << ") at step " << step << ", lr " << lr << ", batch hash "
      << std::hex << batch_hash(idx);
  if (log_) {
    *log_ << "abort\t" << step << '\t' << name << '\t' << value << "\t-\n";
    log_->flush();
  }
  throw NumericalAbort(msg.str());
}

void Trainer::validate(std::size_t step) {
  double score = 0.0;
  try {
    score = sts_spearman(model_, *data_.dev);
  } catch (const InvalidArgument& e) {
    // Non-finite embeddings mean the parameters have diverged.
    if (log_) {
      *log_ << "abort\t" << step << "\tdev_spearman\tnan\t-\n";
      log_->flush();
    }
    throw NumericalAbort("non-finite dev embeddings at step " + std::to_string(step) + ": " + e.what());
  }
  const bool selected = result_.selection.update(step, score, model_);
  if (log_) {
    std::ostringstream line;
    line.precision(17);
    line << "valid\t" << step << "\tdev_spearman\t" << score << '\t' << (selected ? 1 : 0) << '\n';
    *log_ << line.str();
  }
}

// With an optimizer: backward and step, returns the loss. Without: stores
// the recorded loss in *keep for a later joint update.
double Trainer::text_loss_step(std::size_t step, AdamW* optimizer, ag::Var* keep) {
  const auto idx = text_cursor_->next(config_.text_batch_size);
  const Seed seed = root_.child("text_step", step);
  LossValue loss = config_.supervised_text
                       ? triplet_batch_loss(model_, gather(data_.triplets, idx), config_, seed)
                       : text_batch_loss(model_, gather(data_.sentences, idx), config_, seed);
  const double value = loss.value();
  check_finite(value, step, text_loss_name(), config_.text_lr, idx);
  if (optimizer) {
    apply_update(loss.total, *optimizer, config_);
  } else {
    *keep = loss.total;
  }
  return value;
}

double Trainer::modal_loss_step(std::size_t step, AdamW* optimizer, ag::Var* keep) {
  const auto idx = modal_cursor_->next(config_.modal_batch_size);
  const Seed seed = root_.child("modal_step", step);
  LossValue loss = config_.modality == Modality::Image
                       ? image_batch_loss(model_, gather(data_.images, idx), config_, data_.augment, seed)
                       : audio_batch_loss(model_, gather(data_.clips, idx), config_, seed);
  const double value = loss.value();
  check_finite(value, step, modal_loss_name_(), config_.modal_lr, idx);
  if (optimizer) {
    apply_update(ag::scale(loss.total, config_.loss.omega_modal), *optimizer, config_);
  } else {
    *keep = loss.total;
  }
  return value;
}

TrainResult Trainer::run() {
  config_.validate();
  if (data_.dev == nullptr || data_.dev->empty()) throw InvalidArgument("training needs a validation pair set");
  const std::size_t text_size = config_.supervised_text ? data_.triplets.size() : data_.sentences.size();
  if (text_size == 0) throw InvalidArgument("empty text training set");
  text_cursor_.emplace(text_size, root_.child("text_stream"));
  const bool multimodal = config_.modality != Modality::None;
  if (multimodal) {
    const std::size_t modal_size = config_.modality == Modality::Image ? data_.images.size() : data_.clips.size();
    if (modal_size == 0) throw InvalidArgument("empty " + std::string(modality_name(config_.modality)) + " training set");
    modal_cursor_.emplace(modal_size, root_.child("modal_stream"));
  }
  const Frontend modal_frontend = config_.modality == Modality::Audio ? Frontend::Audio : Frontend::Image;

  auto options = [&](double lr) {
    return AdamWOptions{lr, config_.beta1, config_.beta2, config_.adam_eps, config_.weight_decay};
  };
  // A zero-weight modal task contributes nothing; skipping it keeps the run
  // identical to a text-only run.
  const bool run_modal = multimodal && config_.loss.omega_modal != 0.0;
  const bool summed = run_modal && config_.update_mode == UpdateMode::Summed;
  std::optional<AdamW> opt_text, opt_modal;
  if (summed) {
    auto params = model_.path_parameters(Frontend::Text);
    for (auto* p : model_.frontend_parameters(modal_frontend)) params.push_back(p);
    opt_text.emplace(std::move(params), options(config_.text_lr));
  } else {
    opt_text.emplace(model_.path_parameters(Frontend::Text), options(config_.text_lr));
    if (run_modal) opt_modal.emplace(model_.path_parameters(modal_frontend), options(config_.modal_lr));
  }

  if (log_) *log_ << "kind\tstep\tname\tvalue\tselected\n";
  validate(0);
  for (std::size_t step = 1; step <= config_.max_steps; ++step) {
    if (summed) {
      ag::Var text_total, modal_total;
      const double t = text_loss_step(step, nullptr, &text_total);
      const double m = modal_loss_step(step, nullptr, &modal_total);
      apply_update(combine(text_total, modal_total, config_.loss.omega_modal), *opt_text, config_);
      record(step, text_loss_name(), t);
      record(step, modal_loss_name_(), m);
    } else {
      record(step, text_loss_name(), text_loss_step(step, &*opt_text, nullptr));
      if (run_modal) record(step, modal_loss_name_(), modal_loss_step(step, &*opt_modal, nullptr));
    }
    if (step % config_.validation_interval == 0 || step == config_.max_steps) validate(step);
  }
  if (log_) log_->flush();
  return std::move(result_);
}

}  // namespace

TrainResult train(Encoder& model, const TrainingData& data, const TrainConfig& config, std::ostream* log) {
  if (config.deterministic) Eigen::setNbThreads(1);
  Trainer trainer(model, data, config, log);
  return trainer.run();
}

}  // namespace mmcse
