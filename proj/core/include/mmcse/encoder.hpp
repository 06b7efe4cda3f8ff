#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mmcse/autograd.hpp"
#include "mmcse/rng.hpp"
#include "mmcse/tensor.hpp"

namespace mmcse {

using Token = std::uint32_t;
using Sentence = std::vector<Token>;

inline constexpr Token kClsToken = 0;
inline constexpr Token kPadToken = 1;
// First id available to corpus words; ids below are reserved.
inline constexpr Token kFirstWordToken = 2;

struct PatchGrid {
  std::size_t rows = 4;
  std::size_t cols = 4;
};

struct AudioBlock {
  std::size_t frames = 8;
  std::size_t bins = 8;
};

struct EncoderConfig {
  std::size_t num_layers = 2;
  std::size_t num_heads = 4;
  std::size_t hidden_dim = 64;
  std::size_t ff_dim = 128;
  double dropout_rate = 0.1;
  std::size_t max_seq_len = 64;
  std::size_t vocab_size = 512;
  double layer_norm_eps = 1e-6;

  std::size_t image_height = 16;
  std::size_t image_width = 16;
  PatchGrid patch_grid;

  std::size_t spectrogram_frames = 32;
  std::size_t spectrogram_bins = 8;
  AudioBlock audio_block;

  // BERT-base width with ViT-B/16 on 224x224 images and a 1024x128
  // spectrogram front-end. Used for shape checks only.
  static EncoderConfig full_scale();

  std::size_t patch_height() const;
  std::size_t patch_width() const;
  std::size_t patch_dim() const { return 3 * patch_height() * patch_width(); }
  std::size_t image_patch_count() const { return patch_grid.rows * patch_grid.cols; }
  std::size_t image_sequence_length() const { return image_patch_count() + 1; }

  // Non-overlapping blocks; trailing frames/bins that do not fill a block are
  // dropped, as a strided convolution would.
  std::size_t audio_time_blocks() const { return spectrogram_frames / audio_block.frames; }
  std::size_t audio_freq_blocks() const { return spectrogram_bins / audio_block.bins; }
  std::size_t audio_block_count() const { return audio_time_blocks() * audio_freq_blocks(); }
  std::size_t audio_block_dim() const { return audio_block.frames * audio_block.bins; }
  std::size_t audio_sequence_length() const { return audio_block_count() + 1; }

  // Throws InvalidArgument / PatchingError on an inconsistent configuration.
  void validate() const;
};

enum class Frontend { Text, Image, Audio };

std::string_view frontend_name(Frontend f);

// Token ids for B sequences padded to a common length L. Position 0 of every
// sequence holds kClsToken.
struct TokenBatch {
  std::vector<Token> token_ids;  // B*L, example-major
  std::size_t batch = 0;
  std::size_t seq_len = 0;
  std::vector<std::size_t> lengths;  // valid prefix per example, CLS included

  // Prepends CLS and pads with kPadToken.
  static TokenBatch from_sentences(std::span<const Sentence> sentences);
};

struct PatchBatch {
  Tensor pixels;  // B x 3 x H x W, values in [0, 1]
};

struct SpectrogramBatch {
  Tensor frames;  // B x T x F
};

// Embedded sequence ready for the Transformer stack. `features` is a
// (batch*seq_len) x h matrix with example-major rows.
struct EmbeddedBatch {
  ag::Var features;
  std::size_t batch = 0;
  std::size_t seq_len = 0;
  std::vector<std::size_t> lengths;
};

// CLS outputs, one row per example.
struct Representation {
  ag::Var vectors;

  std::size_t rows() const { return vectors.rows(); }
  std::size_t dim() const { return vectors.cols(); }
  const Tensor& value() const { return vectors.value(); }
};

// Shared Transformer stack plus the three modality front-ends.
class Encoder {
 public:
  Encoder(const EncoderConfig& config, Seed init_seed);

  Encoder(const Encoder& other);
  Encoder& operator=(const Encoder& other);
  Encoder(Encoder&&) noexcept = default;
  Encoder& operator=(Encoder&&) noexcept = default;

  const EncoderConfig& config() const { return config_; }

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  // The Transformer stack used by every modality.
  std::vector<Parameter*> shared_parameters();
  std::vector<Parameter*> frontend_parameters(Frontend frontend);
  // Shared stack plus one front-end: what a modality's optimizer updates.
  std::vector<Parameter*> path_parameters(Frontend frontend);

  Parameter& parameter(std::string_view name);
  const Parameter& parameter(std::string_view name) const;
  bool has_parameter(std::string_view name) const;
  std::size_t scalar_count() const;

  std::vector<Tensor> snapshot() const;
  void restore(const std::vector<Tensor>& values);

 private:
  Parameter& add(std::string name, Tensor value, std::optional<Frontend> frontend);

  EncoderConfig config_;
  std::vector<std::unique_ptr<Parameter>> params_;
  std::vector<std::optional<Frontend>> owner_;  // nullopt = shared stack
};

EmbeddedBatch embed_text(Encoder& model, const TokenBatch& batch);
// Linear projection of flattened non-overlapping patches, before CLS and
// position embeddings: (B*P) x h.
ag::Var image_patch_projection(Encoder& model, const PatchBatch& batch);
EmbeddedBatch embed_image(Encoder& model, const PatchBatch& batch);
ag::Var audio_block_projection(Encoder& model, const SpectrogramBatch& batch);
EmbeddedBatch embed_audio(Encoder& model, const SpectrogramBatch& batch);

// Flattened patches, (B*P) x (3*ph*pw), grid row-major, each patch laid out
// channel, row, column.
Tensor extract_patches(const EncoderConfig& config, const Tensor& pixels);
// Flattened spectrogram blocks, (B*S) x (bt*bf), time-block major.
Tensor extract_audio_blocks(const EncoderConfig& config, const Tensor& frames);

// Pre-norm Transformer stack; returns the final-layer CLS row per example.
// With a dropout seed every dropout site draws its mask from that seed; with
// std::nullopt the encoder runs in eval mode (no dropout).
Representation encode(Encoder& model, const EmbeddedBatch& features, std::optional<Seed> dropout_seed);

// Two encodings of the same features under independent dropout masks.
// Equal seeds are rejected.
std::pair<Representation, Representation> encode_twice(Encoder& model, const EmbeddedBatch& features, Seed seed_a,
                                                        Seed seed_b);

// Eval-mode sentence embeddings (no graph recorded), one row per sentence.
Tensor embed_sentences(Encoder& model, std::span<const Sentence> sentences, std::size_t chunk = 256);

}  // namespace mmcse
