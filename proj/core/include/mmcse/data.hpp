#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "mmcse/encoder.hpp"
#include "mmcse/error.hpp"
#include "mmcse/rng.hpp"
#include "mmcse/tensor.hpp"

namespace mmcse {

// Clustered synthetic text. The word vocabulary is split into a block of
// shared background ids followed by one disjoint signal block per cluster.
struct SyntheticCorpusSpec {
  std::size_t num_clusters = 10;
  std::size_t sentences_per_cluster = 200;
  std::size_t vocab_size = 512;
  std::size_t min_length = 10;
  std::size_t max_length = 20;
  double signal_strength = 0.5;
  std::size_t background_tokens = 4;
  std::uint64_t seed = 42;

  void validate() const;
  std::size_t signal_tokens_per_cluster() const;
  Token background_token(std::size_t k) const { return static_cast<Token>(kFirstWordToken + k); }
  Token signal_token(std::size_t cluster, std::size_t k) const;
  // Cluster owning a signal token; nullopt for background and reserved ids.
  std::optional<std::size_t> cluster_of(Token token) const;
  // Number of signal tokens in a sentence of the given length.
  std::size_t signal_count(std::size_t length) const;
};

struct LabeledSentence {
  Sentence tokens;
  int cluster = 0;
};

std::vector<LabeledSentence> gen_text(const SyntheticCorpusSpec& spec);

struct TripletRecord {
  Sentence src;
  Sentence pos;  // same cluster as src
  Sentence neg;  // a different cluster
};

// One triplet per corpus sentence.
std::vector<TripletRecord> gen_triplets(std::span<const LabeledSentence> corpus, Seed seed);

struct ScoredPair {
  Sentence a;
  Sentence b;
  double gold = 0.0;
};

using ScoredPairSet = std::vector<ScoredPair>;

// Jaccard overlap of the two sentences' signal-token sets, scaled to [0, 5].
double signal_jaccard_score(const SyntheticCorpusSpec& spec, const Sentence& a, const Sentence& b);

// Graded similarity pairs drawn from the same vocabulary partition as the
// training corpus but generated from an independent seed.
ScoredPairSet gen_sts_pairs(const SyntheticCorpusSpec& spec, std::size_t count, Seed seed);

struct LabeledImage {
  Tensor pixels;  // 3 x H x W in [0, 1]
  int label = 0;
};

struct LabeledClip {
  Tensor frames;  // T x F, nonnegative
  int label = 0;
};

struct ImageSetSpec {
  std::size_t num_classes = 10;
  std::size_t per_class = 50;
  std::size_t height = 16;
  std::size_t width = 16;
  double noise = 0.1;
  std::uint64_t seed = 42;
};

struct AudioSetSpec {
  std::size_t num_classes = 10;
  std::size_t per_class = 30;
  std::size_t frames = 32;
  std::size_t bins = 8;
  double noise = 0.1;
  std::uint64_t seed = 42;
};

// Class-conditional oriented gratings. Examples are generated on demand, so
// full-size requests never materialize the whole set.
class SyntheticImageSource {
 public:
  explicit SyntheticImageSource(const ImageSetSpec& spec);
  std::size_t size() const { return spec_.num_classes * spec_.per_class; }
  LabeledImage at(std::size_t index) const;
  const ImageSetSpec& spec() const { return spec_; }

 private:
  ImageSetSpec spec_;
};

// Class-conditional harmonic stacks with a class-specific temporal envelope.
class SyntheticAudioSource {
 public:
  explicit SyntheticAudioSource(const AudioSetSpec& spec);
  std::size_t size() const { return spec_.num_classes * spec_.per_class; }
  LabeledClip at(std::size_t index) const;
  const AudioSetSpec& spec() const { return spec_; }

 private:
  AudioSetSpec spec_;
};

std::vector<LabeledImage> gen_images(const ImageSetSpec& spec);
std::vector<LabeledClip> gen_audio(const AudioSetSpec& spec);

struct AugmentConfig {
  double min_crop_area = 0.5;
  double max_crop_area = 1.0;
  double min_aspect = 3.0 / 4.0;
  double max_aspect = 4.0 / 3.0;
  double flip_prob = 0.5;
  double brightness = 0.2;  // factor drawn from [1-b, 1+b]
  double contrast = 0.2;    // factor drawn from [1-c, 1+c]

  static AugmentConfig identity();
};

// Random resized crop, horizontal flip, brightness and contrast jitter.
LabeledImage augment_image(const LabeledImage& image, Seed seed, const AugmentConfig& config = {});

struct NoiseSpec {
  double p_delete = 0.0;
  std::size_t n_insert = 0;
  std::size_t n_swap = 0;
  std::uint64_t seed = 0;

  bool is_clean() const { return p_delete == 0.0 && n_insert == 0 && n_swap == 0; }
};

struct NoisyTriplets {
  std::vector<TripletRecord> triplets;
  // Sentences where the requested deletions would have emptied the sentence
  // and one token was kept instead.
  std::size_t clamped_deletions = 0;
};

// Per sentence: delete round(p_delete * len) tokens, insert n_insert uniform
// word tokens at uniform positions, then apply n_swap uniform transpositions.
Sentence noisy_sentence(const Sentence& sentence, const NoiseSpec& spec, std::size_t vocab_size, Seed seed,
                        bool* clamped = nullptr);
NoisyTriplets inject_noise(std::span<const TripletRecord> triplets, const NoiseSpec& spec, std::size_t vocab_size);

// Uniform sample of n items without replacement, in sampled order.
std::vector<std::size_t> subsample_indices(std::size_t size, std::size_t n, Seed seed);

template <typename T>
std::vector<T> subsample(std::span<const T> dataset, std::size_t n, Seed seed) {
  std::vector<T> out;
  out.reserve(n);
  for (auto i : subsample_indices(dataset.size(), n, seed)) out.push_back(dataset[i]);
  return out;
}

// Endless shuffled pass over a dataset's indices. Epoch e uses the
// permutation keyed by (seed, e); a batch that runs past the end of an epoch
// continues into the next epoch's permutation.
class BatchCursor {
 public:
  BatchCursor(std::size_t dataset_size, Seed seed);

  std::vector<std::size_t> next(std::size_t batch_size);
  std::uint64_t epoch() const { return epoch_; }
  std::size_t dataset_size() const { return order_.size(); }

 private:
  void reshuffle();

  Seed seed_;
  std::vector<std::size_t> order_;
  std::size_t position_ = 0;
  std::uint64_t epoch_ = 0;
};

// Independent text and modal cursors, one (text, modal) batch pair per call.
class PairedBatchStreams {
 public:
  PairedBatchStreams(std::size_t text_size, std::size_t modal_size, Seed seed);

  std::pair<std::vector<std::size_t>, std::vector<std::size_t>> next(std::size_t text_batch,
                                                                      std::size_t modal_batch);
  BatchCursor& text() { return text_; }
  BatchCursor& modal() { return modal_; }

 private:
  BatchCursor text_;
  BatchCursor modal_;
};

}  // namespace mmcse
