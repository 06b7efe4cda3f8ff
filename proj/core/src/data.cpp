#include "mmcse/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>

namespace mmcse {

void SyntheticCorpusSpec::validate() const {
  if (num_clusters == 0) throw SpecError("corpus needs at least one cluster");
  if (min_length == 0 || min_length > max_length) throw SpecError("invalid sentence length range");
  if (!(signal_strength >= 0.0 && signal_strength <= 1.0)) throw SpecError("signal_strength must lie in [0, 1]");
  if (vocab_size < kFirstWordToken + background_tokens + num_clusters) {
    throw SpecError("vocabulary of " + std::to_string(vocab_size) + " cannot hold " +
                    std::to_string(background_tokens) + " background tokens plus signal tokens for " +
                    std::to_string(num_clusters) + " clusters");
  }
  if (background_tokens == 0 && signal_strength < 1.0) {
    throw SpecError("background tokens are required when signal_strength < 1");
  }
}

std::size_t SyntheticCorpusSpec::signal_tokens_per_cluster() const {
  return (vocab_size - kFirstWordToken - background_tokens) / num_clusters;
}

Token SyntheticCorpusSpec::signal_token(std::size_t cluster, std::size_t k) const {
  return static_cast<Token>(kFirstWordToken + background_tokens + cluster * signal_tokens_per_cluster() + k);
}

std::optional<std::size_t> SyntheticCorpusSpec::cluster_of(Token token) const {
  const std::size_t first_signal = kFirstWordToken + background_tokens;
  if (token < first_signal) return std::nullopt;
  const std::size_t cluster = (token - first_signal) / signal_tokens_per_cluster();
  if (cluster >= num_clusters) return std::nullopt;
  return cluster;
}

std::size_t SyntheticCorpusSpec::signal_count(std::size_t length) const {
  return static_cast<std::size_t>(std::lround(signal_strength * static_cast<double>(length)));
}

namespace {

Sentence make_sentence(const SyntheticCorpusSpec& spec, std::size_t cluster, Rng& rng) {
  const std::size_t length = spec.min_length + rng.below(spec.max_length - spec.min_length + 1);
  const std::size_t signal = spec.signal_count(length);
  const std::size_t per_cluster = spec.signal_tokens_per_cluster();
  Sentence s;
  s.reserve(length);
  for (std::size_t i = 0; i < signal; ++i) s.push_back(spec.signal_token(cluster, rng.below(per_cluster)));
  for (std::size_t i = signal; i < length; ++i) {
    s.push_back(spec.background_token(rng.below(spec.background_tokens)));
  }
  rng.shuffle(std::span<Token>(s));
  return s;
}

std::set<Token> signal_set(const SyntheticCorpusSpec& spec, const Sentence& s) {
  std::set<Token> out;
  for (Token t : s) {
    if (spec.cluster_of(t)) out.insert(t);
  }
  return out;
}

}  // namespace

std::vector<LabeledSentence> gen_text(const SyntheticCorpusSpec& spec) {
  spec.validate();
  const Seed root = Seed(spec.seed).child("text_corpus");
  std::vector<LabeledSentence> out;
  out.reserve(spec.num_clusters * spec.sentences_per_cluster);
  for (std::size_t c = 0; c < spec.num_clusters; ++c) {
    for (std::size_t i = 0; i < spec.sentences_per_cluster; ++i) {
      Rng rng(root.child(c).child(i));
      out.push_back({make_sentence(spec, c, rng), static_cast<int>(c)});
    }
  }
  return out;
}

std::vector<TripletRecord> gen_triplets(std::span<const LabeledSentence> corpus, Seed seed) {
  std::vector<std::vector<std::size_t>> by_cluster;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (corpus[i].cluster < 0) throw SamplingError("negative cluster id");
    auto c = static_cast<std::size_t>(corpus[i].cluster);
    if (by_cluster.size() <= c) by_cluster.resize(c + 1);
    by_cluster[c].push_back(i);
  }
  std::vector<std::size_t> populated;
  for (std::size_t c = 0; c < by_cluster.size(); ++c) {
    if (!by_cluster[c].empty()) populated.push_back(c);
  }
  if (populated.size() < 2) throw SamplingError("triplets need at least two clusters");

  std::vector<TripletRecord> out;
  out.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto c = static_cast<std::size_t>(corpus[i].cluster);
    const auto& members = by_cluster[c];
    if (members.size() < 2) {
      throw SamplingError("cluster " + std::to_string(c) + " has a single sentence; no positive to draw");
    }
    Rng rng(seed.child("triplet", i));
    std::size_t pos = members[rng.below(members.size() - 1)];
    if (pos == i) pos = members.back();
    std::size_t other = populated[rng.below(populated.size() - 1)];
    if (other == c) other = populated.back();
    const auto& negatives = by_cluster[other];
    std::size_t neg = negatives[rng.below(negatives.size())];
    out.push_back({corpus[i].tokens, corpus[pos].tokens, corpus[neg].tokens});
  }
  return out;
}

double signal_jaccard_score(const SyntheticCorpusSpec& spec, const Sentence& a, const Sentence& b) {
  auto sa = signal_set(spec, a);
  auto sb = signal_set(spec, b);
  if (sa.empty() && sb.empty()) return 0.0;
  std::size_t shared = 0;
  for (Token t : sa) shared += sb.count(t);
  const std::size_t uni = sa.size() + sb.size() - shared;
  return 5.0 * static_cast<double>(shared) / static_cast<double>(uni);
}

ScoredPairSet gen_sts_pairs(const SyntheticCorpusSpec& spec, std::size_t count, Seed seed) {
  spec.validate();
  const std::size_t per_cluster = spec.signal_tokens_per_cluster();
  ScoredPairSet out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(seed.child("sts_pair", i));
    const std::size_t cluster = rng.below(spec.num_clusters);
    Sentence a = make_sentence(spec, cluster, rng);

    // b keeps a random share of a's signal tokens; the rest of its signal
    // comes from a's cluster or, half of the time, from another cluster.
    std::size_t b_cluster = cluster;
    if (spec.num_clusters > 1 && rng.bernoulli(0.5)) {
      b_cluster = rng.below(spec.num_clusters - 1);
      if (b_cluster >= cluster) ++b_cluster;
    }
    std::vector<Token> a_signal;
    for (Token t : a) {
      if (spec.cluster_of(t)) a_signal.push_back(t);
    }
    const double keep_share = rng.uniform();
    const std::size_t length = spec.min_length + rng.below(spec.max_length - spec.min_length + 1);
    const std::size_t signal = spec.signal_count(length);
    Sentence b;
    b.reserve(length);
    for (std::size_t k = 0; k < signal; ++k) {
      if (!a_signal.empty() && rng.uniform() < keep_share) {
        b.push_back(a_signal[rng.below(a_signal.size())]);
      } else {
        b.push_back(spec.signal_token(b_cluster, rng.below(per_cluster)));
      }
    }
    for (std::size_t k = signal; k < length; ++k) b.push_back(spec.background_token(rng.below(spec.background_tokens)));
    rng.shuffle(std::span<Token>(b));
    const double gold = signal_jaccard_score(spec, a, b);
    out.push_back({std::move(a), std::move(b), gold});
  }
  return out;
}

SyntheticImageSource::SyntheticImageSource(const ImageSetSpec& spec) : spec_(spec) {
  if (spec_.num_classes == 0 || spec_.per_class == 0 || spec_.height == 0 || spec_.width == 0) {
    throw SpecError("image set dimensions must be positive");
  }
}

LabeledImage SyntheticImageSource::at(std::size_t index) const {
  if (index >= size()) throw InvalidArgument("image index out of range");
  const std::size_t label = index / spec_.per_class;
  const std::size_t H = spec_.height, W = spec_.width;
  const Seed class_seed = Seed(spec_.seed).child("image_class", label);
  Rng cls(class_seed);
  const double angle = std::numbers::pi * (static_cast<double>(label) + 0.5 * cls.uniform()) /
                       static_cast<double>(spec_.num_classes);
  const double frequency = 1.0 + static_cast<double>(label % 3) + 0.5 * cls.uniform();
  const double phase = 2.0 * std::numbers::pi * cls.uniform();
  double color[3];
  for (auto& c : color) c = 0.3 + 0.7 * cls.uniform();

  Rng noise(Seed(spec_.seed).child("image_noise", index));
  Tensor pixels({3, H, W});
  const double cs = std::cos(angle), sn = std::sin(angle);
  for (std::size_t ch = 0; ch < 3; ++ch) {
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) {
        const double u = (static_cast<double>(x) * cs + static_cast<double>(y) * sn) / static_cast<double>(W);
        double v = 0.5 + 0.4 * color[ch] * std::cos(2.0 * std::numbers::pi * frequency * u + phase);
        if (spec_.noise > 0.0) v += spec_.noise * noise.normal();
        pixels[(ch * H + y) * W + x] = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return {std::move(pixels), static_cast<int>(label)};
}

SyntheticAudioSource::SyntheticAudioSource(const AudioSetSpec& spec) : spec_(spec) {
  if (spec_.num_classes == 0 || spec_.per_class == 0 || spec_.frames == 0 || spec_.bins == 0) {
    throw SpecError("audio set dimensions must be positive");
  }
}

LabeledClip SyntheticAudioSource::at(std::size_t index) const {
  if (index >= size()) throw InvalidArgument("clip index out of range");
  const std::size_t label = index / spec_.per_class;
  const std::size_t T = spec_.frames, F = spec_.bins;
  Rng cls(Seed(spec_.seed).child("audio_class", label));
  // Fundamental placed so that classes spread over the lower half of the band.
  const double fundamental = 0.5 + (static_cast<double>(F) / 2.0) *
                                       (static_cast<double>(label) + cls.uniform()) /
                                       static_cast<double>(spec_.num_classes);
  const double rate = 1.0 + static_cast<double>(label % 4);
  const double phase = 2.0 * std::numbers::pi * cls.uniform();
  const double width = std::max(0.35, static_cast<double>(F) / 32.0);

  Rng noise(Seed(spec_.seed).child("audio_noise", index));
  Tensor frames({T, F});
  for (std::size_t t = 0; t < T; ++t) {
    const double envelope =
        0.6 + 0.4 * std::cos(2.0 * std::numbers::pi * rate * static_cast<double>(t) / static_cast<double>(T) + phase);
    for (std::size_t f = 0; f < F; ++f) {
      double v = 0.0;
      for (int harmonic = 1; harmonic <= 3; ++harmonic) {
        const double centre = fundamental * harmonic;
        const double d = (static_cast<double>(f) - centre) / width;
        v += std::exp(-0.5 * d * d) / harmonic;
      }
      v *= envelope;
      if (spec_.noise > 0.0) v += spec_.noise * noise.normal();
      frames[t * F + f] = std::max(v, 0.0);
    }
  }
  return {std::move(frames), static_cast<int>(label)};
}

std::vector<LabeledImage> gen_images(const ImageSetSpec& spec) {
  SyntheticImageSource source(spec);
  std::vector<LabeledImage> out;
  out.reserve(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) out.push_back(source.at(i));
  return out;
}

std::vector<LabeledClip> gen_audio(const AudioSetSpec& spec) {
  SyntheticAudioSource source(spec);
  std::vector<LabeledClip> out;
  out.reserve(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) out.push_back(source.at(i));
  return out;
}

AugmentConfig AugmentConfig::identity() {
  AugmentConfig c;
  c.min_crop_area = c.max_crop_area = 1.0;
  c.min_aspect = c.max_aspect = 1.0;
  c.flip_prob = 0.0;
  c.brightness = 0.0;
  c.contrast = 0.0;
  return c;
}

LabeledImage augment_image(const LabeledImage& image, Seed seed, const AugmentConfig& config) {
  const Tensor& in = image.pixels;
  if (in.rank() != 3 || in.dim(0) != 3) throw InvalidArgument("augment_image expects a 3 x H x W image");
  const std::size_t H = in.dim(1), W = in.dim(2);
  Rng rng(seed);

  const double area = rng.uniform(config.min_crop_area, config.max_crop_area);
  const double aspect =
      std::exp(rng.uniform(std::log(config.min_aspect), std::log(config.max_aspect)));
  auto crop_w = static_cast<std::size_t>(std::lround(std::sqrt(area * aspect) * static_cast<double>(W)));
  auto crop_h = static_cast<std::size_t>(std::lround(std::sqrt(area / aspect) * static_cast<double>(H)));
  crop_w = std::clamp<std::size_t>(crop_w, 1, W);
  crop_h = std::clamp<std::size_t>(crop_h, 1, H);
  const std::size_t x0 = rng.below(W - crop_w + 1);
  const std::size_t y0 = rng.below(H - crop_h + 1);
  const bool flip = rng.bernoulli(config.flip_prob);
  const double brightness = 1.0 + config.brightness * rng.uniform(-1.0, 1.0);
  const double contrast = 1.0 + config.contrast * rng.uniform(-1.0, 1.0);

  // Bilinear resize of the crop back to H x W, sampling at pixel centres.
  Tensor out({3, H, W});
  const double sy = static_cast<double>(crop_h) / static_cast<double>(H);
  const double sx = static_cast<double>(crop_w) / static_cast<double>(W);
  for (std::size_t y = 0; y < H; ++y) {
    double fy = static_cast<double>(y0) + (static_cast<double>(y) + 0.5) * sy - 0.5;
    fy = std::clamp(fy, static_cast<double>(y0), static_cast<double>(y0 + crop_h - 1));
    const auto iy = static_cast<std::size_t>(std::floor(fy));
    const std::size_t iy1 = std::min(iy + 1, y0 + crop_h - 1);
    const double wy = fy - static_cast<double>(iy);
    for (std::size_t x = 0; x < W; ++x) {
      const std::size_t xo = flip ? W - 1 - x : x;
      double fx = static_cast<double>(x0) + (static_cast<double>(x) + 0.5) * sx - 0.5;
      fx = std::clamp(fx, static_cast<double>(x0), static_cast<double>(x0 + crop_w - 1));
      const auto ix = static_cast<std::size_t>(std::floor(fx));
      const std::size_t ix1 = std::min(ix + 1, x0 + crop_w - 1);
      const double wx = fx - static_cast<double>(ix);
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double* plane = in.data() + ch * H * W;
        double v;
        if (wx == 0.0 && wy == 0.0) {
          v = plane[iy * W + ix];
        } else {
          v = (1 - wy) * ((1 - wx) * plane[iy * W + ix] + wx * plane[iy * W + ix1]) +
              wy * ((1 - wx) * plane[iy1 * W + ix] + wx * plane[iy1 * W + ix1]);
        }
        out[(ch * H + y) * W + xo] = v;
      }
    }
  }

  if (config.brightness > 0.0) {
    for (auto& v : out.values()) v *= brightness;
  }
  if (config.contrast > 0.0) {
    double mean = 0.0;
    for (double v : out.values()) mean += v;
    mean /= static_cast<double>(out.size());
    for (auto& v : out.values()) v = (v - mean) * contrast + mean;
  }
  for (auto& v : out.values()) v = std::clamp(v, 0.0, 1.0);
  return {std::move(out), image.label};
}

Sentence noisy_sentence(const Sentence& sentence, const NoiseSpec& spec, std::size_t vocab_size, Seed seed,
                        bool* clamped) {
  if (!(spec.p_delete >= 0.0 && spec.p_delete <= 1.0)) throw InvalidArgument("p_delete must lie in [0, 1]");
  if (vocab_size <= kFirstWordToken) throw InvalidArgument("vocabulary has no word tokens");
  if (clamped) *clamped = false;
  Rng rng(seed);
  Sentence out = sentence;

  auto deletions = static_cast<std::size_t>(std::lround(spec.p_delete * static_cast<double>(out.size())));
  if (deletions > 0 && deletions >= out.size()) {
    if (clamped) *clamped = true;
    deletions = out.empty() ? 0 : out.size() - 1;
  }
  if (deletions > 0) {
    auto drop = subsample_indices(out.size(), deletions, seed.child("delete"));
    std::vector<bool> removed(out.size(), false);
    for (auto i : drop) removed[i] = true;
    Sentence kept;
    kept.reserve(out.size() - deletions);
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (!removed[i]) kept.push_back(out[i]);
    }
    out = std::move(kept);
  }

  const std::size_t word_range = vocab_size - kFirstWordToken;
  for (std::size_t k = 0; k < spec.n_insert; ++k) {
    const auto token = static_cast<Token>(kFirstWordToken + rng.below(word_range));
    const std::size_t at = rng.below(out.size() + 1);
    out.insert(out.begin() + static_cast<std::ptrdiff_t>(at), token);
  }

  if (out.size() >= 2) {
    for (std::size_t k = 0; k < spec.n_swap; ++k) {
      const std::size_t i = rng.below(out.size());
      std::size_t j = rng.below(out.size() - 1);
      if (j >= i) ++j;
      std::swap(out[i], out[j]);
    }
  }
  return out;
}

NoisyTriplets inject_noise(std::span<const TripletRecord> triplets, const NoiseSpec& spec, std::size_t vocab_size) {
  NoisyTriplets result;
  result.triplets.reserve(triplets.size());
  const Seed root = Seed(spec.seed).child("noise");
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    const Seed s = root.child(i);
    bool c1 = false, c2 = false, c3 = false;
    TripletRecord t{noisy_sentence(triplets[i].src, spec, vocab_size, s.child("src"), &c1),
                    noisy_sentence(triplets[i].pos, spec, vocab_size, s.child("pos"), &c2),
                    noisy_sentence(triplets[i].neg, spec, vocab_size, s.child("neg"), &c3)};
    result.clamped_deletions += static_cast<std::size_t>(c1) + c2 + c3;
    result.triplets.push_back(std::move(t));
  }
  return result;
}

std::vector<std::size_t> subsample_indices(std::size_t size, std::size_t n, Seed seed) {
  if (n > size) {
    throw InvalidArgument("cannot draw " + std::to_string(n) + " items from a dataset of " + std::to_string(size));
  }
  std::vector<std::size_t> pool(size);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  Rng rng(seed);
  // Partial Fisher-Yates: the first n slots become the sample.
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + rng.below(size - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(n);
  return pool;
}

BatchCursor::BatchCursor(std::size_t dataset_size, Seed seed) : seed_(seed), order_(dataset_size) {
  reshuffle();
}

void BatchCursor::reshuffle() {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  Rng rng(seed_.child("epoch", epoch_));
  rng.shuffle(std::span<std::size_t>(order_));
  position_ = 0;
}

std::vector<std::size_t> BatchCursor::next(std::size_t batch_size) {
  if (order_.empty()) throw InvalidArgument("batch cursor over an empty dataset");
  if (batch_size == 0) throw InvalidArgument("batch size must be positive");
  std::vector<std::size_t> out;
  out.reserve(batch_size);
  while (out.size() < batch_size) {
    if (position_ == order_.size()) {
      ++epoch_;
      reshuffle();
    }
    out.push_back(order_[position_++]);
  }
  return out;
}

PairedBatchStreams::PairedBatchStreams(std::size_t text_size, std::size_t modal_size, Seed seed)
    : text_(text_size, seed.child("text_stream")), modal_(modal_size, seed.child("modal_stream")) {}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> PairedBatchStreams::next(std::size_t text_batch,
                                                                                         std::size_t modal_batch) {
  auto t = text_.next(text_batch);
  auto m = modal_.next(modal_batch);
  return {std::move(t), std::move(m)};
}

}  // namespace mmcse
