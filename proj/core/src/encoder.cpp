#include "mmcse/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "mmcse/error.hpp"
#include "mmcse/kernels.hpp"

namespace mmcse {

namespace {

Tensor normal_init(Shape shape, double stddev, Seed seed) {
  Tensor t(std::move(shape));
  Rng rng(seed);
  for (auto& v : t.values()) v = rng.normal(0.0, stddev);
  return t;
}

Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, Seed seed) {
  Tensor t({fan_in, fan_out});
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Rng rng(seed);
  for (auto& v : t.values()) v = rng.uniform(-limit, limit);
  return t;
}

std::string layer_name(std::size_t layer, std::string_view leaf) {
  return "layers." + std::to_string(layer) + "." + std::string(leaf);
}

// Rows of a (batch*seq_len) matrix holding the CLS position of each example.
std::vector<std::size_t> cls_rows(std::size_t batch, std::size_t seq_len) {
  std::vector<std::size_t> idx(batch);
  for (std::size_t b = 0; b < batch; ++b) idx[b] = b * seq_len;
  return idx;
}

std::vector<std::size_t> repeated_positions(std::size_t batch, std::size_t seq_len) {
  std::vector<std::size_t> idx(batch * seq_len);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t p = 0; p < seq_len; ++p) idx[b * seq_len + p] = p;
  }
  return idx;
}

// Interleaves one CLS row (row 0 of `stacked`) ahead of each example's `count`
// body rows (rows 1..batch*count of `stacked`).
std::vector<std::size_t> cls_interleave(std::size_t batch, std::size_t count) {
  std::vector<std::size_t> idx;
  idx.reserve(batch * (count + 1));
  for (std::size_t b = 0; b < batch; ++b) {
    idx.push_back(0);
    for (std::size_t p = 0; p < count; ++p) idx.push_back(1 + b * count + p);
  }
  return idx;
}

}  // namespace

EncoderConfig EncoderConfig::full_scale() {
  EncoderConfig c;
  c.num_layers = 12;
  c.num_heads = 12;
  c.hidden_dim = 768;
  c.ff_dim = 3072;
  c.max_seq_len = 512;
  c.vocab_size = 30522;
  c.image_height = 224;
  c.image_width = 224;
  c.patch_grid = {14, 14};
  c.spectrogram_frames = 1024;
  c.spectrogram_bins = 128;
  // 21 x 10 blocks of 48 frames x 12 bins; the last 16 frames and 8 bins are
  // dropped.
  c.audio_block = {48, 12};
  return c;
}

std::size_t EncoderConfig::patch_height() const {
  if (patch_grid.rows == 0 || image_height % patch_grid.rows != 0) {
    throw PatchingError("image height " + std::to_string(image_height) + " is not divisible into " +
                        std::to_string(patch_grid.rows) + " patch rows");
  }
  return image_height / patch_grid.rows;
}

std::size_t EncoderConfig::patch_width() const {
  if (patch_grid.cols == 0 || image_width % patch_grid.cols != 0) {
    throw PatchingError("image width " + std::to_string(image_width) + " is not divisible into " +
                        std::to_string(patch_grid.cols) + " patch columns");
  }
  return image_width / patch_grid.cols;
}

void EncoderConfig::validate() const {
  if (num_layers == 0 || num_heads == 0 || hidden_dim == 0 || ff_dim == 0 || max_seq_len == 0) {
    throw InvalidArgument("encoder dimensions must be positive");
  }
  if (hidden_dim % num_heads != 0) {
    throw InvalidArgument("hidden_dim " + std::to_string(hidden_dim) + " is not divisible by num_heads " +
                          std::to_string(num_heads));
  }
  if (hidden_dim < 2) throw InvalidArgument("hidden_dim must be at least 2");
  if (!(dropout_rate >= 0.0) || dropout_rate >= 1.0) throw InvalidArgument("dropout_rate must lie in [0, 1)");
  if (vocab_size <= kFirstWordToken) throw InvalidArgument("vocab_size leaves no room for word tokens");
  if (!(layer_norm_eps > 0.0)) throw InvalidArgument("layer_norm_eps must be positive");
  (void)patch_height();
  (void)patch_width();
  if (audio_block.frames == 0 || audio_block.bins == 0 || audio_block_count() == 0) {
    throw PatchingError("audio block " + std::to_string(audio_block.frames) + "x" + std::to_string(audio_block.bins) +
                        " does not fit a " + std::to_string(spectrogram_frames) + "x" +
                        std::to_string(spectrogram_bins) + " spectrogram");
  }
  if (max_seq_len < image_sequence_length() || max_seq_len < audio_sequence_length()) {
    throw InvalidArgument("max_seq_len " + std::to_string(max_seq_len) + " is shorter than the image (" +
                          std::to_string(image_sequence_length()) + ") or audio (" +
                          std::to_string(audio_sequence_length()) + ") sequence");
  }
}

std::string_view frontend_name(Frontend f) {
  switch (f) {
    case Frontend::Text: return "text";
    case Frontend::Image: return "image";
    case Frontend::Audio: return "audio";
  }
  return "unknown";
}

TokenBatch TokenBatch::from_sentences(std::span<const Sentence> sentences) {
  if (sentences.empty()) throw InvalidArgument("empty sentence batch");
  TokenBatch batch;
  batch.batch = sentences.size();
  std::size_t longest = 0;
  for (const auto& s : sentences) longest = std::max(longest, s.size());
  batch.seq_len = longest + 1;
  batch.token_ids.assign(batch.batch * batch.seq_len, kPadToken);
  batch.lengths.resize(batch.batch);
  for (std::size_t b = 0; b < batch.batch; ++b) {
    Token* row = batch.token_ids.data() + b * batch.seq_len;
    row[0] = kClsToken;
    std::copy(sentences[b].begin(), sentences[b].end(), row + 1);
    batch.lengths[b] = sentences[b].size() + 1;
  }
  return batch;
}

Encoder::Encoder(const EncoderConfig& config, Seed init_seed) : config_(config) {
  config_.validate();
  const std::size_t h = config_.hidden_dim;
  auto normal = [&](const std::string& name, Shape shape) {
    return normal_init(std::move(shape), 0.02, init_seed.child(name));
  };
  auto xavier = [&](const std::string& name, std::size_t in, std::size_t out) {
    return xavier_uniform(in, out, init_seed.child(name));
  };

  add("text.token_embedding", normal("text.token_embedding", {config_.vocab_size, h}), Frontend::Text);
  add("text.position_embedding", normal("text.position_embedding", {config_.max_seq_len, h}), Frontend::Text);

  add("image.patch_projection.weight", xavier("image.patch_projection.weight", config_.patch_dim(), h),
      Frontend::Image);
  add("image.patch_projection.bias", Tensor({h}), Frontend::Image);
  add("image.cls", normal("image.cls", {1, h}), Frontend::Image);
  add("image.position_embedding", normal("image.position_embedding", {config_.image_sequence_length(), h}),
      Frontend::Image);

  add("audio.block_projection.weight", xavier("audio.block_projection.weight", config_.audio_block_dim(), h),
      Frontend::Audio);
  add("audio.block_projection.bias", Tensor({h}), Frontend::Audio);
  add("audio.cls", normal("audio.cls", {1, h}), Frontend::Audio);
  add("audio.position_embedding", normal("audio.position_embedding", {config_.audio_sequence_length(), h}),
      Frontend::Audio);

  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    add(layer_name(l, "ln1.gain"), Tensor::ones({h}), std::nullopt);
    add(layer_name(l, "ln1.bias"), Tensor({h}), std::nullopt);
    add(layer_name(l, "attn.qkv.weight"), xavier(layer_name(l, "attn.qkv.weight"), h, 3 * h), std::nullopt);
    add(layer_name(l, "attn.qkv.bias"), Tensor({3 * h}), std::nullopt);
    add(layer_name(l, "attn.out.weight"), xavier(layer_name(l, "attn.out.weight"), h, h), std::nullopt);
    add(layer_name(l, "attn.out.bias"), Tensor({h}), std::nullopt);
    add(layer_name(l, "ln2.gain"), Tensor::ones({h}), std::nullopt);
    add(layer_name(l, "ln2.bias"), Tensor({h}), std::nullopt);
    add(layer_name(l, "ff.in.weight"), xavier(layer_name(l, "ff.in.weight"), h, config_.ff_dim), std::nullopt);
    add(layer_name(l, "ff.in.bias"), Tensor({config_.ff_dim}), std::nullopt);
    add(layer_name(l, "ff.out.weight"), xavier(layer_name(l, "ff.out.weight"), config_.ff_dim, h), std::nullopt);
    add(layer_name(l, "ff.out.bias"), Tensor({h}), std::nullopt);
  }
  add("final_ln.gain", Tensor::ones({h}), std::nullopt);
  add("final_ln.bias", Tensor({h}), std::nullopt);
}

Encoder::Encoder(const Encoder& other) : config_(other.config_), owner_(other.owner_) {
  params_.reserve(other.params_.size());
  for (const auto& p : other.params_) params_.push_back(std::make_unique<Parameter>(p->name(), p->value()));
}

Encoder& Encoder::operator=(const Encoder& other) {
  if (this != &other) {
    Encoder copy(other);
    *this = std::move(copy);
  }
  return *this;
}

Parameter& Encoder::add(std::string name, Tensor value, std::optional<Frontend> frontend) {
  params_.push_back(std::make_unique<Parameter>(std::move(name), std::move(value)));
  owner_.push_back(frontend);
  return *params_.back();
}

std::vector<Parameter*> Encoder::parameters() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> Encoder::parameters() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<Parameter*> Encoder::shared_parameters() {
  std::vector<Parameter*> out;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!owner_[i]) out.push_back(params_[i].get());
  }
  return out;
}

std::vector<Parameter*> Encoder::frontend_parameters(Frontend frontend) {
  std::vector<Parameter*> out;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (owner_[i] == frontend) out.push_back(params_[i].get());
  }
  return out;
}

std::vector<Parameter*> Encoder::path_parameters(Frontend frontend) {
  std::vector<Parameter*> out;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!owner_[i] || owner_[i] == frontend) out.push_back(params_[i].get());
  }
  return out;
}

Parameter& Encoder::parameter(std::string_view name) {
  for (auto& p : params_) {
    if (p->name() == name) return *p;
  }
  throw InvalidArgument("no parameter named '" + std::string(name) + "'");
}

const Parameter& Encoder::parameter(std::string_view name) const {
  return const_cast<Encoder*>(this)->parameter(name);
}

bool Encoder::has_parameter(std::string_view name) const {
  return std::any_of(params_.begin(), params_.end(), [&](const auto& p) { return p->name() == name; });
}

std::size_t Encoder::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value().size();
  return n;
}

std::vector<Tensor> Encoder::snapshot() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p->value());
  return out;
}

void Encoder::restore(const std::vector<Tensor>& values) {
  if (values.size() != params_.size()) throw InvalidArgument("snapshot does not match the parameter set");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (values[i].shape() != params_[i]->value().shape()) {
      throw DimensionError("snapshot shape mismatch for '" + params_[i]->name() + "'");
    }
    params_[i]->value() = values[i];
  }
}

EmbeddedBatch embed_text(Encoder& model, const TokenBatch& batch) {
  const auto& cfg = model.config();
  if (batch.batch == 0 || batch.seq_len == 0 || batch.token_ids.size() != batch.batch * batch.seq_len ||
      batch.lengths.size() != batch.batch) {
    throw InvalidArgument("malformed token batch");
  }
  if (batch.seq_len > cfg.max_seq_len) {
    throw LengthError("sequence length " + std::to_string(batch.seq_len) + " exceeds max_seq_len " +
                      std::to_string(cfg.max_seq_len));
  }
  std::vector<std::size_t> ids(batch.token_ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (batch.token_ids[i] >= cfg.vocab_size) {
      throw VocabularyError("token id " + std::to_string(batch.token_ids[i]) + " outside vocabulary of " +
                            std::to_string(cfg.vocab_size));
    }
    ids[i] = batch.token_ids[i];
  }
  for (std::size_t b = 0; b < batch.batch; ++b) {
    if (batch.token_ids[b * batch.seq_len] != kClsToken) {
      throw InvalidArgument("token batch row " + std::to_string(b) + " does not start with CLS");
    }
  }
  auto tokens = ag::gather_rows(ag::param(model.parameter("text.token_embedding")), std::move(ids));
  auto positions = ag::gather_rows(ag::param(model.parameter("text.position_embedding")),
                                   repeated_positions(batch.batch, batch.seq_len));
  return {ag::add(tokens, positions), batch.batch, batch.seq_len, batch.lengths};
}

Tensor extract_patches(const EncoderConfig& cfg, const Tensor& pixels) {
  const std::size_t ph = cfg.patch_height(), pw = cfg.patch_width();
  if (pixels.rank() != 4 || pixels.dim(1) != 3) {
    throw PatchingError("image batch must be B x 3 x H x W, got " + shape_string(pixels.shape()));
  }
  const std::size_t B = pixels.dim(0), H = pixels.dim(2), W = pixels.dim(3);
  if (H != cfg.image_height || W != cfg.image_width) {
    throw PatchingError("image of " + std::to_string(H) + "x" + std::to_string(W) + " does not match the " +
                        std::to_string(cfg.image_height) + "x" + std::to_string(cfg.image_width) +
                        " configured layout");
  }
  const std::size_t gr = cfg.patch_grid.rows, gc = cfg.patch_grid.cols;
  const std::size_t P = gr * gc, dim = 3 * ph * pw;
  Tensor out({B * P, dim});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t r = 0; r < gr; ++r) {
      for (std::size_t c = 0; c < gc; ++c) {
        double* dst = out.data() + (b * P + r * gc + c) * dim;
        for (std::size_t ch = 0; ch < 3; ++ch) {
          for (std::size_t y = 0; y < ph; ++y) {
            const double* src = pixels.data() + ((b * 3 + ch) * H + r * ph + y) * W + c * pw;
            std::copy_n(src, pw, dst);
            dst += pw;
          }
        }
      }
    }
  }
  return out;
}

Tensor extract_audio_blocks(const EncoderConfig& cfg, const Tensor& frames) {
  if (frames.rank() != 3) throw PatchingError("spectrogram batch must be B x T x F, got " + shape_string(frames.shape()));
  const std::size_t B = frames.dim(0), T = frames.dim(1), F = frames.dim(2);
  if (T != cfg.spectrogram_frames || F != cfg.spectrogram_bins) {
    throw PatchingError("spectrogram of " + std::to_string(T) + "x" + std::to_string(F) + " does not match the " +
                        std::to_string(cfg.spectrogram_frames) + "x" + std::to_string(cfg.spectrogram_bins) +
                        " configured layout");
  }
  const std::size_t bt = cfg.audio_block.frames, bf = cfg.audio_block.bins;
  const std::size_t nt = cfg.audio_time_blocks(), nf = cfg.audio_freq_blocks();
  if (nt == 0 || nf == 0) throw PatchingError("audio block larger than the spectrogram");
  const std::size_t S = nt * nf, dim = bt * bf;
  Tensor out({B * S, dim});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t ti = 0; ti < nt; ++ti) {
      for (std::size_t fi = 0; fi < nf; ++fi) {
        double* dst = out.data() + (b * S + ti * nf + fi) * dim;
        for (std::size_t t = 0; t < bt; ++t) {
          const double* src = frames.data() + (b * T + ti * bt + t) * F + fi * bf;
          std::copy_n(src, bf, dst);
          dst += bf;
        }
      }
    }
  }
  return out;
}

namespace {

EmbeddedBatch assemble_with_cls(Encoder& model, const ag::Var& projected, std::size_t batch, std::size_t count,
                                std::string_view prefix) {
  const std::string p(prefix);
  auto stacked = ag::concat_rows(ag::param(model.parameter(p + ".cls")), projected);
  auto sequence = ag::gather_rows(stacked, cls_interleave(batch, count));
  auto positions =
      ag::gather_rows(ag::param(model.parameter(p + ".position_embedding")), repeated_positions(batch, count + 1));
  return {ag::add(sequence, positions), batch, count + 1, std::vector<std::size_t>(batch, count + 1)};
}

}  // namespace

ag::Var image_patch_projection(Encoder& model, const PatchBatch& batch) {
  Tensor patches = extract_patches(model.config(), batch.pixels);
  return ag::add_bias(ag::matmul(ag::constant(std::move(patches)), ag::param(model.parameter("image.patch_projection.weight"))),
                      ag::param(model.parameter("image.patch_projection.bias")));
}

EmbeddedBatch embed_image(Encoder& model, const PatchBatch& batch) {
  auto projected = image_patch_projection(model, batch);
  return assemble_with_cls(model, projected, batch.pixels.dim(0), model.config().image_patch_count(), "image");
}

ag::Var audio_block_projection(Encoder& model, const SpectrogramBatch& batch) {
  Tensor blocks = extract_audio_blocks(model.config(), batch.frames);
  return ag::add_bias(ag::matmul(ag::constant(std::move(blocks)), ag::param(model.parameter("audio.block_projection.weight"))),
                      ag::param(model.parameter("audio.block_projection.bias")));
}

EmbeddedBatch embed_audio(Encoder& model, const SpectrogramBatch& batch) {
  auto projected = audio_block_projection(model, batch);
  return assemble_with_cls(model, projected, batch.frames.dim(0), model.config().audio_block_count(), "audio");
}

Representation encode(Encoder& model, const EmbeddedBatch& features, std::optional<Seed> dropout_seed) {
  const auto& cfg = model.config();
  if (features.seq_len > cfg.max_seq_len) {
    throw LengthError("sequence length " + std::to_string(features.seq_len) + " exceeds max_seq_len " +
                      std::to_string(cfg.max_seq_len));
  }
  if (features.features.value().rank() != 2 || features.features.rows() != features.batch * features.seq_len ||
      features.features.cols() != cfg.hidden_dim) {
    throw DimensionError("embedded batch " + shape_string(features.features.value().shape()) +
                         " does not match batch " + std::to_string(features.batch) + " x seq " +
                         std::to_string(features.seq_len) + " x h " + std::to_string(cfg.hidden_dim));
  }
  const bool train = dropout_seed.has_value() && cfg.dropout_rate > 0.0;
  auto drop = [&](const ag::Var& x, Seed site) {
    if (!train) return x;
    return ag::dropout(x, dropout_mask(x.value().shape(), cfg.dropout_rate, site));
  };
  auto P = [&](const std::string& name) { return ag::param(model.parameter(name)); };
  const double eps = cfg.layer_norm_eps;
  const Seed root = dropout_seed.value_or(Seed{});

  ag::AttentionLayout layout{features.batch, features.seq_len, cfg.num_heads, features.lengths};
  const auto cls_index = cls_rows(features.batch, features.seq_len);

  ag::Var x = drop(features.features, root.child("embedding"));
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    const Seed site = root.child("layer", l);
    const bool last = l + 1 == cfg.num_layers;
    auto a = ag::layer_norm(x, P(layer_name(l, "ln1.gain")), P(layer_name(l, "ln1.bias")), eps);
    auto qkv = ag::add_bias(ag::matmul(a, P(layer_name(l, "attn.qkv.weight"))), P(layer_name(l, "attn.qkv.bias")));
    std::optional<Tensor> prob_mask;
    if (train) {
      prob_mask = dropout_mask({features.batch * cfg.num_heads * features.seq_len, features.seq_len},
                               cfg.dropout_rate, site.child("attention_probs"));
    }
    auto attended = ag::self_attention(qkv, layout, prob_mask);
    if (last) {
      // Only the CLS rows feed the output; the rest of the last layer is
      // row-wise, so narrow here.
      attended = ag::gather_rows(attended, cls_index);
      x = ag::gather_rows(x, cls_index);
    }
    auto o = ag::add_bias(ag::matmul(attended, P(layer_name(l, "attn.out.weight"))), P(layer_name(l, "attn.out.bias")));
    x = ag::add(x, drop(o, site.child("attention_out")));
    auto f = ag::layer_norm(x, P(layer_name(l, "ln2.gain")), P(layer_name(l, "ln2.bias")), eps);
    f = ag::gelu(ag::add_bias(ag::matmul(f, P(layer_name(l, "ff.in.weight"))), P(layer_name(l, "ff.in.bias"))));
    f = ag::add_bias(ag::matmul(f, P(layer_name(l, "ff.out.weight"))), P(layer_name(l, "ff.out.bias")));
    x = ag::add(x, drop(f, site.child("feed_forward")));
  }
  return {ag::layer_norm(x, P("final_ln.gain"), P("final_ln.bias"), eps)};
}

std::pair<Representation, Representation> encode_twice(Encoder& model, const EmbeddedBatch& features, Seed seed_a,
                                                        Seed seed_b) {
  if (seed_a == seed_b) throw InvalidArgument("encode_twice needs two distinct dropout seeds");
  return {encode(model, features, seed_a), encode(model, features, seed_b)};
}

Tensor embed_sentences(Encoder& model, std::span<const Sentence> sentences, std::size_t chunk) {
  if (sentences.empty()) throw InvalidArgument("no sentences to embed");
  ag::NoGradGuard no_grad;
  const std::size_t h = model.config().hidden_dim;
  Tensor out({sentences.size(), h});
  for (std::size_t start = 0; start < sentences.size(); start += chunk) {
    const std::size_t n = std::min(chunk, sentences.size() - start);
    auto batch = TokenBatch::from_sentences(sentences.subspan(start, n));
    auto rep = encode(model, embed_text(model, batch), std::nullopt);
    std::copy_n(rep.value().data(), n * h, out.data() + start * h);
  }
  return out;
}

}  // namespace mmcse
