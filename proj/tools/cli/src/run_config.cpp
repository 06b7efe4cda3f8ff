#include "mmcse_cli/run_config.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "mmcse/error.hpp"

namespace mmcse::cli {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> parse_word_list_sep(std::string_view text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto pos = text.find(sep, start);
    if (pos == std::string_view::npos) pos = text.size();
    std::string w = trim(text.substr(start, pos - start));
    if (!w.empty()) out.push_back(std::move(w));
    start = pos + 1;
  }
  return out;
}

std::string normalize_key(std::string_view key) {
  std::string k(key);
  for (auto& c : k) {
    if (c == '-') c = '_';
  }
  return k;
}

std::uint64_t parse_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError("'" + std::string(key) + "' expects a nonnegative integer, got '" + std::string(v) + "'");
  }
  return out;
}

double parse_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError("'" + std::string(key) + "' expects a number, got '" + std::string(v) + "'");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("'" + std::string(key) + "' expects true or false, got '" + std::string(v) + "'");
}

// Shortest text that parses back to the same double.
std::string fmt(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string fmt(std::uint64_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

struct Entry {
  ConfigKey key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename Ref>
Entry size_entry(std::string name, std::string doc, Ref ref) {
  return {{name, std::move(doc)},
          [ref, name](RunConfig& c, std::string_view v) { ref(c) = static_cast<std::size_t>(parse_u64(name, v)); },
          [ref](const RunConfig& c) { return fmt(static_cast<std::uint64_t>(ref(const_cast<RunConfig&>(c)))); }};
}

template <typename Ref>
Entry u64_entry(std::string name, std::string doc, Ref ref) {
  return {{name, std::move(doc)}, [ref, name](RunConfig& c, std::string_view v) { ref(c) = parse_u64(name, v); },
          [ref](const RunConfig& c) { return fmt(static_cast<std::uint64_t>(ref(const_cast<RunConfig&>(c)))); }};
}

template <typename Ref>
Entry double_entry(std::string name, std::string doc, Ref ref) {
  return {{name, std::move(doc)}, [ref, name](RunConfig& c, std::string_view v) { ref(c) = parse_double(name, v); },
          [ref](const RunConfig& c) { return fmt(ref(const_cast<RunConfig&>(c))); }};
}

template <typename Ref>
Entry bool_entry(std::string name, std::string doc, Ref ref) {
  return {{name, std::move(doc)}, [ref, name](RunConfig& c, std::string_view v) { ref(c) = parse_bool(name, v); },
          [ref](const RunConfig& c) { return fmt(static_cast<bool>(ref(const_cast<RunConfig&>(c)))); }};
}

template <typename Ref>
Entry string_entry(std::string name, std::string doc, Ref ref) {
  return {{name, std::move(doc)}, [ref](RunConfig& c, std::string_view v) { ref(c) = std::string(v); },
          [ref](const RunConfig& c) { return ref(const_cast<RunConfig&>(c)); }};
}

#define FIELD(expr) [](RunConfig& c) -> auto& { return expr; }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = [] {
    std::vector<Entry> t;
    t.push_back(u64_entry("seed", "training seed: init, dropout, augmentation and batch order", FIELD(c.train.seed)));
    t.push_back(string_entry("output_dir", "directory for checkpoints, logs, reports and tables", FIELD(c.output_dir)));
    t.push_back({{"preset", "full-scale hyperparameter preset name (empty for none)"},
                 [](RunConfig& c, std::string_view v) {
                   if (!v.empty()) apply_preset(c.train, find_preset(v));
                   c.preset = std::string(v);
                 },
                 [](const RunConfig& c) { return c.preset; }});

    t.push_back(size_entry("num_layers", "Transformer layers", FIELD(c.encoder.num_layers)));
    t.push_back(size_entry("num_heads", "attention heads", FIELD(c.encoder.num_heads)));
    t.push_back(size_entry("hidden_dim", "model width h", FIELD(c.encoder.hidden_dim)));
    t.push_back(size_entry("ff_dim", "feed-forward width", FIELD(c.encoder.ff_dim)));
    t.push_back(double_entry("dropout", "dropout rate", FIELD(c.encoder.dropout_rate)));
    t.push_back(size_entry("max_seq_len", "longest text sequence including CLS", FIELD(c.encoder.max_seq_len)));
    t.push_back({{"vocab_size", "token vocabulary size (encoder and synthetic corpus)"},
                 [](RunConfig& c, std::string_view v) {
                   c.encoder.vocab_size = c.corpus.vocab_size = static_cast<std::size_t>(parse_u64("vocab_size", v));
                 },
                 [](const RunConfig& c) { return fmt(static_cast<std::uint64_t>(c.encoder.vocab_size)); }});
    t.push_back({{"image_size", "image height and width in pixels"},
                 [](RunConfig& c, std::string_view v) {
                   const auto s = static_cast<std::size_t>(parse_u64("image_size", v));
                   c.encoder.image_height = c.encoder.image_width = c.images.height = c.images.width = s;
                 },
                 [](const RunConfig& c) { return fmt(static_cast<std::uint64_t>(c.encoder.image_height)); }});
    t.push_back({{"patch_grid", "patches per image side"},
                 [](RunConfig& c, std::string_view v) {
                   c.encoder.patch_grid.rows = c.encoder.patch_grid.cols =
                       static_cast<std::size_t>(parse_u64("patch_grid", v));
                 },
                 [](const RunConfig& c) { return fmt(static_cast<std::uint64_t>(c.encoder.patch_grid.rows)); }});
    t.push_back({{"spectrogram_frames", "spectrogram time frames"},
                 [](RunConfig& c, std::string_view v) {
                   c.encoder.spectrogram_frames = c.audio.frames =
                       static_cast<std::size_t>(parse_u64("spectrogram_frames", v));
                 },
                 [](const RunConfig& c) { return fmt(static_cast<std::uint64_t>(c.encoder.spectrogram_frames)); }});
    t.push_back({{"spectrogram_bins", "spectrogram frequency bins"},
                 [](RunConfig& c, std::string_view v) {
                   c.encoder.spectrogram_bins = c.audio.bins = static_cast<std::size_t>(parse_u64("spectrogram_bins", v));
                 },
                 [](const RunConfig& c) { return fmt(static_cast<std::uint64_t>(c.encoder.spectrogram_bins)); }});
    t.push_back(size_entry("audio_block_frames", "frames per spectrogram block", FIELD(c.encoder.audio_block.frames)));
    t.push_back(size_entry("audio_block_bins", "bins per spectrogram block", FIELD(c.encoder.audio_block.bins)));

    t.push_back(size_entry("max_steps", "training iterations", FIELD(c.train.max_steps)));
    t.push_back(size_entry("text_batch_size", "text batch size", FIELD(c.train.text_batch_size)));
    t.push_back(size_entry("modal_batch_size", "image/audio batch size", FIELD(c.train.modal_batch_size)));
    t.push_back(double_entry("text_lr", "text optimizer learning rate", FIELD(c.train.text_lr)));
    t.push_back(double_entry("modal_lr", "image/audio optimizer learning rate", FIELD(c.train.modal_lr)));
    t.push_back(size_entry("validation_interval", "steps between dev evaluations", FIELD(c.train.validation_interval)));
    t.push_back(bool_entry("supervised_text", "train text on triplets instead of dropout views",
                           FIELD(c.train.supervised_text)));
    t.push_back({{"modality", "second task: none, image or audio"},
                 [](RunConfig& c, std::string_view v) { c.train.modality = parse_modality(v); },
                 [](const RunConfig& c) { return std::string(modality_name(c.train.modality)); }});
    t.push_back({{"update_mode", "alternating (two optimizers) or summed (one joint step)"},
                 [](RunConfig& c, std::string_view v) { c.train.update_mode = parse_update_mode(v); },
                 [](const RunConfig& c) { return std::string(update_mode_name(c.train.update_mode)); }});
    t.push_back(double_entry("weight_decay", "decoupled weight decay", FIELD(c.train.weight_decay)));
    t.push_back(double_entry("beta1", "first-moment decay", FIELD(c.train.beta1)));
    t.push_back(double_entry("beta2", "second-moment decay", FIELD(c.train.beta2)));
    t.push_back(double_entry("adam_eps", "optimizer epsilon", FIELD(c.train.adam_eps)));
    t.push_back(double_entry("grad_clip", "global gradient-norm clip, 0 to disable", FIELD(c.train.grad_clip)));
    t.push_back(bool_entry("deterministic", "single-threaded reductions", FIELD(c.train.deterministic)));

    t.push_back(double_entry("tau_text", "text temperature", FIELD(c.train.loss.tau_text)));
    t.push_back(double_entry("tau_modal", "image/audio temperature", FIELD(c.train.loss.tau_modal)));
    t.push_back({{"modal_loss", "supcon or simclr"},
                 [](RunConfig& c, std::string_view v) {
                   if (v == "supcon") {
                     c.train.loss.modal_variant = ModalLossVariant::SupCon;
                   } else if (v == "simclr") {
                     c.train.loss.modal_variant = ModalLossVariant::SimCLR;
                   } else {
                     throw ConfigError("modal_loss must be supcon or simclr, got '" + std::string(v) + "'");
                   }
                 },
                 [](const RunConfig& c) { return std::string(modal_loss_name(c.train.loss.modal_variant)); }});
    t.push_back(double_entry("omega", "weight of the image/audio loss", FIELD(c.train.loss.omega_modal)));
    t.push_back({{"reduction", "sum or mean over anchors"},
                 [](RunConfig& c, std::string_view v) {
                   if (v == "sum") {
                     c.train.loss.reduction = Reduction::Sum;
                   } else if (v == "mean") {
                     c.train.loss.reduction = Reduction::Mean;
                   } else {
                     throw ConfigError("reduction must be sum or mean, got '" + std::string(v) + "'");
                   }
                 },
                 [](const RunConfig& c) { return std::string(c.train.loss.reduction == Reduction::Sum ? "sum" : "mean"); }});

    t.push_back({{"data_seed", "seed for every synthetic dataset"},
                 [](RunConfig& c, std::string_view v) {
                   c.data_seed = c.corpus.seed = c.images.seed = c.audio.seed = parse_u64("data_seed", v);
                 },
                 [](const RunConfig& c) { return fmt(c.data_seed); }});
    t.push_back(size_entry("num_clusters", "text clusters", FIELD(c.corpus.num_clusters)));
    t.push_back(size_entry("sentences_per_cluster", "sentences per cluster", FIELD(c.corpus.sentences_per_cluster)));
    t.push_back(size_entry("min_length", "shortest sentence", FIELD(c.corpus.min_length)));
    t.push_back(size_entry("max_length", "longest sentence", FIELD(c.corpus.max_length)));
    t.push_back(double_entry("signal_strength", "share of cluster tokens per sentence", FIELD(c.corpus.signal_strength)));
    t.push_back(size_entry("background_tokens", "size of the shared background vocabulary",
                           FIELD(c.corpus.background_tokens)));
    t.push_back(size_entry("dev_pairs", "validation similarity pairs", FIELD(c.dev_pairs)));
    t.push_back(size_entry("test_pairs", "held-out similarity pairs", FIELD(c.test_pairs)));
    t.push_back(double_entry("positive_threshold", "gold score at which a pair counts as positive",
                             FIELD(c.eval.positive_threshold)));
    t.push_back(size_entry("image_classes", "image classes", FIELD(c.images.num_classes)));
    t.push_back(size_entry("images_per_class", "images per class", FIELD(c.images.per_class)));
    t.push_back(double_entry("image_noise", "per-pixel noise amplitude", FIELD(c.images.noise)));
    t.push_back(size_entry("audio_classes", "audio classes", FIELD(c.audio.num_classes)));
    t.push_back(size_entry("clips_per_class", "clips per class", FIELD(c.audio.per_class)));
    t.push_back(double_entry("audio_noise", "per-bin noise amplitude", FIELD(c.audio.noise)));
    t.push_back(double_entry("crop_min_area", "smallest crop area fraction", FIELD(c.augment.min_crop_area)));
    t.push_back(double_entry("flip_prob", "horizontal flip probability", FIELD(c.augment.flip_prob)));
    t.push_back(double_entry("brightness", "brightness jitter", FIELD(c.augment.brightness)));
    t.push_back(double_entry("contrast", "contrast jitter", FIELD(c.augment.contrast)));
    t.push_back({{"noise", "triplet noise as p_delete,n_insert,n_swap"},
                 [](RunConfig& c, std::string_view v) {
                   auto grid = parse_noise_grid(v);
                   if (grid.size() != 1) throw ConfigError("noise expects a single p,i,s triple");
                   const auto seed = c.noise.seed;
                   c.noise = grid.front().spec;
                   c.noise.seed = seed;
                 },
                 [](const RunConfig& c) {
                   return fmt(c.noise.p_delete) + "," + fmt(static_cast<std::uint64_t>(c.noise.n_insert)) + "," +
                          fmt(static_cast<std::uint64_t>(c.noise.n_swap));
                 }});
    t.push_back(u64_entry("noise_seed", "seed for triplet noise", FIELD(c.noise.seed)));
    t.push_back(double_entry("subsample_fraction", "share of triplets used", FIELD(c.subsample_fraction)));

    t.push_back(string_entry("text_file", "text corpus file (empty: generate)", FIELD(c.text_file)));
    t.push_back(string_entry("triplets_file", "triplet file (empty: generate)", FIELD(c.triplets_file)));
    t.push_back(string_entry("dev_file", "validation pair file (empty: generate)", FIELD(c.dev_file)));
    t.push_back(string_entry("test_file", "held-out pair file (empty: generate)", FIELD(c.test_file)));
    t.push_back(string_entry("images_file", "image file (empty: generate)", FIELD(c.images_file)));
    t.push_back(string_entry("audio_file", "audio file (empty: generate)", FIELD(c.audio_file)));

    t.push_back(string_entry("noise_grid", "noise sweep levels, ';'-separated p,i,s triples", FIELD(c.noise_grid)));
    t.push_back(string_entry("subsample_grid", "subsample sweep fractions", FIELD(c.subsample_grid)));
    t.push_back(string_entry("loss_variant_grid", "loss variant sweep", FIELD(c.loss_variant_grid)));
    t.push_back(size_entry("sweep_seeds", "number of seeds in the seeds sweep", FIELD(c.sweep_seeds)));
    t.push_back(size_entry("ablation_seeds", "seeds per grid point in other sweeps", FIELD(c.ablation_seeds)));
    t.push_back(size_entry("k", "retrieval depth", FIELD(c.k)));
    return t;
  }();
  return table;
}

#undef FIELD

const Entry& find_entry(std::string_view key) {
  const std::string k = normalize_key(key);
  for (const auto& e : entries()) {
    if (e.key.name == k) return e;
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const auto& e : entries()) out.push_back(e.key);
    return out;
  }();
  return keys;
}

void set_config_value(RunConfig& config, std::string_view key, std::string_view value) {
  find_entry(key).set(config, value);
}

std::string get_config_value(const RunConfig& config, std::string_view key) { return find_entry(key).get(config); }

void apply_config_text(RunConfig& config, std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  bool first_field = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value, got '" + stripped + "'");
    }
    const std::string key = trim(std::string_view(stripped).substr(0, eq));
    const std::string value = trim(std::string_view(stripped).substr(eq + 1));
    if (key == "version") {
      if (!first_field) throw ConfigError("config line " + std::to_string(line_no) + ": version must come first");
      if (parse_u64("version", value) != kConfigVersion) {
        throw ConfigError("unsupported config version " + value + " (expected " + std::to_string(kConfigVersion) + ")");
      }
    } else {
      try {
        set_config_value(config, key, value);
      } catch (const ConfigError& e) {
        throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
      } catch (const Error& e) {
        throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
      }
    }
    first_field = false;
  }
}

RunConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  RunConfig config;
  apply_config_text(config, buf.str());
  return config;
}

void apply_environment(RunConfig& config) {
  if (const char* seed = std::getenv("MMCSE_SEED"); seed && *seed) set_config_value(config, "seed", seed);
  if (const char* dir = std::getenv("MMCSE_OUTPUT_DIR"); dir && *dir) config.output_dir = dir;
}

std::string config_text(const RunConfig& config) {
  std::string out = "version=" + std::to_string(kConfigVersion) + "\n";
  for (const auto& e : entries()) {
    // The preset has already been folded into the fields it sets.
    if (e.key.name == "preset") continue;
    out += e.key.name + "=" + e.get(config) + "\n";
  }
  return out;
}

std::string config_hash(const RunConfig& config) {
  // Where results are written does not change them.
  RunConfig keyed = config;
  keyed.output_dir.clear();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(config_text(keyed))));
  return buf;
}

void validate(const RunConfig& config) {
  try {
    config.encoder.validate();
    config.train.validate();
    config.corpus.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (config.corpus.max_length + 1 > config.encoder.max_seq_len) {
    throw ConfigError("max_length + 1 exceeds max_seq_len");
  }
  if (!(config.subsample_fraction > 0.0 && config.subsample_fraction <= 1.0)) {
    throw ConfigError("subsample_fraction must lie in (0, 1]");
  }
  if (!(config.noise.p_delete >= 0.0 && config.noise.p_delete <= 1.0)) throw ConfigError("p_delete must lie in [0, 1]");
  if (config.dev_pairs < 2 || config.test_pairs < 2) throw ConfigError("dev_pairs and test_pairs must be at least 2");
  if (!(config.augment.min_crop_area > 0.0 && config.augment.min_crop_area <= 1.0)) {
    throw ConfigError("crop_min_area must lie in (0, 1]");
  }
  if (config.k == 0) throw ConfigError("k must be at least 1");
}

std::vector<NoiseLevel> parse_noise_grid(std::string_view text) {
  std::vector<NoiseLevel> out;
  for (const auto& level : parse_word_list_sep(text, ';')) {
    const auto parts = parse_word_list_sep(level, ',');
    if (parts.size() != 3) throw ConfigError("noise level '" + level + "' must be p_delete,n_insert,n_swap");
    NoiseLevel n;
    n.spec.p_delete = parse_double("noise", parts[0]);
    n.spec.n_insert = static_cast<std::size_t>(parse_u64("noise", parts[1]));
    n.spec.n_swap = static_cast<std::size_t>(parse_u64("noise", parts[2]));
    if (!(n.spec.p_delete >= 0.0 && n.spec.p_delete <= 1.0)) throw ConfigError("p_delete must lie in [0, 1]");
    n.label = parts[0] + "," + parts[1] + "," + parts[2];
    out.push_back(std::move(n));
  }
  if (out.empty()) throw ConfigError("empty noise grid");
  return out;
}

std::vector<double> parse_number_list(std::string_view text) {
  std::vector<double> out;
  for (const auto& w : parse_word_list(text)) out.push_back(parse_double("list", w));
  return out;
}

std::vector<std::string> parse_word_list(std::string_view text) { return parse_word_list_sep(text, ','); }

}  // namespace mmcse::cli
