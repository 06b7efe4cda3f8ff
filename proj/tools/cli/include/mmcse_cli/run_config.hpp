#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mmcse/data.hpp"
#include "mmcse/encoder.hpp"
#include "mmcse/metrics.hpp"
#include "mmcse/training.hpp"

namespace mmcse::cli {

inline constexpr int kConfigVersion = 1;

// Everything a command needs, flattened into documented key=value fields.
struct RunConfig {
  EncoderConfig encoder;
  TrainConfig train;
  SyntheticCorpusSpec corpus;
  ImageSetSpec images;
  AudioSetSpec audio;
  AugmentConfig augment;
  NoiseSpec noise;
  StsEvalOptions eval;

  std::uint64_t data_seed = 42;
  std::size_t dev_pairs = 500;
  std::size_t test_pairs = 500;
  // Fraction of triplets kept for supervised training (1 keeps all).
  double subsample_fraction = 1.0;
  std::string preset;

  // Optional dataset files; empty means generate synthetically.
  std::string text_file;
  std::string triplets_file;
  std::string dev_file;
  std::string test_file;
  std::string images_file;
  std::string audio_file;

  std::string output_dir = "mmcse_out";

  // Ablation grids.
  std::string noise_grid = "0,0,0;0.1,1,1;0.3,2,2;0.5,3,3";
  std::string subsample_grid = "0.1,0.3,1.0";
  std::string loss_variant_grid = "supcon,simclr";
  std::size_t sweep_seeds = 5;     // seeds sweep size
  std::size_t ablation_seeds = 1;  // seeds per grid point for the other sweeps

  std::size_t k = 3;  // retrieval depth
};

struct ConfigKey {
  std::string name;
  std::string doc;
};

// Every accepted key with its one-line description, in file order.
const std::vector<ConfigKey>& config_keys();

// Sets one key from its textual value; ConfigError on an unknown key or a
// malformed value. Hyphens in the key are treated as underscores.
void set_config_value(RunConfig& config, std::string_view key, std::string_view value);
std::string get_config_value(const RunConfig& config, std::string_view key);

// Parses key=value lines; '#' starts a comment. A leading version=N line is
// checked against kConfigVersion.
void apply_config_text(RunConfig& config, std::string_view text);
RunConfig load_config_file(const std::filesystem::path& path);

// Applies MMCSE_SEED and MMCSE_OUTPUT_DIR when set.
void apply_environment(RunConfig& config);

// The effective configuration: version line then every key in order.
std::string config_text(const RunConfig& config);
// 16 hex digits of FNV-1a over config_text(), output_dir excluded.
std::string config_hash(const RunConfig& config);

// Cross-field checks plus validation of each component.
void validate(const RunConfig& config);

struct NoiseLevel {
  NoiseSpec spec;
  std::string label;  // "p,i,s" as written
};

std::vector<NoiseLevel> parse_noise_grid(std::string_view text);
std::vector<double> parse_number_list(std::string_view text);
std::vector<std::string> parse_word_list(std::string_view text);

}  // namespace mmcse::cli
