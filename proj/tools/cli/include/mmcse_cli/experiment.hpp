#pragma once

#include <iosfwd>
#include <optional>
#include <vector>

#include "mmcse/data.hpp"
#include "mmcse/encoder.hpp"
#include "mmcse/metrics.hpp"
#include "mmcse/training.hpp"
#include "mmcse_cli/run_config.hpp"

namespace mmcse::cli {

// Training and evaluation data for one run, generated from the config or
// loaded from the files it names.
struct Datasets {
  std::vector<Sentence> sentences;
  std::vector<TripletRecord> triplets;  // after subsampling and noise
  ScoredPairSet dev;
  ScoredPairSet test;
  std::vector<LabeledImage> images;
  std::vector<LabeledClip> clips;
  std::size_t clamped_deletions = 0;
};

Datasets build_datasets(const RunConfig& config);

struct RunOutcome {
  Encoder model;  // holds the selected (best dev) parameters
  TrainResult result;
  MetricsReport report;  // held-out pairs, selected parameters
};

// Random-init encoder for a config: the same parameters a run starts from.
Encoder initial_model(const RunConfig& config);

// Trains from initial_model(config) and evaluates the selected checkpoint.
RunOutcome run_experiment(const RunConfig& config, const Datasets& data, std::ostream* log = nullptr);

// Keeps freed activation buffers on the heap. Each training step reallocates
// the same few hundred kilobyte tensors, and the default glibc thresholds
// turn every one of them into an mmap/munmap pair. No-op off glibc.
void tune_allocator();

// eval_sts plus run metadata.
MetricsReport evaluate(Encoder& model, const ScoredPairSet& pairs, const RunConfig& config, std::size_t step);

}  // namespace mmcse::cli
