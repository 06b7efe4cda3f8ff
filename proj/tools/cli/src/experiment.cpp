#include "mmcse_cli/experiment.hpp"

#include <cmath>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "mmcse/dataset_io.hpp"
#include "mmcse/error.hpp"

namespace mmcse::cli {

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

Datasets build_datasets(const RunConfig& config) {
  Datasets d;
  const Seed data_seed(config.data_seed);
  const bool need_corpus = config.text_file.empty() || (config.train.supervised_text && config.triplets_file.empty());
  std::vector<LabeledSentence> corpus;
  if (!config.text_file.empty()) {
    corpus = load_text_corpus(config.text_file);
  } else if (need_corpus) {
    corpus = gen_text(config.corpus);
  }
  d.sentences.reserve(corpus.size());
  for (const auto& s : corpus) d.sentences.push_back(s.tokens);

  if (config.train.supervised_text) {
    std::vector<TripletRecord> triplets = config.triplets_file.empty()
                                              ? gen_triplets(corpus, data_seed.child("triplets"))
                                              : load_triplets(config.triplets_file);
    if (config.subsample_fraction < 1.0) {
      const auto n = static_cast<std::size_t>(std::lround(config.subsample_fraction * static_cast<double>(triplets.size())));
      triplets = subsample<TripletRecord>(triplets, std::max<std::size_t>(n, 1), data_seed.child("subsample"));
    }
    if (!config.noise.is_clean()) {
      auto noisy = inject_noise(triplets, config.noise, config.encoder.vocab_size);
      triplets = std::move(noisy.triplets);
      d.clamped_deletions = noisy.clamped_deletions;
    }
    d.triplets = std::move(triplets);
  }

  d.dev = config.dev_file.empty() ? gen_sts_pairs(config.corpus, config.dev_pairs, data_seed.child("dev"))
                                  : load_sts_pairs(config.dev_file);
  d.test = config.test_file.empty() ? gen_sts_pairs(config.corpus, config.test_pairs, data_seed.child("test"))
                                    : load_sts_pairs(config.test_file);

  if (config.train.modality == Modality::Image) {
    d.images = config.images_file.empty() ? gen_images(config.images) : load_images(config.images_file);
  } else if (config.train.modality == Modality::Audio) {
    d.clips = config.audio_file.empty() ? gen_audio(config.audio) : load_clips(config.audio_file);
  }
  return d;
}

Encoder initial_model(const RunConfig& config) { return Encoder(config.encoder, Seed(config.train.seed).child("init")); }

MetricsReport evaluate(Encoder& model, const ScoredPairSet& pairs, const RunConfig& config, std::size_t step) {
  MetricsReport report = eval_sts(model, pairs, config.eval);
  report.metadata = {config.train.seed, step, config_hash(config)};
  return report;
}

RunOutcome run_experiment(const RunConfig& config, const Datasets& data, std::ostream* log) {
  validate(config);
  Encoder model = initial_model(config);
  TrainingData td;
  td.sentences = data.sentences;
  td.triplets = data.triplets;
  td.images = data.images;
  td.clips = data.clips;
  td.dev = &data.dev;
  td.augment = config.augment;
  TrainResult result = train(model, td, config.train, log);
  model.restore(result.selection.best_checkpoint);
  MetricsReport report = evaluate(model, data.test, config, result.selection.best_step);
  return {std::move(model), std::move(result), std::move(report)};
}

}  // namespace mmcse::cli
