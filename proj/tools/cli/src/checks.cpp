#include "mmcse_cli/checks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "mmcse/checkpoint.hpp"
#include "mmcse/error.hpp"
#include "mmcse/grad_check.hpp"
#include "mmcse/losses.hpp"
#include "mmcse/metrics.hpp"
#include "mmcse/training.hpp"
#include "mmcse_reference/reference.hpp"

namespace mmcse::cli {

namespace {

constexpr double kTauText = 0.05;
constexpr double kTauModal = 0.07;

Tensor random_matrix(Rng& rng, std::size_t n, std::size_t h) {
  Tensor t({n, h});
  for (auto& v : t.values()) v = rng.normal();
  return t;
}

Representation rep(const Tensor& t) { return {ag::constant(t)}; }

std::vector<int> random_labels(Rng& rng, std::size_t n) {
  const std::size_t classes = std::max<std::size_t>(2, n / 2);
  std::vector<int> labels(n);
  do {
    for (auto& l : labels) l = static_cast<int>(rng.below(classes));
  } while (std::all_of(labels.begin(), labels.end(), [&](int l) { return l == labels.front(); }));
  return labels;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double sum_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

std::string sci(double v) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << v;
  return os.str();
}

CheckResult timed(std::string name, const std::function<void(CheckResult&)>& body) {
  CheckResult r;
  r.name = std::move(name);
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(r);
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

// Small enough that a finite-difference sweep over every parameter is quick.
EncoderConfig tiny_encoder() {
  EncoderConfig c;
  c.num_layers = 1;
  c.num_heads = 2;
  c.hidden_dim = 8;
  c.ff_dim = 16;
  c.dropout_rate = 0.1;
  c.max_seq_len = 8;
  c.vocab_size = 20;
  c.image_height = 4;
  c.image_width = 4;
  c.patch_grid = {2, 2};
  c.spectrogram_frames = 8;
  c.spectrogram_bins = 4;
  c.audio_block = {4, 4};
  return c;
}

std::vector<Sentence> tiny_sentences(Rng& rng, std::size_t n, std::size_t vocab) {
  std::vector<Sentence> out(n);
  for (auto& s : out) {
    s.resize(2 + rng.below(5));
    for (auto& t : s) t = static_cast<Token>(kFirstWordToken + rng.below(vocab - kFirstWordToken));
  }
  return out;
}

}  // namespace

CheckResult check_gradients(const CheckOptions& options) {
  return timed("gradients", [&](CheckResult& r) {
    GradCheckOptions gc;
    gc.analytic_perturbation = options.gradient_perturbation;
    Rng rng(Seed(options.seed).child("selftest_gradients"));
    double worst = 0.0;
    std::vector<std::string> failed;
    std::size_t checks = 0;
    auto run = [&](const std::string& name, const LossFunction& fn, std::vector<Parameter*> params) {
      const auto report = grad_check(fn, params, gc);
      worst = std::max(worst, report.max_relative_error);
      ++checks;
      if (!report.passed) failed.push_back(name);
    };

    // Leaf representations: batch sizes 2..8, widths up to 16.
    for (std::size_t n : {2u, 5u, 8u}) {
      const std::size_t h = n == 8 ? 16 : 6;
      Parameter a("views_a", random_matrix(rng, n, h));
      Parameter b("views_b", random_matrix(rng, n, h));
      Parameter neg("negatives", random_matrix(rng, n, h));
      std::vector<int> labels(n);
      for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % 3);
      if (n == 2) labels = {0, 1};
      run("text_unsup", [&] { return text_unsup_loss({ag::param(a)}, {ag::param(b)}, kTauText).total; }, {&a, &b});
      run("text_sup",
          [&] { return text_sup_loss({ag::param(a)}, {ag::param(b)}, {ag::param(neg)}, kTauText).total; },
          {&a, &b, &neg});
      run("modal_supcon",
          [&] { return modal_supcon_loss({ag::param(a)}, {ag::param(b)}, labels, kTauModal).total; }, {&a, &b});
      run("modal_simclr", [&] { return modal_simclr_loss({ag::param(a)}, {ag::param(b)}, kTauModal).total; },
          {&a, &b});
      run("text_unsup_mean",
          [&] { return text_unsup_loss({ag::param(a)}, {ag::param(b)}, kTauText, Reduction::Mean).total; }, {&a, &b});
    }

    // End to end through each encoder path with dropout active.
    Encoder model(tiny_encoder(), Seed(options.seed).child("selftest_encoder"));
    TrainConfig tc;
    const auto sentences = tiny_sentences(rng, 4, model.config().vocab_size);
    std::vector<TripletRecord> triplets;
    const auto more = tiny_sentences(rng, 8, model.config().vocab_size);
    for (std::size_t i = 0; i < 4; ++i) triplets.push_back({sentences[i], more[i], more[4 + i]});
    ImageSetSpec is;
    is.num_classes = 3;
    is.per_class = 2;
    is.height = is.width = 4;
    SyntheticImageSource images(is);
    std::vector<LabeledImage> image_batch{images.at(0), images.at(1), images.at(2), images.at(4)};
    AudioSetSpec as;
    as.num_classes = 3;
    as.per_class = 2;
    as.frames = 8;
    as.bins = 4;
    SyntheticAudioSource clips(as);
    std::vector<LabeledClip> clip_batch{clips.at(0), clips.at(2), clips.at(3), clips.at(5)};
    const Seed step(options.seed);

    run("encoder_text_unsup", [&] { return text_batch_loss(model, sentences, tc, step).total; },
        model.path_parameters(Frontend::Text));
    run("encoder_text_sup", [&] { return triplet_batch_loss(model, triplets, tc, step).total; },
        model.path_parameters(Frontend::Text));
    for (auto variant : {ModalLossVariant::SupCon, ModalLossVariant::SimCLR}) {
      TrainConfig mc = tc;
      mc.loss.modal_variant = variant;
      const std::string v(modal_loss_name(variant));
      run("encoder_image_" + v, [&] { return image_batch_loss(model, image_batch, mc, AugmentConfig{}, step).total; },
          model.path_parameters(Frontend::Image));
      run("encoder_audio_" + v, [&] { return audio_batch_loss(model, clip_batch, mc, step).total; },
          model.path_parameters(Frontend::Audio));
    }

    r.passed = failed.empty();
    r.detail = std::to_string(checks) + " checks, max relative error " + sci(worst) + " (tolerance 1e-4)";
    if (!failed.empty()) {
      r.detail += "; failed:";
      for (const auto& f : failed) r.detail += " " + f;
    }
  });
}

CheckResult check_loss_oracles(const CheckOptions& options) {
  return timed("loss oracles", [&](CheckResult& r) {
    Rng rng(Seed(options.seed).child("selftest_loss_oracles"));
    double worst = 0.0;
    for (std::size_t inst = 0; inst < options.instances; ++inst) {
      const std::size_t n = 2 + rng.below(7);
      const std::size_t h = 2 + rng.below(15);
      const Tensor a = random_matrix(rng, n, h), b = random_matrix(rng, n, h), c = random_matrix(rng, n, h);
      const auto labels = random_labels(rng, n);
      auto compare = [&](const LossValue& lib, const std::vector<double>& ref) {
        worst = std::max(worst, max_abs_diff(lib.per_anchor, ref));
        worst = std::max(worst, std::abs(lib.value() - sum_of(ref)));
      };
      compare(text_unsup_loss(rep(a), rep(b), kTauText), reference::text_unsup(a, b, kTauText));
      compare(text_sup_loss(rep(a), rep(b), rep(c), kTauText), reference::text_sup(a, b, c, kTauText));
      compare(modal_supcon_loss(rep(a), rep(b), labels, kTauModal), reference::modal_supcon(a, b, labels, kTauModal));
      compare(modal_simclr_loss(rep(a), rep(b), kTauModal), reference::modal_simclr(a, b, kTauModal));
    }
    r.passed = worst <= 1e-10;
    r.detail = std::to_string(options.instances) + " instances x 4 losses, max abs diff " + sci(worst) +
               " (tolerance 1e-10)";
  });
}

CheckResult check_metric_oracles(const CheckOptions& options) {
  return timed("metric oracles", [&](CheckResult& r) {
    Rng rng(Seed(options.seed).child("selftest_metric_oracles"));
    double worst = 0.0;
    std::size_t topk_mismatch = 0;
    for (std::size_t inst = 0; inst < options.instances; ++inst) {
      // Spearman, with ties on about half the instances.
      const std::size_t n = 2 + rng.below(49);
      std::vector<double> x(n), y(n);
      const bool ties = rng.bernoulli(0.5);
      do {
        for (std::size_t i = 0; i < n; ++i) {
          x[i] = ties ? std::round(rng.uniform(0.0, 4.0)) : rng.normal();
          y[i] = ties ? std::round(rng.uniform(0.0, 5.0)) : rng.normal();
        }
      } while (std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; }) ||
               std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; }));
      worst = std::max(worst, std::abs(spearman(x, y) - reference::spearman(x, y)));

      const std::size_t m = 2 + rng.below(30), h = 2 + rng.below(15);
      const Tensor a = random_matrix(rng, m, h), b = random_matrix(rng, m, h);
      worst = std::max(worst, std::abs(alignment(a, b) - reference::alignment(a, b)));
      const auto u = uniformity(a);
      const double ref_raw = reference::uniformity_raw(a);
      worst = std::max(worst, std::abs(u.raw - ref_raw));
      worst = std::max(worst, std::abs(u.log - std::log(ref_raw)));

      // Retrieval with some duplicated rows so that ties occur.
      Tensor corpus = random_matrix(rng, m, h);
      for (std::size_t d = 0; d < m / 4; ++d) {
        const std::size_t src = rng.below(m), dst = rng.below(m);
        std::copy_n(corpus.row(src).data(), h, corpus.row(dst).data());
      }
      std::vector<double> query(h);
      if (rng.bernoulli(0.5)) {
        std::copy_n(corpus.row(rng.below(m)).data(), h, query.data());
      } else {
        for (auto& q : query) q = rng.normal();
      }
      const std::size_t k = 1 + rng.below(m);
      const auto hits = retrieve_topk(query, corpus, k);
      const auto ref = reference::topk(query, corpus, k);
      for (std::size_t i = 0; i < k; ++i) {
        if (hits[i].index != ref[i]) ++topk_mismatch;
      }
    }
    r.passed = worst <= 1e-10 && topk_mismatch == 0;
    r.detail = std::to_string(options.instances) + " instances each, max abs diff " + sci(worst) +
               ", top-k mismatches " + std::to_string(topk_mismatch);
  });
}

CheckResult check_bridge_identity(const CheckOptions& options) {
  return timed("supcon/simclr bridge", [&](CheckResult& r) {
    Rng rng(Seed(options.seed).child("selftest_bridge"));
    double worst = 0.0;
    for (std::size_t inst = 0; inst < options.instances; ++inst) {
      const std::size_t n = 2 + rng.below(15);
      const std::size_t h = 2 + rng.below(31);
      const Tensor a = random_matrix(rng, n, h), b = random_matrix(rng, n, h);
      std::vector<int> labels(n);
      std::iota(labels.begin(), labels.end(), 0);
      rng.shuffle(std::span<int>(labels));
      const auto sup = modal_supcon_loss(rep(a), rep(b), labels, kTauModal);
      const auto clr = modal_simclr_loss(rep(a), rep(b), kTauModal);
      for (std::size_t i = 0; i < n; ++i) {
        worst = std::max(worst, std::abs(clr.per_anchor[i] - std::log1p(std::exp(sup.per_anchor[i]))));
      }
    }
    r.passed = worst <= 1e-9;
    r.detail = std::to_string(options.instances) + " batches, max deviation " + sci(worst) + " (tolerance 1e-9)";
  });
}

CheckResult check_analytic_values(const CheckOptions& options) {
  return timed("analytic loss values", [&](CheckResult& r) {
    Rng rng(Seed(options.seed).child("selftest_analytic"));
    std::vector<std::string> failures;

    // One anchor: numerator and denominator hold the same single term.
    for (std::size_t h : {1u, 3u, 16u}) {
      const Tensor a = random_matrix(rng, 1, h), b = random_matrix(rng, 1, h);
      if (modal_simclr_loss(rep(a), rep(b), kTauModal).value() != 0.0) failures.push_back("single-anchor simclr");
      if (text_unsup_loss(rep(a), rep(b), kTauText).value() != 0.0) failures.push_back("single-anchor text");
    }

    // Identical rows: every term is ln N.
    double identical_dev = 0.0;
    for (std::size_t n : {2u, 4u, 8u, 48u}) {
      const Tensor row = random_matrix(rng, 1, 8);
      Tensor same({n, 8});
      for (std::size_t i = 0; i < n; ++i) std::copy_n(row.data(), 8, same.row(i).data());
      const double expected = static_cast<double>(n) * std::log(static_cast<double>(n));
      identical_dev = std::max(identical_dev, std::abs(text_unsup_loss(rep(same), rep(same), kTauText).value() - expected));
      identical_dev = std::max(identical_dev, std::abs(modal_simclr_loss(rep(same), rep(same), kTauModal).value() - expected));
    }
    if (identical_dev > 1e-9) failures.push_back("identical rows (" + sci(identical_dev) + ")");

    // Positive per-row rescaling and batch permutation.
    double scale_dev = 0.0, perm_dev = 0.0;
    for (std::size_t inst = 0; inst < options.instances; ++inst) {
      const std::size_t n = 2 + rng.below(7), h = 2 + rng.below(15);
      const Tensor a = random_matrix(rng, n, h), b = random_matrix(rng, n, h), c = random_matrix(rng, n, h);
      const auto labels = random_labels(rng, n);
      auto all_losses = [&](const Tensor& x, const Tensor& y, const Tensor& z, const std::vector<int>& l) {
        return std::vector<double>{text_unsup_loss(rep(x), rep(y), kTauText).value(),
                                   text_sup_loss(rep(x), rep(y), rep(z), kTauText).value(),
                                   modal_supcon_loss(rep(x), rep(y), l, kTauModal).value(),
                                   modal_simclr_loss(rep(x), rep(y), kTauModal).value()};
      };
      const auto base = all_losses(a, b, c, labels);

      auto rescale = [&](const Tensor& t) {
        Tensor out = t;
        for (std::size_t i = 0; i < n; ++i) {
          const double f = std::exp(rng.uniform(std::log(0.1), std::log(10.0)));
          for (auto& v : out.row(i)) v *= f;
        }
        return out;
      };
      scale_dev = std::max(scale_dev, max_abs_diff(base, all_losses(rescale(a), rescale(b), rescale(c), labels)));

      std::vector<std::size_t> perm(n);
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      rng.shuffle(std::span<std::size_t>(perm));
      auto permute = [&](const Tensor& t) {
        Tensor out({n, h});
        for (std::size_t i = 0; i < n; ++i) std::copy_n(t.row(perm[i]).data(), h, out.row(i).data());
        return out;
      };
      std::vector<int> plabels(n);
      for (std::size_t i = 0; i < n; ++i) plabels[i] = labels[perm[i]];
      perm_dev = std::max(perm_dev, max_abs_diff(base, all_losses(permute(a), permute(b), permute(c), plabels)));
    }
    if (scale_dev > 1e-10) failures.push_back("rescaling (" + sci(scale_dev) + ")");
    if (perm_dev > 1e-12) failures.push_back("permutation (" + sci(perm_dev) + ")");

    r.passed = failures.empty();
    r.detail = "single-anchor loss exactly 0, identical-row dev " + sci(identical_dev) + ", rescale dev " + sci(scale_dev) + ", permutation dev " +
               sci(perm_dev);
    for (const auto& f : failures) r.detail += "; failed: " + f;
  });
}

CheckResult check_shape_contracts(const CheckOptions&) {
  return timed("shape contracts", [&](CheckResult& r) {
    const EncoderConfig full = EncoderConfig::full_scale();
    full.validate();
    std::vector<std::string> failures;
    if (full.image_sequence_length() != 197) failures.push_back("image length " + std::to_string(full.image_sequence_length()));
    if (full.audio_sequence_length() != 211) failures.push_back("audio length " + std::to_string(full.audio_sequence_length()));
    if (full.patch_dim() != 768) failures.push_back("patch dim " + std::to_string(full.patch_dim()));

    // Front-end tokenization of one full-size input; no weights are built.
    const Tensor image({1, 3, full.image_height, full.image_width});
    const Tensor patches = extract_patches(full, image);
    if (patches.rows() + 1 != 197) failures.push_back("patch rows " + std::to_string(patches.rows()));
    const Tensor spectrogram({1, full.spectrogram_frames, full.spectrogram_bins});
    const Tensor blocks = extract_audio_blocks(full, spectrogram);
    if (blocks.rows() + 1 != 211) failures.push_back("block rows " + std::to_string(blocks.rows()));

    r.passed = failures.empty();
    r.detail = "image " + std::to_string(full.image_sequence_length()) + " x " + std::to_string(full.hidden_dim) +
               ", audio " + std::to_string(full.audio_sequence_length()) + " x " + std::to_string(full.hidden_dim);
    for (const auto& f : failures) r.detail += "; failed: " + f;
  });
}

CheckResult check_determinism(const CheckOptions& options) {
  return timed("determinism", [&](CheckResult& r) {
    SyntheticCorpusSpec cs;
    cs.vocab_size = tiny_encoder().vocab_size;
    cs.num_clusters = 3;
    cs.sentences_per_cluster = 8;
    cs.min_length = 3;
    cs.max_length = 6;
    cs.background_tokens = 4;
    const auto corpus = gen_text(cs);
    std::vector<Sentence> sentences;
    for (const auto& s : corpus) sentences.push_back(s.tokens);
    const auto dev = gen_sts_pairs(cs, 20, Seed(options.seed).child("dev"));
    ImageSetSpec is;
    is.num_classes = 3;
    is.per_class = 4;
    is.height = is.width = 4;
    const auto images = gen_images(is);

    TrainConfig tc;
    tc.max_steps = 4;
    tc.text_batch_size = 6;
    tc.modal_batch_size = 5;
    tc.validation_interval = 2;
    tc.modality = Modality::Image;
    tc.seed = options.seed;
    TrainingData data;
    data.sentences = sentences;
    data.images = images;
    data.dev = &dev;

    auto run = [&] {
      Encoder model(tiny_encoder(), Seed(tc.seed).child("init"));
      auto result = train(model, data, tc);
      std::ostringstream ckpt;
      write_checkpoint(ckpt, model);
      return std::make_tuple(result.losses, ckpt.str(), eval_sts(model, dev).to_json());
    };
    const auto [l1, c1, j1] = run();
    const auto [l2, c2, j2] = run();
    bool same_losses = l1.size() == l2.size();
    for (std::size_t i = 0; same_losses && i < l1.size(); ++i) {
      same_losses = l1[i].name == l2[i].name && std::bit_cast<std::uint64_t>(l1[i].value) ==
                                                    std::bit_cast<std::uint64_t>(l2[i].value);
    }
    r.passed = same_losses && c1 == c2 && j1 == j2;
    r.detail = std::string("losses ") + (same_losses ? "identical" : "differ") + ", checkpoints " +
               (c1 == c2 ? "identical" : "differ") + ", reports " + (j1 == j2 ? "identical" : "differ");
  });
}

std::vector<CheckResult> run_selftest(const CheckOptions& options) {
  return {check_gradients(options),       check_loss_oracles(options),  check_metric_oracles(options),
          check_bridge_identity(options), check_analytic_values(options), check_shape_contracts(options),
          check_determinism(options)};
}

}  // namespace mmcse::cli
