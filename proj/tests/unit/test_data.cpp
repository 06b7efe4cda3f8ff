#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "mmcse/data.hpp"
#include "mmcse/dataset_io.hpp"
#include "mmcse/error.hpp"

using namespace mmcse;

namespace {

double pixel_distance(const Tensor& a, const Tensor& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

}  // namespace

TEST(GenText, DefaultSizesAndDeterminism) {
  SyntheticCorpusSpec spec;
  auto corpus = gen_text(spec);
  EXPECT_EQ(corpus.size(), 2000u);
  auto again = gen_text(spec);
  for (std::size_t i = 0; i < corpus.size(); ++i) EXPECT_EQ(corpus[i].tokens, again[i].tokens);
  spec.seed = 43;
  EXPECT_NE(gen_text(spec)[0].tokens, corpus[0].tokens);
}

TEST(GenText, SignalFractionAndVocabularyPartition) {
  SyntheticCorpusSpec spec;
  for (const auto& s : gen_text(spec)) {
    ASSERT_GE(s.tokens.size(), spec.min_length);
    ASSERT_LE(s.tokens.size(), spec.max_length);
    std::size_t signal = 0;
    for (Token t : s.tokens) {
      ASSERT_GE(t, kFirstWordToken);
      ASSERT_LT(t, spec.vocab_size);
      auto c = spec.cluster_of(t);
      if (c) {
        ++signal;
        EXPECT_EQ(*c, static_cast<std::size_t>(s.cluster));
      }
    }
    EXPECT_EQ(signal, spec.signal_count(s.tokens.size()));
  }
}

TEST(GenText, FullSignalAndNoSignal) {
  SyntheticCorpusSpec spec;
  spec.signal_strength = 1.0;
  for (const auto& s : gen_text(spec))
    for (Token t : s.tokens) EXPECT_TRUE(spec.cluster_of(t).has_value());
  spec.signal_strength = 0.0;
  for (const auto& s : gen_text(spec))
    for (Token t : s.tokens) EXPECT_FALSE(spec.cluster_of(t).has_value());
}

TEST(GenText, VocabularyTooSmall) {
  SyntheticCorpusSpec spec;
  // One id short of a single signal token per cluster.
  spec.vocab_size = kFirstWordToken + spec.background_tokens + spec.num_clusters - 1;
  EXPECT_THROW(gen_text(spec), SpecError);
  spec.vocab_size += 1;
  EXPECT_NO_THROW(gen_text(spec));
}

TEST(GenText, CentroidClassifierRecoversClusters) {
  SyntheticCorpusSpec spec;
  auto corpus = gen_text(spec);
  // Fit bag-of-words centroids on even-indexed sentences, classify the odd ones.
  std::vector<std::vector<double>> centroid(spec.num_clusters, std::vector<double>(spec.vocab_size));
  std::vector<double> count(spec.num_clusters);
  auto bow = [&](const Sentence& s) {
    std::vector<double> v(spec.vocab_size);
    for (Token t : s) v[t] += 1.0 / static_cast<double>(s.size());
    return v;
  };
  for (std::size_t i = 0; i < corpus.size(); i += 2) {
    auto v = bow(corpus[i].tokens);
    for (std::size_t j = 0; j < v.size(); ++j) centroid[corpus[i].cluster][j] += v[j];
    count[corpus[i].cluster] += 1;
  }
  for (std::size_t c = 0; c < spec.num_clusters; ++c)
    for (auto& x : centroid[c]) x /= count[c];
  std::size_t correct = 0, total = 0;
  for (std::size_t i = 1; i < corpus.size(); i += 2) {
    auto v = bow(corpus[i].tokens);
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t c = 0; c < spec.num_clusters; ++c) {
      double d = 0;
      for (std::size_t j = 0; j < v.size(); ++j) d += (v[j] - centroid[c][j]) * (v[j] - centroid[c][j]);
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    correct += best == static_cast<std::size_t>(corpus[i].cluster);
    ++total;
  }
  EXPECT_GE(static_cast<double>(correct) / static_cast<double>(total), 0.9);
}

TEST(GenTriplets, ContractHolds) {
  SyntheticCorpusSpec spec;
  auto corpus = gen_text(spec);
  std::map<Sentence, int> cluster;
  for (const auto& s : corpus) cluster[s.tokens] = s.cluster;
  auto triplets = gen_triplets(corpus, Seed(1));
  ASSERT_EQ(triplets.size(), corpus.size());
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    EXPECT_EQ(triplets[i].src, corpus[i].tokens);
    EXPECT_EQ(cluster[triplets[i].pos], corpus[i].cluster);
    EXPECT_NE(cluster[triplets[i].neg], corpus[i].cluster);
  }
  auto again = gen_triplets(corpus, Seed(1));
  for (std::size_t i = 0; i < triplets.size(); ++i) EXPECT_EQ(again[i].neg, triplets[i].neg);
}

TEST(GenTriplets, TwoClustersAndErrors) {
  SyntheticCorpusSpec spec;
  spec.num_clusters = 2;
  spec.sentences_per_cluster = 20;
  auto corpus = gen_text(spec);
  std::map<Sentence, int> cluster;
  for (const auto& s : corpus) cluster[s.tokens] = s.cluster;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    EXPECT_EQ(cluster[gen_triplets(corpus, Seed(2))[i].neg], 1 - corpus[i].cluster);
  }
  std::vector<LabeledSentence> singleton{{{2, 3}, 0}, {{4, 5}, 1}, {{6, 7}, 1}};
  EXPECT_THROW(gen_triplets(singleton, Seed(3)), SamplingError);
  std::vector<LabeledSentence> one_cluster{{{2, 3}, 0}, {{4, 5}, 0}};
  EXPECT_THROW(gen_triplets(one_cluster, Seed(3)), SamplingError);
}

TEST(GenSts, GoldIsScaledSignalJaccard) {
  SyntheticCorpusSpec spec;
  auto pairs = gen_sts_pairs(spec, 300, Seed(4));
  ASSERT_EQ(pairs.size(), 300u);
  double lo = 5, hi = 0;
  for (const auto& p : pairs) {
    std::set<Token> a, b, both, either;
    for (Token t : p.a)
      if (spec.cluster_of(t)) a.insert(t);
    for (Token t : p.b)
      if (spec.cluster_of(t)) b.insert(t);
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::inserter(both, both.end()));
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::inserter(either, either.end()));
    const double expected = either.empty() ? 0.0 : 5.0 * static_cast<double>(both.size()) / static_cast<double>(either.size());
    EXPECT_DOUBLE_EQ(p.gold, expected);
    EXPECT_DOUBLE_EQ(signal_jaccard_score(spec, p.a, p.b), expected);
    lo = std::min(lo, p.gold);
    hi = std::max(hi, p.gold);
  }
  EXPECT_EQ(lo, 0.0);
  EXPECT_GE(hi, 3.75);
}

TEST(GenImages, ClassesSeparateAndNoiseFreeIsConstant) {
  ImageSetSpec spec;
  spec.noise = 0.0;
  auto clean = gen_images(spec);
  for (std::size_t i = 1; i < spec.per_class; ++i) EXPECT_EQ(clean[i].pixels, clean[0].pixels);

  ImageSetSpec noisy;
  auto images = gen_images(noisy);
  ASSERT_EQ(images.size(), 500u);
  EXPECT_EQ(images[0].pixels.shape(), (Shape{3, 16, 16}));
  for (const auto& im : images)
    for (double v : im.pixels.values()) ASSERT_TRUE(v >= 0.0 && v <= 1.0);
  Rng rng(Seed(5));
  double within = 0, cross = 0;
  std::size_t nw = 0, nc = 0;
  while (nw < 100 || nc < 100) {
    const auto i = rng.below(images.size()), j = rng.below(images.size());
    if (i == j) continue;
    const double d = pixel_distance(images[i].pixels, images[j].pixels);
    if (images[i].label == images[j].label) {
      if (nw < 100) within += d, ++nw;
    } else if (nc < 100) {
      cross += d, ++nc;
    }
  }
  EXPECT_LT(within / 100, cross / 100);
}

TEST(GenImages, EveryClassPairSeparates) {
  ImageSetSpec spec;
  spec.per_class = 10;
  auto images = gen_images(spec);
  auto mean_dist = [&](int a, int b) {
    double s = 0;
    std::size_t n = 0;
    for (const auto& x : images)
      for (const auto& y : images)
        if (x.label == a && y.label == b && &x != &y) s += pixel_distance(x.pixels, y.pixels), ++n;
    return s / static_cast<double>(n);
  };
  for (int a = 0; a < 10; ++a)
    for (int b = a + 1; b < 10; ++b) EXPECT_LT(std::max(mean_dist(a, a), mean_dist(b, b)), mean_dist(a, b));
}

TEST(GenImages, FullScaleRequestIsStreamed) {
  ImageSetSpec spec{60, 500, 224, 224, 0.1, 42};
  SyntheticImageSource source(spec);
  EXPECT_EQ(source.size(), 30000u);
  auto last = source.at(source.size() - 1);
  EXPECT_EQ(last.label, 59);
  EXPECT_EQ(last.pixels.shape(), (Shape{3, 224, 224}));
  EXPECT_EQ(source.at(12345).pixels, source.at(12345).pixels);
}

TEST(GenAudio, ClassSeparationAndShape) {
  AudioSetSpec spec;
  auto clips = gen_audio(spec);
  ASSERT_EQ(clips.size(), 300u);
  EXPECT_EQ(clips[0].frames.shape(), (Shape{32, 8}));
  for (const auto& c : clips)
    for (double v : c.frames.values()) ASSERT_GE(v, 0.0);
  double within = 0, cross = 0;
  std::size_t nw = 0, nc = 0;
  for (std::size_t i = 0; i < clips.size(); i += 3)
    for (std::size_t j = i + 1; j < clips.size(); j += 7) {
      const double d = pixel_distance(clips[i].frames, clips[j].frames);
      if (clips[i].label == clips[j].label) within += d, ++nw;
      else cross += d, ++nc;
    }
  EXPECT_LT(within / static_cast<double>(nw), cross / static_cast<double>(nc));
  spec.noise = 0;
  auto clean = gen_audio(spec);
  EXPECT_EQ(clean[0].frames, clean[1].frames);
}

TEST(Augment, IdentityConfigAndDistinctViews) {
  auto images = gen_images(ImageSetSpec{});
  const auto& img = images[3];
  EXPECT_EQ(augment_image(img, Seed(1), AugmentConfig::identity()).pixels, img.pixels);
  auto a = augment_image(img, Seed(1)), b = augment_image(img, Seed(2));
  EXPECT_EQ(a.label, img.label);
  EXPECT_NE(a.pixels, b.pixels);
  EXPECT_EQ(augment_image(img, Seed(1)).pixels, a.pixels);
}

TEST(Augment, ViewsOfOneImageAreCloserThanOtherImages) {
  auto images = gen_images(ImageSetSpec{});
  Rng rng(Seed(3));
  double same = 0, other = 0;
  for (int t = 0; t < 100; ++t) {
    const auto i = rng.below(images.size());
    auto j = rng.below(images.size());
    if (j == i) j = (j + 1) % images.size();
    const Seed s = Seed(t);
    same += pixel_distance(augment_image(images[i], s.child("a")).pixels, augment_image(images[i], s.child("b")).pixels);
    other += pixel_distance(augment_image(images[i], s.child("a")).pixels, augment_image(images[j], s.child("b")).pixels);
  }
  EXPECT_LT(same, other);
}

TEST(Noise, CleanSpecIsIdentity) {
  const Sentence s{2, 3, 4, 5, 6};
  EXPECT_EQ(noisy_sentence(s, NoiseSpec{}, 100, Seed(1)), s);
}

TEST(Noise, LengthArithmetic) {
  const Sentence s{2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
  NoiseSpec spec{0.3, 2, 2, 0};
  auto out = noisy_sentence(s, spec, 100, Seed(2));
  EXPECT_EQ(out.size(), 9u);
  EXPECT_EQ(noisy_sentence(s, spec, 100, Seed(2)), out);
  for (Token t : out) {
    EXPECT_GE(t, kFirstWordToken);
    EXPECT_LT(t, 100u);
  }
}

TEST(Noise, SwapsPreserveMultiset) {
  const Sentence s{2, 3, 4, 5, 6, 7};
  NoiseSpec spec{0.0, 0, 3, 0};
  auto out = noisy_sentence(s, spec, 100, Seed(3));
  auto sorted = out;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(sorted, s);
  EXPECT_NE(out, s);
}

TEST(Noise, DeletionKeepsOneTokenAndCounts) {
  std::vector<TripletRecord> triplets{{{2}, {3, 4}, {5, 6}}};
  NoiseSpec spec{1.0, 0, 0, 7};
  auto noisy = inject_noise(triplets, spec, 100);
  EXPECT_EQ(noisy.triplets[0].src.size(), 1u);
  EXPECT_EQ(noisy.triplets[0].pos.size(), 1u);
  EXPECT_EQ(noisy.clamped_deletions, 3u);
}

TEST(Noise, InjectIsDeterministicAndSentenceLengthsChangeExactly) {
  SyntheticCorpusSpec cs;
  auto triplets = gen_triplets(gen_text(cs), Seed(4));
  NoiseSpec spec{0.5, 3, 3, 11};
  auto a = inject_noise(triplets, spec, cs.vocab_size);
  auto b = inject_noise(triplets, spec, cs.vocab_size);
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    EXPECT_EQ(a.triplets[i].src, b.triplets[i].src);
    const auto n = triplets[i].src.size();
    const auto deleted = static_cast<std::size_t>(std::llround(0.5 * static_cast<double>(n)));
    EXPECT_EQ(a.triplets[i].src.size(), n - deleted + 3);
  }
}

TEST(Subsample, Contract) {
  std::vector<int> data(20);
  std::iota(data.begin(), data.end(), 0);
  auto all = subsample<int>(data, 20, Seed(1));
  auto sorted = all;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(sorted, data);
  EXPECT_TRUE(subsample<int>(data, 0, Seed(1)).empty());
  EXPECT_THROW(subsample<int>(data, 21, Seed(1)), InvalidArgument);
  // Two 10-of-20 draws coincide as sets with probability 1/C(20,10) ~ 5e-6.
  auto a = subsample<int>(data, 10, Seed(2)), b = subsample<int>(data, 10, Seed(3));
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  EXPECT_NE(a, b);
}

TEST(BatchCursor, EpochVisitsEveryIndexOnce) {
  BatchCursor cursor(10, Seed(5));
  std::vector<std::size_t> seen;
  for (int i = 0; i < 5; ++i) {
    auto b = cursor.next(2);
    seen.insert(seen.end(), b.begin(), b.end());
  }
  std::sort(seen.begin(), seen.end());
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(seen[i], i);
  EXPECT_EQ(cursor.epoch(), 0u);
  cursor.next(3);
  EXPECT_EQ(cursor.epoch(), 1u);
}

TEST(BatchCursor, BatchLargerThanDatasetWraps) {
  BatchCursor cursor(3, Seed(6));
  auto b = cursor.next(7);
  EXPECT_EQ(b.size(), 7u);
  BatchCursor empty(0, Seed(6));
  EXPECT_THROW(empty.next(1), InvalidArgument);
}

TEST(PairedStreams, IndependentAndDeterministic) {
  PairedBatchStreams a(50, 30, Seed(7)), b(50, 30, Seed(7));
  for (int i = 0; i < 3; ++i) b.modal().next(4);  // advance only b's modal stream
  for (int i = 0; i < 5; ++i) EXPECT_EQ(a.text().next(8), b.text().next(8));
  PairedBatchStreams c(50, 30, Seed(7));
  auto [t1, m1] = c.next(8, 4);
  PairedBatchStreams d(50, 30, Seed(7));
  auto [t2, m2] = d.next(8, 4);
  EXPECT_EQ(t1, t2);
  EXPECT_EQ(m1, m2);
}

TEST(DatasetIo, RoundTripsAreExact) {
  SyntheticCorpusSpec cs;
  cs.sentences_per_cluster = 5;
  auto corpus = gen_text(cs);
  std::stringstream text;
  write_text_corpus(text, corpus);
  auto corpus_back = read_text_corpus(text);
  ASSERT_EQ(corpus_back.size(), corpus.size());
  EXPECT_EQ(corpus_back[7].tokens, corpus[7].tokens);

  auto pairs = gen_sts_pairs(cs, 20, Seed(1));
  std::stringstream sts;
  write_sts_pairs(sts, pairs);
  auto pairs_back = read_sts_pairs(sts);
  for (std::size_t i = 0; i < pairs.size(); ++i) EXPECT_EQ(pairs_back[i].gold, pairs[i].gold);

  ImageSetSpec is;
  is.per_class = 2;
  auto images = gen_images(is);
  std::stringstream img;
  write_images(img, images);
  auto images_back = read_images(img);
  EXPECT_EQ(images_back[5].pixels, images[5].pixels);

  AudioSetSpec as;
  as.per_class = 2;
  auto clips = gen_audio(as);
  std::stringstream aud;
  write_clips(aud, clips);
  EXPECT_EQ(read_clips(aud)[3].frames, clips[3].frames);

  auto triplets = gen_triplets(corpus, Seed(2));
  std::stringstream tri;
  write_triplets(tri, triplets);
  EXPECT_EQ(read_triplets(tri)[4].neg, triplets[4].neg);
}

TEST(DatasetIo, MalformedInputIsRejected) {
  std::stringstream wrong_header("mmcse-text v1\n0\t2 3\n");
  EXPECT_THROW(read_sts_pairs(wrong_header), FormatError);
  std::stringstream bad_token("mmcse-text v1\n0\t2 x\n");
  EXPECT_THROW(read_text_corpus(bad_token), FormatError);
  EXPECT_THROW(load_sts_pairs("/nonexistent/file.tsv"), FormatError);
}
