#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "mmcse/error.hpp"
#include "mmcse/metrics.hpp"
#include "mmcse_cli/commands.hpp"
#include "mmcse_cli/run_config.hpp"

using namespace mmcse;
using namespace mmcse::cli;
namespace fs = std::filesystem;

namespace {

const fs::path kData = MMCSE_TEST_DATA_DIR;

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

// Fresh scratch directory per test.
fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("mmcse_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<std::string> tiny(std::vector<std::string> args, const fs::path& out_dir) {
  args.insert(args.begin() + 1, {"--config", (kData / "tiny.cfg").string()});
  args.push_back("--output_dir");
  args.push_back(out_dir.string());
  return args;
}

// Data rows of a table file, comments and header dropped.
std::vector<std::string> table_rows(const fs::path& path) {
  auto lines = lines_of(slurp(path));
  std::vector<std::string> rows;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty() || lines[i][0] == '#' || lines[i].rfind("sweep\t", 0) == 0) continue;
    rows.push_back(lines[i]);
  }
  return rows;
}

}  // namespace

TEST(RunConfig, DefaultsAreTheDeskConfiguration) {
  RunConfig c;
  EXPECT_EQ(get_config_value(c, "num_layers"), "2");
  EXPECT_EQ(get_config_value(c, "num_heads"), "4");
  EXPECT_EQ(get_config_value(c, "hidden_dim"), "64");
  EXPECT_EQ(get_config_value(c, "ff_dim"), "128");
  EXPECT_EQ(get_config_value(c, "vocab_size"), "512");
  EXPECT_EQ(get_config_value(c, "max_seq_len"), "64");
  EXPECT_EQ(get_config_value(c, "seed"), "42");
  EXPECT_EQ(get_config_value(c, "modal_batch_size"), "48");
  EXPECT_EQ(get_config_value(c, "tau_text"), "0.05");
  EXPECT_EQ(get_config_value(c, "tau_modal"), "0.07");
  EXPECT_EQ(get_config_value(c, "k"), "3");
  EXPECT_NO_THROW(validate(c));
}

TEST(RunConfig, EveryKeyRoundTripsThroughText) {
  RunConfig c;
  set_config_value(c, "hidden-dim", "32");
  set_config_value(c, "text_lr", "0.000123");
  set_config_value(c, "modality", "audio");
  RunConfig back;
  apply_config_text(back, config_text(c));
  EXPECT_EQ(config_text(back), config_text(c));
  EXPECT_EQ(config_hash(back), config_hash(c));
  EXPECT_EQ(back.encoder.hidden_dim, 32u);
  EXPECT_EQ(back.train.text_lr, 0.000123);
  for (const auto& key : config_keys()) EXPECT_FALSE(key.doc.empty()) << key.name;
}

TEST(RunConfig, HashTracksEveryChange) {
  RunConfig a, b;
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
  set_config_value(b, "output_dir", "/tmp/other");
  EXPECT_EQ(config_hash(a), config_hash(b));
  set_config_value(b, "omega", "0.5");
  EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(RunConfig, RejectsUnknownKeysAndBadValues) {
  RunConfig c;
  EXPECT_THROW(set_config_value(c, "no_such_key", "1"), ConfigError);
  EXPECT_THROW(set_config_value(c, "num_layers", "two"), ConfigError);
  EXPECT_THROW(set_config_value(c, "num_layers", "3x"), ConfigError);
  EXPECT_THROW(set_config_value(c, "modality", "video"), ConfigError);
  EXPECT_THROW(apply_config_text(c, "version=2\n"), ConfigError);
  EXPECT_THROW(apply_config_text(c, "num_layers\n"), ConfigError);
}

TEST(RunConfig, CommentsAndBlankLinesAreIgnored) {
  RunConfig c;
  apply_config_text(c, "version=1\n# a comment\n\nnum_layers = 3  # trailing\n");
  EXPECT_EQ(c.encoder.num_layers, 3u);
}

TEST(RunConfig, EnvironmentOverridesFile) {
  RunConfig c;
  ::setenv("MMCSE_SEED", "7", 1);
  ::setenv("MMCSE_OUTPUT_DIR", "/tmp/elsewhere", 1);
  apply_environment(c);
  ::unsetenv("MMCSE_SEED");
  ::unsetenv("MMCSE_OUTPUT_DIR");
  EXPECT_EQ(c.train.seed, 7u);
  EXPECT_EQ(c.output_dir, "/tmp/elsewhere");
}

TEST(RunConfig, CrossFieldValidation) {
  RunConfig c;
  set_config_value(c, "num_heads", "5");
  EXPECT_ANY_THROW(validate(c));
  RunConfig d;
  set_config_value(d, "max_seq_len", "10");
  EXPECT_ANY_THROW(validate(d));
}

TEST(NoiseGrid, ParsesLevelsInOrder) {
  auto grid = parse_noise_grid("0,0,0;0.3,2,2;0.5,3,3");
  ASSERT_EQ(grid.size(), 3u);
  EXPECT_TRUE(grid[0].spec.is_clean());
  EXPECT_EQ(grid[1].spec.p_delete, 0.3);
  EXPECT_EQ(grid[1].spec.n_insert, 2u);
  EXPECT_EQ(grid[2].spec.n_swap, 3u);
  EXPECT_EQ(grid[2].label, "0.5,3,3");
  EXPECT_THROW(parse_noise_grid("0.1,1"), ConfigError);
  EXPECT_THROW(parse_noise_grid("1.5,0,0"), ConfigError);
  EXPECT_EQ(parse_number_list("0.1,0.3,1.0").size(), 3u);
  EXPECT_EQ(parse_word_list("supcon,simclr"), (std::vector<std::string>{"supcon", "simclr"}));
}

TEST(Cli, HelpAndUsageErrors) {
  auto help = run({"--help"});
  EXPECT_EQ(help.code, 0);
  EXPECT_NE(help.out.find("train"), std::string::npos);
  EXPECT_NE(help.out.find("selftest"), std::string::npos);
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  EXPECT_EQ(run({"eval", "--checkpoint", "x"}).code, 1);  // --dataset missing
  const auto dir = scratch("usage");
  auto bad_key = run(tiny({"train", "--no_such_key", "1"}, dir));
  EXPECT_EQ(bad_key.code, 1);
  EXPECT_NE(bad_key.err.find("no_such_key"), std::string::npos);
}

TEST(Cli, ListKeysShowsEffectiveValues) {
  auto r = run({"--list-keys"});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(lines_of(r.out).size(), config_keys().size());
  EXPECT_NE(r.out.find("hidden_dim=64"), std::string::npos);
}

TEST(Cli, SelftestPassesAndCatchesBrokenGradients) {
  auto ok = run({"selftest", "--instances", "10"});
  EXPECT_EQ(ok.code, 0) << ok.out << ok.err;
  EXPECT_EQ(ok.out.find("FAIL"), std::string::npos) << ok.out;
  auto broken = run({"selftest", "--instances", "10", "--perturb-gradient", "1e-3"});
  EXPECT_EQ(broken.code, 2);
  EXPECT_NE(broken.out.find("FAIL"), std::string::npos);
}

TEST(Cli, EvalMatchesGoldenReport) {
  const auto dir = scratch("golden");
  const auto report = dir / "report.json";
  auto r = run({"eval", "--config", (kData / "tiny.cfg").string(), "--checkpoint",
                (kData / "golden_checkpoint.bin").string(), "--dataset", (kData / "golden_pairs.tsv").string(),
                "--output", report.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto got = MetricsReport::from_json(slurp(report));
  const auto want = MetricsReport::from_json(slurp(kData / "golden_report.json"));
  EXPECT_NEAR(got.spearman, want.spearman, 1e-12);
  EXPECT_NEAR(got.alignment, want.alignment, 1e-12);
  EXPECT_NEAR(got.uniformity_log, want.uniformity_log, 1e-12);
  EXPECT_NEAR(got.uniformity_raw, want.uniformity_raw, 1e-12);
  EXPECT_EQ(got.metadata.seed, want.metadata.seed);
  EXPECT_EQ(got.metadata.step, want.metadata.step);
  EXPECT_EQ(got.metadata.config_hash, want.metadata.config_hash);
}

TEST(Cli, EvalIsByteIdenticalAcrossRuns) {
  std::vector<std::string> args{"eval", "--config", (kData / "tiny.cfg").string(), "--checkpoint",
                                (kData / "golden_checkpoint.bin").string(), "--dataset",
                                (kData / "golden_pairs.tsv").string()};
  auto a = run(args), b = run(args);
  ASSERT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
}

TEST(Cli, EvalMissingInputsFail) {
  auto r = run({"eval", "--checkpoint", "/nonexistent/ckpt.bin", "--dataset",
                (kData / "golden_pairs.tsv").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_FALSE(r.err.empty());
  auto bad_data = run({"eval", "--checkpoint", (kData / "golden_checkpoint.bin").string(), "--dataset",
                       (kData / "tiny.cfg").string()});
  EXPECT_EQ(bad_data.code, 1);
}

TEST(Cli, TrainWritesArtifactsDeterministically) {
  const auto a = scratch("train_a"), b = scratch("train_b");
  ASSERT_EQ(run(tiny({"train"}, a)).code, 0);
  ASSERT_EQ(run(tiny({"train"}, b)).code, 0);
  for (const char* f : {"checkpoint.bin", "train_log.tsv", "report.json", "config.txt"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
  }
  EXPECT_EQ(slurp(a / "checkpoint.bin"), slurp(b / "checkpoint.bin"));
  EXPECT_EQ(slurp(a / "train_log.tsv"), slurp(b / "train_log.tsv"));
  EXPECT_EQ(slurp(a / "report.json"), slurp(b / "report.json"));
  EXPECT_EQ(lines_of(slurp(a / "train_log.tsv")).front(), "# mmcse-train-log v1");
}

TEST(Cli, ZeroStepTrainReproducesTheGoldenCheckpoint) {
  const auto dir = scratch("train_zero");
  ASSERT_EQ(run(tiny({"train", "--max_steps", "0"}, dir)).code, 0);
  EXPECT_EQ(slurp(dir / "checkpoint.bin"), slurp(kData / "golden_checkpoint.bin"));
}

TEST(Cli, CommandLineOverridesConfigFile) {
  const auto dir = scratch("override");
  ASSERT_EQ(run(tiny({"train", "--max_steps=1", "--seed", "9"}, dir)).code, 0);
  const auto cfg = slurp(dir / "config.txt");
  EXPECT_NE(cfg.find("max_steps=1\n"), std::string::npos);
  EXPECT_NE(cfg.find("seed=9\n"), std::string::npos);
  EXPECT_NE(cfg.find("hidden_dim=16\n"), std::string::npos);
}

TEST(Cli, ModalityFlagSelectsTheSecondTask) {
  struct Case {
    std::vector<std::string> flags;
    std::string modal_row;
  };
  const std::vector<Case> cases{
      {{"--modality", "none"}, ""},
      {{"--modality", "image"}, "supcon_image"},
      {{"--modality", "image", "--modal_loss", "simclr"}, "simclr_image"},
      {{"--modality", "audio"}, "supcon_audio"},
      {{"--modality", "audio", "--modal-loss", "simclr"}, "simclr_audio"},
  };
  for (const auto& c : cases) {
    const auto dir = scratch("modality");
    std::vector<std::string> args{"train"};
    args.insert(args.end(), c.flags.begin(), c.flags.end());
    ASSERT_EQ(run(tiny(args, dir)).code, 0);
    const auto log = slurp(dir / "train_log.tsv");
    EXPECT_NE(log.find("\ttext_unsup\t"), std::string::npos);
    if (c.modal_row.empty()) {
      EXPECT_EQ(log.find("_image\t"), std::string::npos);
      EXPECT_EQ(log.find("_audio\t"), std::string::npos);
    } else {
      EXPECT_NE(log.find("\t" + c.modal_row + "\t"), std::string::npos) << c.modal_row;
    }
  }
}

TEST(Cli, SupervisedTrainingUsesTriplets) {
  const auto dir = scratch("supervised");
  ASSERT_EQ(run(tiny({"train", "--supervised_text", "true", "--noise", "0.3,1,1"}, dir)).code, 0);
  EXPECT_NE(slurp(dir / "train_log.tsv").find("\ttext_sup\t"), std::string::npos);
}

TEST(Cli, GenDataWritesEveryDataset) {
  const auto dir = scratch("gen");
  ASSERT_EQ(run(tiny({"gen-data"}, dir)).code, 0);
  for (const char* f : {"text.tsv", "triplets.tsv", "dev_sts.tsv", "test_sts.tsv", "images.tsv", "audio.tsv"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  // 4 clusters x 16 sentences plus the header line.
  EXPECT_EQ(lines_of(slurp(dir / "text.tsv")).size(), 65u);
  EXPECT_EQ(lines_of(slurp(dir / "test_sts.tsv")).size(), 41u);

  const auto only = scratch("gen_sts");
  ASSERT_EQ(run(tiny({"gen-data", "--kind", "sts"}, only)).code, 0);
  EXPECT_TRUE(fs::exists(only / "dev_sts.tsv"));
  EXPECT_FALSE(fs::exists(only / "text.tsv"));
  EXPECT_EQ(slurp(only / "test_sts.tsv"), slurp(dir / "test_sts.tsv"));
  EXPECT_EQ(run(tiny({"gen-data", "--kind", "video"}, scratch("gen_bad"))).code, 1);
}

TEST(Cli, RetrieveRanksTheQueryItselfFirst) {
  const auto dir = scratch("retrieve");
  ASSERT_EQ(run(tiny({"gen-data", "--kind", "text"}, dir)).code, 0);
  const auto corpus = (dir / "text.tsv").string();
  const auto ckpt = (kData / "golden_checkpoint.bin").string();
  auto r = run(tiny({"retrieve", "--checkpoint", ckpt, "--corpus", corpus, "--query-index", "5"}, dir));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto lines = lines_of(r.out);
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(lines[0].rfind("1\t1.0000\t", 0), 0u) << lines[0];
  EXPECT_EQ(lines[1].rfind("2\t", 0), 0u);

  // The same sentence given as token ids ranks identically.
  const auto query_tokens = lines[0].substr(lines[0].rfind('\t') + 1);
  auto by_tokens = run(tiny({"retrieve", "--checkpoint", ckpt, "--corpus", corpus, "--query", query_tokens}, dir));
  ASSERT_EQ(by_tokens.code, 0) << by_tokens.err;
  EXPECT_EQ(by_tokens.out, r.out);

  auto five = run(tiny({"retrieve", "--checkpoint", ckpt, "--corpus", corpus, "--query-index", "0", "--k", "5"}, dir));
  EXPECT_EQ(lines_of(five.out).size(), 5u);
  auto too_many =
      run(tiny({"retrieve", "--checkpoint", ckpt, "--corpus", corpus, "--query-index", "0", "--k", "65"}, dir));
  EXPECT_EQ(too_many.code, 1);
}

TEST(Cli, AblateNoiseWritesOneRowPerLevel) {
  const auto dir = scratch("ablate_noise");
  ASSERT_EQ(run(tiny({"ablate", "--sweep", "noise"}, dir)).code, 0);
  const auto rows = table_rows(dir / "ablate_noise.tsv");
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].rfind("noise\t0,0,0\t", 0), 0u);
  EXPECT_EQ(rows[3].rfind("noise\t0.5,3,3\t", 0), 0u);
  EXPECT_TRUE(fs::exists(dir / "ablate_noise.svg"));
  EXPECT_EQ(lines_of(slurp(dir / "ablate_noise.tsv")).front(), "# mmcse-table v1");
}

TEST(Cli, AblateSubsampleAndLossVariant) {
  const auto dir = scratch("ablate_sub");
  ASSERT_EQ(run(tiny({"ablate", "--sweep", "subsample"}, dir)).code, 0);
  EXPECT_EQ(table_rows(dir / "ablate_subsample.tsv").size(), 3u);

  EXPECT_EQ(run(tiny({"ablate", "--sweep", "loss_variant"}, scratch("ablate_lv_none"))).code, 1);
  const auto lv = scratch("ablate_lv");
  ASSERT_EQ(run(tiny({"ablate", "--sweep", "loss_variant", "--modality", "image"}, lv)).code, 0);
  const auto rows = table_rows(lv / "ablate_loss_variant.tsv");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].rfind("loss_variant\tsupcon\t", 0), 0u);
  EXPECT_EQ(rows[1].rfind("loss_variant\tsimclr\t", 0), 0u);
}

TEST(Cli, AblateSeedsAggregatesMeanAndSpread) {
  const auto dir = scratch("ablate_seeds");
  ASSERT_EQ(run(tiny({"ablate", "--sweep", "seeds", "--sweep_seeds", "3"}, dir)).code, 0);
  const auto rows = table_rows(dir / "ablate_seeds.tsv");
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[3].rfind("seeds\tall\t3\t", 0), 0u);
  double spearman[3];
  for (int i = 0; i < 3; ++i) {
    std::istringstream cols(rows[static_cast<std::size_t>(i)]);
    std::string sweep, grid, seeds;
    cols >> sweep >> grid >> seeds >> spearman[i];
  }
  std::istringstream all(rows[3]);
  std::string sweep, grid, seeds;
  double mean = 0, spread = 0;
  all >> sweep >> grid >> seeds >> mean >> spread;
  EXPECT_NEAR(mean, (spearman[0] + spearman[1] + spearman[2]) / 3.0, 1e-12);
  EXPECT_GT(spread, 0.0);
  EXPECT_EQ(run(tiny({"ablate", "--sweep", "seeds", "--sweep_seeds", "1"}, scratch("ablate_one"))).code, 1);
  EXPECT_EQ(run(tiny({"ablate", "--sweep", "bogus"}, scratch("ablate_bogus"))).code, 1);
}
