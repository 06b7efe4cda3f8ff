#include "mmcse_cli/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "mmcse/checkpoint.hpp"
#include "mmcse/dataset_io.hpp"
#include "mmcse/error.hpp"
#include "mmcse_cli/experiment.hpp"
#include "mmcse_cli/plot.hpp"

namespace mmcse::cli {

namespace fs = std::filesystem;

namespace {

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw FormatError("failed writing '" + path.string() + "'");
}

fs::path prepare_output_dir(const RunConfig& config) {
  fs::path dir(config.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw FormatError("cannot create output directory '" + dir.string() + "': " + ec.message());
  return dir;
}

std::string fixed(double v, int digits) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string full(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join_tokens(const Sentence& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(s[i]);
  }
  return out;
}

Sentence parse_tokens(const std::string& text) {
  Sentence out;
  std::istringstream in(text);
  std::string word;
  while (in >> word) {
    std::size_t pos = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(word, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != word.size()) throw InvalidArgument("query token '" + word + "' is not an integer id");
    out.push_back(static_cast<Token>(v));
  }
  return out;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

int cmd_train(const RunConfig& config, std::ostream& out, std::ostream& err) {
  validate(config);
  const fs::path dir = prepare_output_dir(config);
  write_file(dir / "config.txt", config_text(config));
  const Datasets data = build_datasets(config);
  if (data.clamped_deletions > 0) {
    err << "warning: deletion would have emptied " << data.clamped_deletions << " sentences; one token kept in each\n";
  }
  std::ofstream log(dir / "train_log.tsv", std::ios::trunc);
  if (!log) throw FormatError("cannot write training log in '" + dir.string() + "'");
  log << "# mmcse-train-log v1\n";
  const RunOutcome outcome = run_experiment(config, data, &log);
  save_checkpoint(dir / "checkpoint.bin", outcome.model);
  write_file(dir / "report.json", outcome.report.to_json());
  out << "best dev spearman " << fixed(outcome.result.selection.best_validation_score, 4) << " at step "
      << outcome.result.selection.best_step << "; held-out spearman " << fixed(outcome.report.spearman, 4)
      << ", alignment " << fixed(outcome.report.alignment, 4) << ", uniformity(log) "
      << fixed(outcome.report.uniformity_log, 4) << "\n"
      << "wrote " << (dir / "checkpoint.bin").string() << ", " << (dir / "train_log.tsv").string() << ", "
      << (dir / "report.json").string() << "\n";
  return kExitOk;
}

int cmd_eval(const RunConfig& config, const EvalRequest& request, std::ostream& out, std::ostream&) {
  if (request.checkpoint.empty() || request.dataset.empty()) {
    throw ConfigError("eval needs --checkpoint and --dataset");
  }
  Encoder model = load_checkpoint(request.checkpoint);
  const ScoredPairSet pairs = load_sts_pairs(request.dataset);
  MetricsReport report = eval_sts(model, pairs, config.eval);
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(fnv1a64(encoder_config_text(model.config()))));
  report.metadata = {config.train.seed, 0, hash};
  const std::string json = report.to_json();
  if (request.output.empty()) {
    out << json;
  } else {
    write_file(request.output, json);
  }
  return kExitOk;
}

int cmd_selftest(const CheckOptions& options, std::ostream& out, std::ostream&) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto results = run_selftest(options);
  const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  bool all = true;
  out << "check\tstatus\tseconds\tdetail\n";
  for (const auto& r : results) {
    all = all && r.passed;
    out << r.name << '\t' << (r.passed ? "PASS" : "FAIL") << '\t' << fixed(r.seconds, 2) << '\t' << r.detail << '\n';
  }
  out << "total\t" << (all ? "PASS" : "FAIL") << '\t' << fixed(total, 2) << '\t' << results.size() << " checks\n";
  return all ? kExitOk : kExitFailure;
}

Sweep parse_sweep(const std::string& name) {
  if (name == "noise") return Sweep::Noise;
  if (name == "subsample") return Sweep::Subsample;
  if (name == "seeds") return Sweep::Seeds;
  if (name == "loss_variant" || name == "loss-variant") return Sweep::LossVariant;
  throw ConfigError("unknown sweep '" + name + "' (expected noise, subsample, seeds or loss_variant)");
}

namespace {

struct Arm {
  std::string label;
  RunConfig config;
  std::size_t seeds = 1;
};

std::vector<Arm> sweep_arms(const RunConfig& base, Sweep sweep, std::string& sweep_name, std::string& axis) {
  std::vector<Arm> arms;
  switch (sweep) {
    case Sweep::Noise: {
      sweep_name = "noise";
      axis = "noise (p_delete, n_insert, n_swap)";
      for (const auto& level : parse_noise_grid(base.noise_grid)) {
        RunConfig c = base;
        c.train.supervised_text = true;
        const auto seed = c.noise.seed;
        c.noise = level.spec;
        c.noise.seed = seed;
        arms.push_back({level.label, c, base.ablation_seeds});
      }
      break;
    }
    case Sweep::Subsample: {
      sweep_name = "subsample";
      axis = "fraction of triplets";
      for (double f : parse_number_list(base.subsample_grid)) {
        if (!(f > 0.0 && f <= 1.0)) throw ConfigError("subsample fractions must lie in (0, 1]");
        RunConfig c = base;
        c.train.supervised_text = true;
        c.subsample_fraction = f;
        std::ostringstream label;
        label << f;
        arms.push_back({label.str(), c, base.ablation_seeds});
      }
      break;
    }
    case Sweep::Seeds: {
      sweep_name = "seeds";
      axis = "seed";
      if (base.sweep_seeds < 2) throw ConfigError("the seeds sweep needs sweep_seeds >= 2");
      for (std::size_t s = 0; s < base.sweep_seeds; ++s) {
        RunConfig c = base;
        c.train.seed = base.train.seed + s;
        arms.push_back({std::to_string(c.train.seed), c, 1});
      }
      break;
    }
    case Sweep::LossVariant: {
      sweep_name = "loss_variant";
      axis = "modal loss";
      if (base.train.modality == Modality::None) {
        throw ConfigError("the loss_variant sweep needs modality image or audio");
      }
      for (const auto& v : parse_word_list(base.loss_variant_grid)) {
        RunConfig c = base;
        set_config_value(c, "modal_loss", v);
        arms.push_back({v, c, base.ablation_seeds});
      }
      break;
    }
  }
  if (arms.empty()) throw ConfigError("empty sweep grid");
  for (const auto& a : arms) validate(a.config);
  return arms;
}

struct ArmSummary {
  std::vector<MetricsReport> reports;
};

std::string table_row(const std::string& sweep, const std::string& label, const std::vector<MetricsReport>& reports) {
  std::vector<double> sp, al, un;
  for (const auto& r : reports) {
    sp.push_back(r.spearman);
    al.push_back(r.alignment);
    un.push_back(r.uniformity_log);
  }
  auto stat = [](const std::vector<double>& v) {
    return v.size() >= 2 ? mean_std(v) : MetricStat{v.front(), 0.0};
  };
  const auto s = stat(sp), a = stat(al), u = stat(un);
  std::ostringstream row;
  row << sweep << '\t' << label << '\t' << reports.size() << '\t' << full(s.mean) << '\t' << full(s.std) << '\t'
      << full(median(sp)) << '\t' << full(a.mean) << '\t' << full(a.std) << '\t' << full(u.mean) << '\t' << full(u.std)
      << '\n';
  return row.str();
}

}  // namespace

int cmd_ablate(const RunConfig& config, Sweep sweep, std::ostream& out, std::ostream& err) {
  validate(config);
  std::string name, axis;
  const auto arms = sweep_arms(config, sweep, name, axis);
  const fs::path dir = prepare_output_dir(config);
  const fs::path arm_dir = dir / "arms";
  fs::create_directories(arm_dir);
  write_file(dir / "config.txt", config_text(config));

  const fs::path table_path = dir / ("ablate_" + name + ".tsv");
  std::ofstream table(table_path, std::ios::trunc);
  if (!table) throw FormatError("cannot write '" + table_path.string() + "'");
  table << "# mmcse-table v1\n"
        << "sweep\tgrid\tseeds\tspearman_mean\tspearman_std\tspearman_median\talignment_mean\talignment_std\t"
           "uniformity_log_mean\tuniformity_log_std\n";
  table.flush();

  std::vector<std::string> ticks;
  PlotSeries spearman_series{"spearman (held-out)", {}, {}};
  std::vector<MetricsReport> all_reports;
  for (std::size_t a = 0; a < arms.size(); ++a) {
    const Arm& arm = arms[a];
    std::vector<MetricsReport> reports;
    for (std::size_t s = 0; s < arm.seeds; ++s) {
      RunConfig c = arm.config;
      c.train.seed = arm.config.train.seed + s;
      const Datasets data = build_datasets(c);
      const std::string stem = name + "_" + std::to_string(a) + "_seed" + std::to_string(c.train.seed);
      std::ofstream log(arm_dir / (stem + ".tsv"), std::ios::trunc);
      log << "# mmcse-train-log v1\n";
      err << "[" << name << " " << arm.label << " seed " << c.train.seed << "] training\n";
      const RunOutcome outcome = run_experiment(c, data, &log);
      write_file(arm_dir / (stem + ".json"), outcome.report.to_json());
      reports.push_back(outcome.report);
      all_reports.push_back(outcome.report);
    }
    table << table_row(name, arm.label, reports);
    table.flush();
    ticks.push_back(arm.label);
    std::vector<double> sp;
    for (const auto& r : reports) sp.push_back(r.spearman);
    spearman_series.values.push_back(sp.size() >= 2 ? mean_std(sp).mean : sp.front());
    spearman_series.errors.push_back(sp.size() >= 2 ? mean_std(sp).std : 0.0);
  }
  if (sweep == Sweep::Seeds) table << table_row(name, "all", all_reports);
  table.flush();

  const fs::path plot_path = dir / ("ablate_" + name + ".svg");
  write_file(plot_path, render_line_plot_svg("held-out spearman by " + name, axis, "spearman", ticks, {spearman_series}));
  out << "wrote " << table_path.string() << " and " << plot_path.string() << "\n";
  return kExitOk;
}

int cmd_retrieve(const RunConfig& config, const RetrieveRequest& request, std::ostream& out, std::ostream&) {
  if (request.checkpoint.empty() || request.corpus.empty()) throw ConfigError("retrieve needs --checkpoint and --corpus");
  Encoder model = load_checkpoint(request.checkpoint);
  const auto corpus = load_text_corpus(request.corpus);
  if (corpus.empty()) throw InvalidArgument("empty corpus");
  if (config.k > corpus.size()) {
    throw InvalidArgument("k=" + std::to_string(config.k) + " exceeds corpus size " + std::to_string(corpus.size()));
  }
  Sentence query;
  if (request.query_index) {
    if (*request.query_index >= corpus.size()) throw InvalidArgument("query index out of range");
    query = corpus[*request.query_index].tokens;
  } else if (!request.query.empty()) {
    query = parse_tokens(request.query);
  } else {
    throw ConfigError("retrieve needs --query or --query-index");
  }
  std::vector<Sentence> sentences;
  sentences.reserve(corpus.size());
  for (const auto& s : corpus) sentences.push_back(s.tokens);
  const Tensor corpus_emb = embed_sentences(model, sentences);
  const std::vector<Sentence> q{query};
  const Tensor query_emb = embed_sentences(model, q);
  const auto hits = retrieve_topk(query_emb.row(0), corpus_emb, config.k);
  for (std::size_t r = 0; r < hits.size(); ++r) {
    out << r + 1 << '\t' << fixed(hits[r].score, 4) << '\t' << join_tokens(sentences[hits[r].index]) << '\n';
  }
  return kExitOk;
}

int cmd_gen_data(const RunConfig& config, const std::string& kind, std::ostream& out, std::ostream& err) {
  static const std::vector<std::string> kinds{"all", "text", "triplets", "sts", "images", "audio"};
  if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end()) {
    throw ConfigError("unknown dataset kind '" + kind + "' (expected all, text, triplets, sts, images or audio)");
  }
  config.corpus.validate();
  const fs::path dir = prepare_output_dir(config);
  const Seed data_seed(config.data_seed);
  auto want = [&](const char* k) { return kind == "all" || kind == k; };
  std::vector<LabeledSentence> corpus;
  if (want("text") || want("triplets")) corpus = gen_text(config.corpus);
  if (want("text")) {
    save_text_corpus(dir / "text.tsv", corpus);
    out << (dir / "text.tsv").string() << '\n';
  }
  if (want("triplets")) {
    auto triplets = gen_triplets(corpus, data_seed.child("triplets"));
    if (!config.noise.is_clean()) {
      auto noisy = inject_noise(triplets, config.noise, config.corpus.vocab_size);
      if (noisy.clamped_deletions > 0) {
        err << "warning: deletion would have emptied " << noisy.clamped_deletions << " sentences; one token kept\n";
      }
      triplets = std::move(noisy.triplets);
    }
    save_triplets(dir / "triplets.tsv", triplets);
    out << (dir / "triplets.tsv").string() << '\n';
  }
  if (want("sts")) {
    save_sts_pairs(dir / "dev_sts.tsv", gen_sts_pairs(config.corpus, config.dev_pairs, data_seed.child("dev")));
    save_sts_pairs(dir / "test_sts.tsv", gen_sts_pairs(config.corpus, config.test_pairs, data_seed.child("test")));
    out << (dir / "dev_sts.tsv").string() << '\n' << (dir / "test_sts.tsv").string() << '\n';
  }
  if (want("images")) {
    save_images(dir / "images.tsv", gen_images(config.images));
    out << (dir / "images.tsv").string() << '\n';
  }
  if (want("audio")) {
    save_clips(dir / "audio.tsv", gen_audio(config.audio));
    out << (dir / "audio.tsv").string() << '\n';
  }
  return kExitOk;
}

namespace {

void apply_overrides(RunConfig& config, const std::vector<std::string>& extras) {
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& arg = extras[i];
    if (arg.rfind("--", 0) != 0 || arg.size() <= 2) throw ConfigError("unexpected argument '" + arg + "'");
    std::string key = arg.substr(2), value;
    if (const auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key.resize(eq);
    } else {
      if (i + 1 >= extras.size()) throw ConfigError("missing value for '" + arg + "'");
      value = extras[++i];
    }
    set_config_value(config, key, value);
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Contrastive sentence embeddings with auxiliary image/audio tasks", "mmcse"};
  app.require_subcommand(0, 1);
  bool list_keys = false;
  app.add_flag("--list-keys", list_keys, "Print every config key with its default and exit");

  std::string config_file;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_file, "key=value config file");
    sub->allow_extras();
    sub->footer("Any config key can be overridden with --key value (see --list-keys).");
  };

  auto* train = app.add_subcommand("train", "Train an encoder and evaluate the selected checkpoint");
  common(train);

  EvalRequest eval_req;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a similarity pair file");
  common(eval);
  eval->add_option("--checkpoint", eval_req.checkpoint, "checkpoint file")->required();
  eval->add_option("--dataset", eval_req.dataset, "similarity pair file")->required();
  eval->add_option("--output", eval_req.output, "write the report here instead of stdout");

  CheckOptions check_opts;
  auto* selftest = app.add_subcommand("selftest", "Gradient, oracle, identity, shape and determinism checks");
  selftest->add_option("--perturb-gradient", check_opts.gradient_perturbation,
                       "add this value to analytic gradients (the check must then fail)");
  selftest->add_option("--instances", check_opts.instances, "random instances per oracle check");

  std::string sweep_name;
  auto* ablate = app.add_subcommand("ablate", "Run a sweep and write a table and plot");
  common(ablate);
  ablate->add_option("--sweep", sweep_name, "noise, subsample, seeds or loss_variant")->required();

  RetrieveRequest ret_req;
  std::size_t query_index = 0;
  auto* retrieve = app.add_subcommand("retrieve", "Nearest corpus sentences for a query");
  common(retrieve);
  retrieve->add_option("--checkpoint", ret_req.checkpoint, "checkpoint file")->required();
  retrieve->add_option("--corpus", ret_req.corpus, "text corpus file")->required();
  retrieve->add_option("--query", ret_req.query, "space-separated token ids");
  auto* qi = retrieve->add_option("--query-index", query_index, "use corpus sentence N as the query");

  std::string kind = "all";
  auto* gen = app.add_subcommand("gen-data", "Write synthetic datasets to the output directory");
  common(gen);
  gen->add_option("--kind", kind, "all, text, triplets, sts, images or audio");

  std::vector<const char*> argv{"mmcse"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    RunConfig config = config_file.empty() ? RunConfig{} : load_config_file(config_file);
    apply_environment(config);
    if (list_keys) {
      for (const auto& key : config_keys()) {
        out << key.name << '=' << get_config_value(config, key.name) << "\t# " << key.doc << '\n';
      }
      return kExitOk;
    }
    CLI::App* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front();
    if (sub == nullptr) {
      err << app.help();
      return kExitUsage;
    }
    if (sub != selftest) apply_overrides(config, sub->remaining());

    if (sub == train) return cmd_train(config, out, err);
    if (sub == eval) return cmd_eval(config, eval_req, out, err);
    if (sub == selftest) return cmd_selftest(check_opts, out, err);
    if (sub == ablate) return cmd_ablate(config, parse_sweep(sweep_name), out, err);
    if (sub == retrieve) {
      if (qi->count() > 0) ret_req.query_index = query_index;
      return cmd_retrieve(config, ret_req, out, err);
    }
    if (sub == gen) return cmd_gen_data(config, kind, out, err);
  } catch (const NumericalAbort& e) {
    err << "numerical abort: " << e.what() << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace mmcse::cli
