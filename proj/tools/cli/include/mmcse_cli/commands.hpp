#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mmcse/encoder.hpp"
#include "mmcse_cli/checks.hpp"
#include "mmcse_cli/run_config.hpp"

namespace mmcse::cli {

// Exit codes shared by every command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitFailure = 2;

int cmd_train(const RunConfig& config, std::ostream& out, std::ostream& err);

struct EvalRequest {
  std::string checkpoint;
  std::string dataset;
  std::string output;  // empty: print to out
};
int cmd_eval(const RunConfig& config, const EvalRequest& request, std::ostream& out, std::ostream& err);

int cmd_selftest(const CheckOptions& options, std::ostream& out, std::ostream& err);

enum class Sweep { Noise, Subsample, Seeds, LossVariant };
Sweep parse_sweep(const std::string& name);
int cmd_ablate(const RunConfig& config, Sweep sweep, std::ostream& out, std::ostream& err);

struct RetrieveRequest {
  std::string checkpoint;
  std::string corpus;
  std::string query;  // space-separated token ids
  std::optional<std::size_t> query_index;
};
int cmd_retrieve(const RunConfig& config, const RetrieveRequest& request, std::ostream& out, std::ostream& err);

int cmd_gen_data(const RunConfig& config, const std::string& kind, std::ostream& out, std::ostream& err);

// Full command line: subcommand, its options, then --key value overrides.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mmcse::cli
