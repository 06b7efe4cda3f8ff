#include <iostream>
#include <string>
#include <vector>

#include "mmcse_cli/commands.hpp"
#include "mmcse_cli/experiment.hpp"

int main(int argc, char** argv) {
  mmcse::cli::tune_allocator();
  std::vector<std::string> args(argv + 1, argv + argc);
  return mmcse::cli::run_cli(args, std::cout, std::cerr);
}
