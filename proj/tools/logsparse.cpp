#include <iostream>
#include <string>
#include <vector>

#include "logsparse/cli/commands.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return logsparse::cli::run_cli(args, std::cout, std::cerr);
}
