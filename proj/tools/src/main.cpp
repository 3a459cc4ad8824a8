#include <iostream>

#include "mitonet_cli/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return mitonet::cli::dispatch(args, std::cout, std::cerr);
}
