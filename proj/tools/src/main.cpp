#include <iostream>

#include "dascl_cli/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return dascl::cli::run(args, std::cout, std::cerr);
}
