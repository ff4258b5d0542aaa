#include <iostream>

#include "cli.h"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return noisylab::cli::run(args, std::cout, std::cerr);
}
