#include <iostream>
#include <string>
#include <vector>

#include "dform/cli.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv, argv + argc);
  return dform::cli::run(args, std::cout, std::cerr);
}
