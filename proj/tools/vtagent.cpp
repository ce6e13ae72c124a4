#include <cstdlib>
#include <iostream>

#include "vtagent/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return vtagent::cli::run(args, std::cout, std::cerr,
                           [](const char* name) { return std::getenv(name); });
}
