#include <iostream>
#include <string>
#include <vector>

#include "statekit/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return statekit::run_cli(args, std::cout, std::cerr);
}
