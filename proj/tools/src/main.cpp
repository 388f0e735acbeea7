#include <iostream>
#include <string>
#include <vector>

#include "tinydet/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return tinydet::cli::run(args, std::cout, std::cerr);
}
