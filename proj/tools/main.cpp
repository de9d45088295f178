#include <iostream>
#include <string>
#include <vector>

#include "cap2aug/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cap2aug::cli::run(args, std::cout, std::cerr);
}
