#include <iostream>
#include <string>
#include <vector>

#include "ect/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return ect::run(args, std::cout, std::cerr);
}
