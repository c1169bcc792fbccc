#include <iostream>
#include <string>
#include <vector>

#include "coinfake/cli.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv, argv + argc);
  return coinfake::cli::run(args, std::cout, std::cerr);
}
