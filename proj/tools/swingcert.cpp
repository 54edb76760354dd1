#include <iostream>
#include <string>
#include <vector>

#include "swingcert/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return swingcert::cli::run(args, std::cout, std::cerr);
}
