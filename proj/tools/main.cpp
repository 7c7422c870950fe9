#include "bias_audit/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return bias_audit::cli::dispatch(args, std::cout, std::cerr);
}
