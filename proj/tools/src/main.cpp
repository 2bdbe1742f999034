#include <iostream>
#include <string>
#include <vector>

#include "channel_axes_cli/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return channel_axes::cli::run(args, std::cout, std::cerr);
}
