#include <iostream>

#include "ghn/cli.hpp"

int main(int argc, char** argv) {
  return ghn::run_command(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
