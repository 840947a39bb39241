#include <iostream>
#include <string>
#include <vector>

#include "avc/cli/cli.hpp"

int main(int argc, char** argv) {
  return avc::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
