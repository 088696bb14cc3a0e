// SPDX-License-Identifier: Apache-2.0

#include "dmgd/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
  return dmgd::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
