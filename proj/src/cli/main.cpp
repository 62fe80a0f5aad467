#include <iostream>

#include "bslab/cli/app.hpp"

int main(int argc, char** argv) {
  return bslab::cli::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
