#include <iostream>

#include "siamreid/cli.hpp"

int main(int argc, char** argv) {
  return siamreid::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
