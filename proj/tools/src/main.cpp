#include <iostream>

#include "vmm/cli.hpp"

int main(int argc, char** argv) {
  return vmm::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
