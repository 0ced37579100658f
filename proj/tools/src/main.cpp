#include <iostream>

#include "geovit/cli.hpp"

int main(int argc, char** argv) {
  return geovit::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
