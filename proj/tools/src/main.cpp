#include <iostream>

#include "rchat/cli.hpp"

int main(int argc, char** argv) {
  return rchat::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
