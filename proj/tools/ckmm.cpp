#include <iostream>

#include "ckmm/cli.hpp"

int main(int argc, char** argv) { return ckmm::run_cli(argc, argv, std::cout, std::cerr); }
