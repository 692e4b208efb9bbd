#include <iostream>

#include "pdgsim/cli.hpp"

int main(int argc, char** argv) { return pdgsim::run_cli(argc, argv, std::cout, std::cerr); }
