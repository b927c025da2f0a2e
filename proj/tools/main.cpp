#include <iostream>

#include "tfcl/cli.hpp"

int main(int argc, char** argv) { return tfcl::run_cli(argc, argv, std::cout, std::cerr); }
