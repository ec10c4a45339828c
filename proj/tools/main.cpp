#include <iostream>

#include "risn/cli.hpp"

int main(int argc, char** argv) { return risn::cli::run_cli(argc, argv, std::cout, std::cerr); }
