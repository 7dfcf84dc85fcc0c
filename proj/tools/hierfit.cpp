#include <iostream>

#include "hierfit/cli.hpp"

int main(int argc, char** argv) { return hierfit::cli::run_cli(argc, argv, std::cout, std::cerr); }
