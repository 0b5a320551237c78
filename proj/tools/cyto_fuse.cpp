#include <iostream>

#include "cytofuse/cli.hpp"

int main(int argc, char** argv) { return cytofuse::run_cli(argc, argv, std::cout, std::cerr); }
