#include <iostream>

#include "ctsynth/cli.hpp"

int main(int argc, char** argv) { return ctsynth::run_cli(argc, argv, std::cout, std::cerr); }
