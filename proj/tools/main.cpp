#include <iostream>

#include "evcoord/cli.hpp"

int main(int argc, char** argv) { return evcoord::run_cli(argc, argv, std::cout, std::cerr); }
