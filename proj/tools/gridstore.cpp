#include <iostream>

#include "gridstore/cli.hpp"

int main(int argc, char** argv) { return gridstore::run_cli(argc, argv, std::cout, std::cerr); }
