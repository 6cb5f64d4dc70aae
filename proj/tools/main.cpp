#include "cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return istanet::cli::run(argc, argv, std::cout, std::cerr); }
