#include <iostream>

#include "asvae/cli.hpp"

int main(int argc, char** argv) { return asvae::cli::run(argc, argv, std::cout, std::cerr); }
