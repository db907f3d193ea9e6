#include <iostream>

#include "rydelec/cli.hpp"

int main(int argc, char** argv) { return rydelec::cli::run(argc, argv, std::cout, std::cerr); }
