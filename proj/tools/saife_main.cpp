#include <iostream>

#include "saife/cli.hpp"

int main(int argc, char** argv) { return saife::cli::run(argc, argv, std::cout, std::cerr); }
