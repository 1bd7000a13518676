#include <iostream>

#include "rerand/cli.hpp"

int main(int argc, char** argv) { return rerand::main_entry(argc, argv, std::cout, std::cerr); }
