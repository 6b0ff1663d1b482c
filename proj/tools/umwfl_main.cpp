#include <iostream>

#include "umwfl/cli.hpp"

int main(int argc, char** argv) { return umwfl::run_cli(argc, argv, std::cout, std::cerr); }
