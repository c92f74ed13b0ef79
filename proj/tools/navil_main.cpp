#include <iostream>

#include "navil/commands.hpp"

int main(int argc, char** argv) { return navil::run_cli(argc, argv, std::cout, std::cerr); }
