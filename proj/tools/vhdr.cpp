#include <iostream>

#include "vhdr/cli/commands.hpp"

int main(int argc, char** argv) { return vhdr::run_cli(argc, argv, std::cout, std::cerr); }
