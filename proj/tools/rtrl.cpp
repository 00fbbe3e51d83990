#include <iostream>

#include "rtrl/commands.hpp"

int main(int argc, char** argv) { return rtrl::cli::run_cli(argc, argv, std::cout, std::cerr); }
