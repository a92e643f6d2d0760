#include <iostream>

#include "toa_slam/cli.hpp"

int main(int argc, char** argv) { return toa_slam::run_cli(argc, argv, std::cout, std::cerr); }
