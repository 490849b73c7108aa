#include "apportion/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return apportion::run_cli(argc, argv, std::cout, std::cerr); }
