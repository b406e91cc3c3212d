#include "fragtree/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return fragtree::run_cli(argc, argv, std::cout, std::cerr); }
