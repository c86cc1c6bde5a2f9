#include <iostream>

#include "mpcnn/cli.hpp"

int main(int argc, char** argv) { return mpcnn::cli::run({argv, argv + argc}, std::cout, std::cerr); }
