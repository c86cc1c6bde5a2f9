#include <iostream>

#include "mpcnn/cli.hpp"

int main(int argc, char** argv) { return mpcnn::cli::run_synth({argv, argv + argc}, std::cout, std::cerr); }
