#include <iostream>

#include "sinkdrift/cli.hpp"

int main(int argc, char** argv) { return sinkdrift::cli::run(argc, argv, std::cout, std::cerr); }
