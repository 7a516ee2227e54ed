#include <iostream>
#include <string>
#include <vector>

#include "crosslag/cli/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return crosslag::cli::run(args, std::cout, std::cerr);
}
