#include <iostream>
#include <string>
#include <vector>

#include "hcan/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return hcan::cli::run(args, std::cout, std::cerr);
}
