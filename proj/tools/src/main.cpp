#include <iostream>

#include "masolab/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return masolab::run_cli(args, std::cout, std::cerr);
}
