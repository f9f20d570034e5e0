#include <iostream>
#include <string>
#include <vector>

#include "pbm/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return pbm::cli::run(args, std::cout, std::cerr);
}
