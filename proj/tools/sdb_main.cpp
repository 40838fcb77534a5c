#include <iostream>
#include <string>
#include <vector>

#include "sdb/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return sdb::run_cli(args, std::cout, std::cerr);
}
