#include <string>
#include <vector>

#include "posealign/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return posealign::run_cli(args);
}
