#include <vector>

#include "aada/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return aada::cli::run(args);
}
