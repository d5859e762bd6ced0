#include <vector>

#include "gvida/cli.hpp"

int main(int argc, char** argv) {
    return gvida::cli::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
