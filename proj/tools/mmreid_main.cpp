#include <vector>

#include "mmreid/cli_app.hpp"

int main(int argc, char** argv) {
    return mmreid::cli::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
