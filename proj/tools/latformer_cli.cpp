#include "latformer/config.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return latformer::cli::run_command(args);
}
