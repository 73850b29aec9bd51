#include "marl/cli.hpp"

int main(int argc, char** argv) { return marl::cli::run(argc, argv); }
