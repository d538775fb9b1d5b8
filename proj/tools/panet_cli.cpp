#include "panet/cli/cli.hpp"

int main(int argc, char** argv) { return panet::cli::run(argc, argv); }
