#include "tapglass/cli.hpp"

int main(int argc, char** argv) { return tapglass::cli::run_cli(argc, argv); }
