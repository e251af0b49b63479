#include "tdf/cli.hpp"

int main(int argc, char** argv) { return tdf::cli::run_cli(argc, argv); }
