#include "irdual/cli.hpp"

int main(int argc, char** argv) { return irdual::cli::run_cli(argc, argv); }
