#include "cavmarl/cli/run_cli.hpp"

int main(int argc, char** argv) { return cavmarl::cli::run_cli(argc, argv); }
