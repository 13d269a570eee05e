#include "povmap/cli.hpp"

int main(int argc, char **argv) { return povmap::cli::run_cli(argc, argv); }
