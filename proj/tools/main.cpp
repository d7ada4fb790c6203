#include "cli.hpp"

int main(int argc, char** argv) { return weasul::cli::run_cli(argc, argv); }
