#include "fineas/cli.hpp"

int main(int argc, char** argv) { return fineas::cli::run_cli(argc, argv); }
