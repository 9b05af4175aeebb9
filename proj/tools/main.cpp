#include "cli.hpp"

int main(int argc, char** argv) { return crgtool::run_cli(argc, argv); }
