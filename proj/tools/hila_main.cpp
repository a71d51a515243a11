#include "hila/cli.hpp"

int main(int argc, char** argv) { return hila::run_cli(argc, argv); }
