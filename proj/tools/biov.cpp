#include "biov/cli/cli.hpp"

int main(int argc, char** argv) { return biov::cli_dispatch(argc, argv); }
