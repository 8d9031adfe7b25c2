#include "ratercap/cli.hpp"

int main(int argc, char** argv) { return ratercap::run_cli(argc, argv); }
