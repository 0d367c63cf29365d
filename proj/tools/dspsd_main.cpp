#include "dspsd/cli.hpp"

int main(int argc, char** argv) { return dspsd::run_cli(argc, argv); }
