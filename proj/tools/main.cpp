#include "hazgam/cli.hpp"

int main(int argc, char** argv) { return hazgam::run_cli(argc, argv); }
