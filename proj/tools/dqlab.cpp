#include "dqlab/cli.hpp"

int main(int argc, char** argv) { return dqlab::run_cli(argc, argv); }
