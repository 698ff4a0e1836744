#include "madda/experiment/cli.hpp"

int main(int argc, char** argv) { return madda::experiment::run_cli(argc, argv); }
