#include "floodseg/cli.hpp"

int main(int argc, char** argv) { return floodseg::cli::run_cli(argc, argv); }
