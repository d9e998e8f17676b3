#include "seleval/cli.hpp"

int main(int argc, char** argv) { return seleval::run_cli(argc, argv); }
