#include "sgs/cli.hpp"

int main(int argc, char** argv) { return sgs::run_cli(argc, argv); }
