#include "dga/cli.hpp"

int main(int argc, char** argv) { return dga::run_cli(argc, argv); }
