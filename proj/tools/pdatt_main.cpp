#include "pdatt/cli.hpp"

int main(int argc, char** argv) { return pdatt::run_cli(argc, argv); }
