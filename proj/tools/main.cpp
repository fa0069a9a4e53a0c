#include "crys/cli.hpp"

int main(int argc, char** argv) { return crys::run_cli(argc, argv); }
