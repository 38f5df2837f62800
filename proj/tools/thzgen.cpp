#include "thzdiff/cli.hpp"

int main(int argc, char** argv) { return thz::run_cli(argc, argv); }
