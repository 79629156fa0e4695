#include "quann/cli.hpp"

int main(int argc, char** argv) { return quann::run_cli(argc, argv); }
