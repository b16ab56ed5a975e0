#include "fedhorizon/cli.hpp"

int main(int argc, char** argv) { return fedhorizon::cli::main(argc, argv); }
