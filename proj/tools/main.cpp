#include "cli.hpp"

int main(int argc, char** argv) { return keci::cli::run(argc, argv); }
