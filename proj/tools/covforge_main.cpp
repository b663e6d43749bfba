#include "covforge/cli.hpp"

int main(int argc, char** argv) { return covforge::cli::run(argc, argv); }
