#include "hyperinf/cli.hpp"

int main(int argc, char** argv) { return hyperinf::cli::main(argc, argv); }
